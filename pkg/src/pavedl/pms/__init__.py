"""Pavement-management data: schema, CSV I/O, encoding, and synthetic histories."""

from .csvio import (
    IncompleteSectionWarning,
    ParseError,
    ingest_csv,
    load_directory,
    write_directory,
)
from .encoding import (
    Dataset,
    FeatureMatrix,
    IndicatorScaler,
    encode_dataset,
    encode_section,
    fit_normalizer,
    prepare_dataset,
    split,
)
from .schema import (
    INDICATOR_NAMES,
    INDICATORS,
    WORK_TYPES,
    IndicatorDef,
    SectionHistory,
    ValidationError,
    WorkType,
    indicator,
)
from .synthetic import generate_synthetic, simulate
