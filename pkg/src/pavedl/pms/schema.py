"""Condition indicators, M&R work types, and the per-section record."""

from dataclasses import dataclass

import numpy as np

FIRST_YEAR = 2000
TARGET_YEAR = 2018
YEARS = tuple(range(FIRST_YEAR, TARGET_YEAR + 1))
INPUT_YEARS = YEARS[:-1]
N_YEARS = len(YEARS)
N_INPUT_YEARS = len(INPUT_YEARS)

RANGES = {
    "percent": (0.0, 100.0),
    "nonneg": (0.0, np.inf),
    "level": (1.0, 4.0),
    "score": (0.0, 100.0),
    "ride": (0.1, 5.0),
}


@dataclass(frozen=True)
class IndicatorDef:
    index: int
    name: str
    description: str
    unit: str
    range_kind: str

    @property
    def discrete(self):
        return self.range_kind == "level"

    @property
    def kind(self):
        return "discrete" if self.discrete else "continuous"

    @property
    def bounds(self):
        return RANGES[self.range_kind]

    @property
    def bounded(self):
        return np.isfinite(self.bounds[1])

    def in_range(self, value):
        lo, hi = self.bounds
        if not (lo <= value <= hi):
            return False
        return not self.discrete or float(value).is_integer()


INDICATORS = (
    IndicatorDef(1, "TX_ACP_RUT_VISUAL_SHALLOW_PCT", "Shallow Rutting", "percentage", "percent"),
    IndicatorDef(2, "TX_ACP_RUT_VISUAL_SEVERE_PCT", "Severe Rutting", "percentage", "percent"),
    IndicatorDef(3, "TX_ACP_RUT_VISUAL_FAILURE_PCT", "Failure Rutting", "percentage", "percent"),
    IndicatorDef(4, "TX_ACP_RUT_VISUAL_DEEP_PCT", "Deep Rutting", "percentage", "percent"),
    IndicatorDef(5, "TX_ACP_RUT_LFT_WP_DPTH_MEAS", "Depth of rutting in the left wheel path", "mil", "nonneg"),
    IndicatorDef(6, "TX_ACP_RUT_RIT_WP_DPTH_MEAS", "Depth of rutting in the right wheel path", "mil", "nonneg"),
    IndicatorDef(7, "TX_ACP_RUT_AVG_WP_DEPTH_MEAS", "Average depth of rutting in the wheel paths", "mil", "nonneg"),
    IndicatorDef(8, "TX_ACP_PATCHING_PCT", "Patching", "percentage", "percent"),
    IndicatorDef(9, "TX_ACP_FAILURE_QTY", "Failures", "quantity", "nonneg"),
    IndicatorDef(10, "TX_ACP_BLOCK_CRACKING_PCT", "Block cracking", "percentage", "percent"),
    IndicatorDef(11, "TX_ACP_ALLIGATOR_CRACKING_PCT", "Alligator cracking", "percentage", "percent"),
    IndicatorDef(12, "TX_ACP_LONGITUDE_CRACKING_PCT", "Longitude cracking", "foot", "nonneg"),
    IndicatorDef(13, "TX_ACP_TRANSVERSE_CRACKING_QTY", "Transverse cracking", "quantity", "nonneg"),
    IndicatorDef(14, "TX_ACP_RAVELING_CODE", "Raveling", "level", "level"),
    IndicatorDef(15, "TX_ACP_FLUSHING_CODE", "Flushing", "level", "level"),
    IndicatorDef(16, "TX_IRI_LEFT_SCORE", "Left IRI", "in/mile", "nonneg"),
    IndicatorDef(17, "TX_IRI_RIGHT_SCORE", "Right IRI", "in/mile", "nonneg"),
    IndicatorDef(18, "TX_IRI_AVERAGE_SCORE", "Avg. IRI", "in/mile", "nonneg"),
    IndicatorDef(19, "TX_RIDE_SCORE", "Ride Score", "-", "ride"),
    IndicatorDef(20, "TX_DISTRESS_SCORE", "Distress Score", "-", "score"),
    IndicatorDef(21, "TX_CONDITION_SCORE", "Condition Score", "-", "score"),
)
INDICATOR_NAMES = tuple(d.name for d in INDICATORS)
N_INDICATORS = len(INDICATORS)
_BY_NAME = {d.name: d for d in INDICATORS}


def indicator(name_or_index):
    """Look up an indicator by Table-style name or 1-based index."""
    if isinstance(name_or_index, (int, np.integer)):
        if not 1 <= name_or_index <= N_INDICATORS:
            raise KeyError(f"indicator index must be 1..{N_INDICATORS}, got {name_or_index}")
        return INDICATORS[name_or_index - 1]
    try:
        return _BY_NAME[name_or_index]
    except KeyError:
        raise KeyError(f"unknown indicator {name_or_index!r}; valid names: {', '.join(INDICATOR_NAMES)}")


@dataclass(frozen=True)
class WorkType:
    row: int
    code: int
    description: str
    count: int


# one-hot position is ``row``; work codes are not unique (9 appears twice)
WORK_TYPES = (
    WorkType(1, None, "Do Nothing", 47217),
    WorkType(2, 9, "SC - Seal Coat", 32763),
    WorkType(3, 12, "RER - Rehabilitation of Existing Road", 9308),
    WorkType(4, 4, "OV - Overlay", 5759),
    WorkType(5, 9, "P05 - Full Width Seal Coat", 3779),
    WorkType(6, 44, "MSC - Miscellaneous construction", 2163),
    WorkType(7, 7, "RES - Restoration", 985),
    WorkType(8, 11, "WF - Widen Freeway", 965),
    WorkType(9, 40, "SP2 - Super-2 Highway", 765),
    WorkType(10, 13, "UPG - Upgrade to Standards Freeway", 575),
    WorkType(11, 5, "WNF - Widen Non-Freeway", 462),
    WorkType(12, 38, "UGN - Upgrade to Standards Non- Freeway", 447),
    WorkType(13, 10, "MSC - Miscellaneous Construction", 228),
    WorkType(14, 22, "HES - Hazard Elimination & Safety", 111),
    WorkType(15, 41, "SSW - Systemic Widening Projects", 98),
    WorkType(16, 28, "NNF - New Location Non-Freeway", 94),
    WorkType(17, 6, "RMS - Routine Maintenance Project (Sealed)", 50),
    WorkType(18, 2, "CNF - Convert Non-Freeway To", 48),
    WorkType(19, 33, "SKP - SKIP - Transportation Enhancement Project", 23),
    WorkType(20, 27, "NLF - New Location Freeway", 8),
)
N_WORK_TYPES = len(WORK_TYPES)
DO_NOTHING = 1


class ValidationError(ValueError):
    """A value violates the indicator or work-type schema."""


@dataclass
class SectionHistory:
    """One section: ``values[year - 2000, indicator - 1]`` for 2000-2018, plus its last work.

    For "Do Nothing" sections ``last_work_year`` is the year the pavement was
    built, so years-since-treatment is its age.
    """

    section_id: str
    values: np.ndarray
    last_work: int
    last_work_year: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.last_work = int(self.last_work)
        self.last_work_year = int(self.last_work_year)

    def value(self, year, name):
        return self.values[year - FIRST_YEAR, indicator(name).index - 1]

    def validate(self):
        if self.values.shape != (N_YEARS, N_INDICATORS):
            raise ValidationError(
                f"section {self.section_id}: expected {N_YEARS}x{N_INDICATORS} values, got {self.values.shape}"
            )
        if not 1 <= self.last_work <= N_WORK_TYPES:
            raise ValidationError(f"section {self.section_id}: work row index {self.last_work} not in 1..20")
        for j, ind in enumerate(INDICATORS):
            for i, year in enumerate(YEARS):
                v = self.values[i, j]
                if not ind.in_range(v):
                    raise ValidationError(
                        f"section {self.section_id}, {year}: {ind.name}={v} outside range {ind.range_kind}"
                    )
        return self

    def __eq__(self, other):
        if not isinstance(other, SectionHistory):
            return NotImplemented
        return (self.section_id == other.section_id and self.last_work == other.last_work
                and self.last_work_year == other.last_work_year
                and np.array_equal(self.values, other.values))
