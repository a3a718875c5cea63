"""From-scratch CNN / LSTM / CNN-LSTM pavement-performance models on numpy."""

__version__ = "0.1.0"

from .architectures import Model, ModelSpec, build_cnn, build_cnn_lstm, build_lstm, build_model  # noqa: E402
from .estimators import PavementClassifier, PavementRegressor, SectionEncoder  # noqa: E402
from .serialization import FormatError, ModelContainer, load_model, save_model  # noqa: E402
from .training import (  # noqa: E402
    TrainingConfig,
    TrainingError,
    UndefinedMetricError,
    accuracy,
    evaluate,
    r2_score,
    train,
)
