"""Transformer condition diagnosis from consecutive dissolved-gas data."""

from ._core import (
    CONDITIONS,
    GASES,
    CompatibilityError,
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    Error,
    GasSeries,
    IoError,
    Model,
    ParseError,
    build_windows,
    evaluate,
    interpolate_gaps,
    load_checkpoint,
    load_series,
    lr_schedule,
    make_model,
    metrics,
    roc_auc,
    save_series,
    synth_generate,
    train,
    verify,
    wilcoxon_rank_sum,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
