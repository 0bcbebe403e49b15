from .pipeline import (
    DegenerateSpectrumError,
    DisjointSupportError,
    EmptySpectrumError,
    OrderingError,
    ProcessedDataset,
    ProcessedSpectrum,
    RawSpectrum,
    SpectralWindow,
    SpectrumError,
    SpectrumParseError,
    global_window,
    load_dataset,
    minmax_normalize,
    parse_spectrum_file,
    process_corpus,
    read_spectrum,
    resample_to_grid,
    save_dataset,
)
from .spline import ExtrapolationError, InsufficientDataError, Spline, eval_spline, fit_cubic_spline

__all__ = [
    "DegenerateSpectrumError",
    "DisjointSupportError",
    "EmptySpectrumError",
    "ExtrapolationError",
    "InsufficientDataError",
    "OrderingError",
    "ProcessedDataset",
    "ProcessedSpectrum",
    "RawSpectrum",
    "SpectralWindow",
    "Spline",
    "SpectrumError",
    "SpectrumParseError",
    "eval_spline",
    "fit_cubic_spline",
    "global_window",
    "load_dataset",
    "minmax_normalize",
    "parse_spectrum_file",
    "process_corpus",
    "read_spectrum",
    "resample_to_grid",
    "save_dataset",
]
