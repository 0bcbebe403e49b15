from .synthetic import CLASS_PEAKS, COUNTRIES, MicroCorpus, gaussian_peak_dataset, write_micro_corpus

__all__ = ["CLASS_PEAKS", "COUNTRIES", "MicroCorpus", "gaussian_peak_dataset", "write_micro_corpus"]
