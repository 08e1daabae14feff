"""Linear vs mel spectrogram comparison for multilabel genre recognition."""

__version__ = "0.1.0"
