"""Country-of-origin classification of Raman mineral spectra with a 1-D ConvNeXt."""

__version__ = "0.1.0"
