"""Machine-hearing toolkit: spectrograms, a numpy network engine and scene classifiers."""

__version__ = "0.1.0"
