"""Multi-subject fMRI-to-embedding alignment encoder, built on a small numpy autodiff core."""

__version__ = "0.1.0"
