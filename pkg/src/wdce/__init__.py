"""Wavelet-decoupled contrastive skeleton action recognition on a numpy autodiff core."""

__version__ = "0.1.0"
