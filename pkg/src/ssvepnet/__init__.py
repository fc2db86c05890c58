"""Two-stream SSVEP decoding from scalp and ear EEG, with CCA/LDA baselines."""
__version__ = "0.1.0"
