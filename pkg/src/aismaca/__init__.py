"""Multiple-attractor cellular automata classifiers evolved by immune algorithms,
with a convolution-based protein secondary structure predictor."""

__version__ = "0.1.0"
