"""Neural receiver for superimposed-training MIMO-OFDM links.

Consumes training data exported by the link simulator's tensor-container
format and produces channel estimates and bit LLR grids in the same format
for scoring.  See `models` for the network architectures, `training` for
the three-stage schedule, and `cli` for the command-line entry points.
"""

__version__ = "0.1.0"
