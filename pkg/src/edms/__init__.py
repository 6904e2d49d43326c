"""Explicit-duration Markov switching models.

Inference, decoding and EM learning for regime-switching time series in
which the time spent in each regime follows an explicitly modelled
duration distribution.  Three equivalent encodings of the augmented
regime/duration chain are supported (decreasing count, increasing count,
count-duration), together with the switching linear Gaussian state-space
model, assumed-density approximations and pruning.
"""

from edms import approx, bn, chains, edmsm, edslgssm, hmm, lgssm, oracle

__all__ = [
    "approx",
    "bn",
    "chains",
    "edmsm",
    "edslgssm",
    "hmm",
    "lgssm",
    "oracle",
]

__version__ = "0.1.0"
