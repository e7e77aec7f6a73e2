"""Synthetic sequence classification with planted keyword tokens.

Each class owns one keyword token id; a sample is mostly filler tokens
with the class keyword planted at random positions, so most tokens are
redundant by construction and a well-trained pruner can discard them.
"""

from __future__ import annotations

import numpy as np


def make_dataset(n_samples: int, seq_len: int, vocab: int, classes: int,
                 seed: int = 0, keyword_copies: int = 2):
    """Returns (ids int64 (N, n), labels int64 (N,)).

    Token ids [0, vocab - classes) are filler; id vocab - classes + y is
    the keyword of class y.  Position 0 is always filler (the engine's
    classifier reads the first surviving token, which training must
    learn to keep informative).
    """
    if classes < 2 or vocab <= classes:
        raise ValueError("need at least 2 classes and filler tokens")
    if seq_len < keyword_copies + 1:
        raise ValueError("sequence too short for the planted keywords")
    rng = np.random.default_rng(seed)
    filler = vocab - classes
    ids = rng.integers(0, filler, size=(n_samples, seq_len))
    labels = rng.integers(0, classes, size=n_samples)
    for i in range(n_samples):
        pos = rng.choice(np.arange(1, seq_len), size=keyword_copies,
                         replace=False)
        ids[i, pos] = filler + labels[i]
    return ids.astype(np.int64), labels.astype(np.int64)
