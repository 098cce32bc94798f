"""Desk dataset: the 8x8 10-class digits set that ships with scikit-learn.

Pixels are scaled to [0, 1]; the split is deterministic (last 360 samples
held out for evaluation).  Layout is (N, H, W, C) float32.
"""
from __future__ import annotations

import numpy as np
from sklearn.datasets import load_digits

TEST_SIZE = 360
CLASS_COUNT = 10


def desk_dataset():
    digits = load_digits()
    data = (digits.images / 16.0).astype(np.float32)[..., None]  # (N, 8, 8, 1)
    labels = digits.target.astype(np.int32)
    split = len(data) - TEST_SIZE
    return ((data[:split], labels[:split]),
            (data[split:], labels[split:]))
