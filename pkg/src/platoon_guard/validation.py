"""Input checks shared by the estimator-facing entry points."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array


def check_observations(X) -> np.ndarray:
    """Coerce raw observations to a finite ``(n, 8)`` float array."""
    if hasattr(X, "as_array"):
        X = X.as_array()
    X = check_array(np.atleast_2d(np.asarray(X, dtype=float)), dtype=np.float64,
                    ensure_all_finite=True)
    if X.shape[1] != 8:
        raise ValueError(f"observations must have 8 columns, got {X.shape[1]}")
    return X


def check_action_range(low: float, high: float) -> tuple[float, float]:
    low, high = float(low), float(high)
    if not (np.isfinite(low) and np.isfinite(high) and low < high):
        raise ValueError(f"invalid action range [{low}, {high}]")
    return low, high
