"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_observations(X, obs_dim: int) -> tuple[np.ndarray, bool]:
    """Coerce one observation or a batch to a finite float64 2D array.

    Returns the array and whether the input was a single vector.
    """
    arr = np.asarray(X)
    single = arr.ndim == 1
    X = check_array(arr.reshape(1, -1) if single else arr, dtype=np.float64)
    if X.shape[1] != obs_dim:
        raise ValueError(f"observations have {X.shape[1]} features, agent expects {obs_dim}")
    return X, single


def check_action(a, act_dim: int = 2) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    if a.shape != (act_dim,) or not np.all(np.isfinite(a)):
        raise ValueError(f"action must be {act_dim} finite numbers")
    return a
