"""Input validation helpers used across the package."""
import numbers

import numpy as np


def check_alpha(alpha, name="alpha"):
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"{name} must lie in the open interval (0, 1), got {alpha}")
    return alpha


def check_probabilities(probs, name="probs", atol=1e-9):
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size < 2:
        raise ValueError(f"{name} needs at least two levels")
    if np.any(probs < 0) or not np.isfinite(probs).all():
        raise ValueError(f"{name} must be finite and non-negative")
    if abs(probs.sum() - 1.0) > atol:
        raise ValueError(f"{name} must sum to 1 (got {probs.sum():.12g})")
    return probs


def check_correlation_matrix(mat, name="correlation matrix", atol=1e-9):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(mat, mat.T, atol=atol):
        raise ValueError(f"{name} must be symmetric")
    if not np.allclose(np.diag(mat), 1.0, atol=atol):
        raise ValueError(f"{name} must have a unit diagonal")
    if np.any(np.abs(mat) > 1.0 + atol):
        raise ValueError(f"{name} entries must lie in [-1, 1]")
    return mat


def check_count(value, name, minimum=0):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_seed(seed):
    """Normalise ``seed`` to a non-negative int accepted by numpy seeding."""
    if seed is None:
        return None
    if isinstance(seed, np.integer):
        seed = int(seed)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise TypeError(f"seed must be an integer or None, got {type(seed).__name__}")
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return seed
