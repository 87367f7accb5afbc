"""Cancellation-free trigonometric kernels used by the closed forms.

All functions are vectorized and switch to truncated Taylor series below
|s| < 1e-2, where the direct quotients lose most of their digits.
"""

import numpy as np

_SERIES_CUTOFF = 1e-2


def sinc(s: np.ndarray) -> np.ndarray:
    """sin(s)/s with value 1 at s = 0."""
    return np.sinc(np.asarray(s, dtype=float) / np.pi)


def sin_minus_cos_cubed(s: np.ndarray) -> np.ndarray:
    """(sin s − s cos s)/s³, → 1/3 at s = 0."""
    s = np.asarray(s, dtype=float)
    small = np.abs(s) < _SERIES_CUTOFF
    s2 = s * s
    series = 1.0 / 3.0 - s2 / 30.0 + s2**2 / 840.0 - s2**3 / 45360.0
    safe = np.where(small, 1.0, s)
    direct = (np.sin(safe) - safe * np.cos(safe)) / safe**3
    return np.where(small, series, direct)


def arc_minus_sin_cubed(s: np.ndarray) -> np.ndarray:
    """(s − sin s)/s³, → 1/6 at s = 0."""
    s = np.asarray(s, dtype=float)
    small = np.abs(s) < _SERIES_CUTOFF
    s2 = s * s
    series = 1.0 / 6.0 - s2 / 120.0 + s2**2 / 5040.0 - s2**3 / 362880.0
    safe = np.where(small, 1.0, s)
    direct = (safe - np.sin(safe)) / safe**3
    return np.where(small, series, direct)


def generalized_sine(K: float, s: np.ndarray) -> np.ndarray:
    """s_K(s): sin(√K s)/√K, s, or sinh(√−K s)/√−K depending on the sign of K."""
    s = np.asarray(s, dtype=float)
    if K > 0:
        rk = np.sqrt(K)
        return s * sinc(rk * s)
    if K < 0:
        rk = np.sqrt(-K)
        return np.sinh(rk * s) / rk
    return s
