"""Smoothing kernels and the rule-of-thumb bandwidth."""
import numpy as np

from .exceptions import DataError

_SQRT_2PI = np.sqrt(2.0 * np.pi)

KERNELS = ("gaussian", "epanechnikov")


def gaussian(u):
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / _SQRT_2PI


def epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def get_kernel(name="gaussian"):
    if callable(name):
        return name
    try:
        return {"gaussian": gaussian, "epanechnikov": epanechnikov}[name.lower()]
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}; choose from {KERNELS}") from None


def kernel_eval(kernel, u):
    """Evaluate ``K(u)`` for a kernel name or callable."""
    out = get_kernel(kernel)(u)
    return float(out) if np.ndim(out) == 0 else out


def rule_of_thumb_bandwidth(s, n, bounded=True):
    """Gaussian rule of thumb with Bernoulli variance and a floor.

    ``max(1.06 * sqrt(s(1-s)) * n**-0.2, n**-0.2 / 10)``. Scores outside
    [0, 1] are rejected when ``bounded``; otherwise the variance term is
    clipped to zero so only the floor applies.
    """
    s = np.asarray(s, dtype=float)
    n = np.asarray(n, dtype=float)
    if np.any(n < 1):
        raise DataError("bandwidth rule needs n >= 1")
    if bounded and (np.any(s < 0) or np.any(s > 1)):
        raise DataError("score outside [0, 1]")
    rate = n ** -0.2
    var = np.clip(s * (1.0 - s), 0.0, None)
    h = np.maximum(1.06 * np.sqrt(var) * rate, rate / 10.0)
    return float(h) if h.ndim == 0 else h
