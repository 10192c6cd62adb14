"""Squared maximum mean discrepancy with a Gaussian kernel.

Biased (V-statistic) estimator, diagonal terms included:

    MMD^2 = mean k(x, x') + mean k(y, y') - 2 mean k(x, y),
    k(a, b) = exp(-|a - b|^2 / (2 sigma^2)).
"""

from __future__ import annotations

from typing import Union

import numpy as np

from fedsim.errors import ConfigError, ShapeError

Bandwidth = Union[str, float]


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def _as_sets(X, Y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if len(X) == 0 or len(Y) == 0:
        raise ShapeError("MMD needs two non-empty sample sets")
    if X.shape[1] != Y.shape[1]:
        raise ShapeError(f"feature dims differ: {X.shape[1]} vs {Y.shape[1]}")
    return X, Y


def median_bandwidth(X: np.ndarray, Y: np.ndarray) -> float:
    """Median pairwise distance over the pooled sample; 1.0 if all points coincide."""
    Z = np.vstack([X, Y])
    d = np.sqrt(_sq_dists(Z, Z)[np.triu_indices(len(Z), k=1)])
    d = d[d > 0]
    return float(np.median(d)) if len(d) else 1.0


def resolve_bandwidth(bandwidth: Bandwidth, X: np.ndarray, Y: np.ndarray) -> float:
    if bandwidth == "median":
        return median_bandwidth(X, Y)
    sigma = float(bandwidth)
    if not sigma > 0:
        raise ConfigError(f"bandwidth must be positive, got {bandwidth}", "mmd_bandwidth")
    return sigma


def mmd2(X, Y, bandwidth: Bandwidth = "median") -> float:
    X, Y = _as_sets(X, Y)
    s2 = 2.0 * resolve_bandwidth(bandwidth, X, Y) ** 2
    kxx = np.exp(-_sq_dists(X, X) / s2).mean()
    kyy = np.exp(-_sq_dists(Y, Y) / s2).mean()
    kxy = np.exp(-_sq_dists(X, Y) / s2).mean()
    return float(kxx + kyy - 2.0 * kxy)


def mmd2_and_grad(X, Y, bandwidth: Bandwidth = "median") -> tuple[float, np.ndarray]:
    """MMD^2 and its gradient with respect to X; Y and sigma are held fixed."""
    X, Y = _as_sets(X, Y)
    sigma = resolve_bandwidth(bandwidth, X, Y)
    s2 = 2.0 * sigma**2
    n, m = len(X), len(Y)
    Kxx = np.exp(-_sq_dists(X, X) / s2)
    Kyy = np.exp(-_sq_dists(Y, Y) / s2)
    Kxy = np.exp(-_sq_dists(X, Y) / s2)
    value = Kxx.mean() + Kyy.mean() - 2.0 * Kxy.mean()
    # d k(a, b) / d a = -k(a, b) (a - b) / sigma^2
    gxx = -(2.0 / (n * n * sigma**2)) * (Kxx.sum(1)[:, None] * X - Kxx @ X)
    gxy = (2.0 / (n * m * sigma**2)) * (Kxy.sum(1)[:, None] * X - Kxy @ Y)
    return float(value), gxx + gxy


def fedmmd_local_objective(features_local, features_global, lam: float, bandwidth: Bandwidth = "median") -> float:
    """Penalty term lam * MMD^2 added to a client's task loss."""
    if lam < 0:
        raise ConfigError("mmd_lambda must be >= 0", "mmd_lambda")
    return lam * mmd2(features_local, features_global, bandwidth)
