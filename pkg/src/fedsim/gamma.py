"""Empirical sign-agreement probability between mini-batch and full-data gradients.

For each batch size s the probe draws mini-batches, computes their mean
gradient and counts, per parameter, how often its sign matches the sign of
the full-data gradient.  Parameters whose full gradient is (numerically) zero
carry no sign information and are excluded from the summary statistics.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from fedsim import nn, seeding
from fedsim.compression import sign_of
from fedsim.data import Dataset
from fedsim.errors import ConfigError, EvaluationError

MODES = ("iid-sample", "single-class", "exhaustive")
ZERO_TOL = 1e-12
CSV_COLUMNS = ("mode", "s", "trials", "gamma_mean", "gamma_p25", "gamma_p50", "gamma_p75")


@dataclass
class SignProbeResult:
    batch_sizes: list[int]
    gamma_mean: list[float]
    gamma_quantiles: list[tuple[float, float, float]]
    trials: list[int]
    data_mode: str
    per_parameter: list[np.ndarray]

    def rows(self) -> list[dict]:
        return [
            {
                "mode": self.data_mode,
                "s": s,
                "trials": t,
                "gamma_mean": m,
                "gamma_p25": q[0],
                "gamma_p50": q[1],
                "gamma_p75": q[2],
            }
            for s, t, m, q in zip(self.batch_sizes, self.trials, self.gamma_mean, self.gamma_quantiles)
        ]


def full_gradient(params: nn.ModelParams, dataset: Dataset) -> np.ndarray:
    if len(dataset) == 0:
        raise EvaluationError("full gradient of an empty dataset")
    return nn.gradient(params, nn.Batch(dataset.features, dataset.labels))


def _batches(dataset: Dataset, s: int, trials: int, mode: str, rng: np.random.Generator):
    n = len(dataset)
    if mode == "exhaustive":
        for combo in itertools.combinations(range(n), s):
            yield np.asarray(combo)
        return
    if mode == "iid-sample":
        for _ in range(trials):
            yield rng.choice(n, size=s, replace=False)
        return
    by_class = [np.flatnonzero(dataset.labels == c) for c in range(dataset.class_count)]
    eligible = [c for c, members in enumerate(by_class) if len(members) >= s]
    if not eligible:
        raise ConfigError(f"no class holds {s} samples for single-class batches", "gamma.batch_sizes")
    for _ in range(trials):
        members = by_class[eligible[rng.integers(len(eligible))]]
        yield rng.choice(members, size=s, replace=False)


def match_counts(params, dataset, s, trials, mode, rng, reference_sign) -> tuple[np.ndarray, int]:
    """Integer per-parameter match counts and the number of batches drawn."""
    counts = np.zeros(len(reference_sign), dtype=np.int64)
    drawn = 0
    for idx in _batches(dataset, s, trials, mode, rng):
        g = nn.gradient(params, nn.Batch(dataset.features[idx], dataset.labels[idx]))
        counts += sign_of(g) == reference_sign
        drawn += 1
    return counts, drawn


def gamma_estimate(
    params: nn.ModelParams,
    dataset: Dataset,
    batch_sizes: list[int],
    trials: int,
    seed: int,
    mode: str = "iid-sample",
) -> SignProbeResult:
    """Estimate gamma_p(s) for every s.  ``exhaustive`` enumerates all size-s subsets instead of sampling."""
    if mode not in MODES:
        raise ConfigError(f"unknown probe mode {mode!r}", "gamma.mode")
    if trials < 1:
        raise ConfigError("trials must be >= 1", "gamma.trials")
    sizes = [int(s) for s in batch_sizes]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError("batch sizes must be strictly increasing", "gamma.batch_sizes")
    n = len(dataset)
    for s in sizes:
        if not 1 <= s <= n:
            raise ConfigError(f"batch size {s} outside [1, {n}]", "gamma.batch_sizes")

    bg = full_gradient(params, dataset)
    kept = np.abs(bg) > ZERO_TOL
    reference = sign_of(bg)
    result = SignProbeResult([], [], [], [], mode, [])
    for s in sizes:
        rng = seeding.stream(seed, seeding.PROBE, s, MODES.index(mode))
        counts, drawn = match_counts(params, dataset, s, trials, mode, rng, reference)
        gamma = counts[kept] / drawn
        result.batch_sizes.append(s)
        result.trials.append(drawn)
        result.per_parameter.append(gamma)
        if gamma.size:
            result.gamma_mean.append(float(gamma.mean()))
            result.gamma_quantiles.append(tuple(float(q) for q in np.percentile(gamma, [25, 50, 75])))
        else:
            result.gamma_mean.append(float("nan"))
            result.gamma_quantiles.append((float("nan"),) * 3)
    return result


def is_monotone(values: list[float], tol: float = 0.03) -> bool:
    """Non-decreasing up to a one-sided slack of ``tol`` between consecutive entries."""
    return all(b >= a - tol for a, b in zip(values, values[1:]))


def gamma_report(results: list[SignProbeResult], tol: float = 0.03) -> tuple[list[dict], dict[str, bool]]:
    """CSV rows for all results plus a per-mode flag: does mean gamma grow with s?

    A mode is flagged only if the curve is non-decreasing within ``tol`` and
    actually rises by more than ``tol`` end to end; a flat curve is not growth.
    """
    rows: list[dict] = []
    flags: dict[str, bool] = {}
    for r in results:
        rows.extend(r.rows())
        if r.gamma_mean:
            g = r.gamma_mean
            flags[r.data_mode] = is_monotone(g, tol) and (g[-1] - g[0] > tol)
    return rows, flags
