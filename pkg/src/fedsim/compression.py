"""Update encodings and their exact payload sizes.

Sizes are accounted, not serialized.  Dense values are 32-bit on the wire,
indices are fixed-width ceil(log2(dim)) bits and every message carries a
64-bit header.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from fedsim import seeding
from fedsim.errors import ConfigError, CorruptionError, NumericError, ShapeError
from fedsim.nn import ModelArch, ModelParams

ENCODINGS = ("dense", "sign", "topk", "ternary", "submodel")

HEADER_BITS = 64
VALUE_BITS = 32
SCALE_BITS = 64


def index_bits(dim: int) -> int:
    """ceil(log2(dim)), i.e. the width needed to address dim slots."""
    return (int(dim) - 1).bit_length()


@dataclass
class Update:
    encoding: str
    dim: int
    values: np.ndarray
    indices: Optional[np.ndarray] = None
    scale: float = 0.0
    bits: int = 0

    def __post_init__(self):
        if self.encoding not in ENCODINGS:
            raise ConfigError(f"unknown encoding {self.encoding!r}")
        self.bits = measure_payload(self)

    @property
    def nnz(self) -> int:
        return len(self.values)


def measure_payload(update: Update) -> int:
    dim = update.dim
    n = len(update.values)
    if update.encoding == "dense":
        return VALUE_BITS * dim + HEADER_BITS
    if update.encoding == "sign":
        return dim + HEADER_BITS
    if update.encoding == "topk":
        return n * (index_bits(dim) + VALUE_BITS) + HEADER_BITS
    if update.encoding == "ternary":
        # one sign bit per kept position plus a single shared magnitude
        return SCALE_BITS + n * (index_bits(dim) + 1) + HEADER_BITS
    return VALUE_BITS * n + HEADER_BITS


def _finite(vec) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(vec)):
        raise NumericError("update contains non-finite values")
    return vec


def sign_of(vec: np.ndarray) -> np.ndarray:
    """Total sign: zero maps to +1."""
    return np.where(vec >= 0.0, 1, -1).astype(np.int8)


def dense(vec) -> Update:
    vec = _finite(vec)
    return Update("dense", len(vec), vec.copy())


def sign_compress(vec) -> Update:
    vec = _finite(vec)
    return Update("sign", len(vec), sign_of(vec))


def majority_aggregate(signs: list) -> np.ndarray:
    """Coordinate-wise majority of +-1 votes, ties resolved to +1."""
    if not signs:
        raise ShapeError("majority vote needs at least one sign vector")
    votes = [np.asarray(s.values if isinstance(s, Update) else s) for s in signs]
    dim = votes[0].shape
    if any(v.shape != dim for v in votes):
        raise ShapeError("sign vectors differ in length")
    total = np.sum(np.stack(votes).astype(np.int64), axis=0)
    return np.where(total >= 0, 1.0, -1.0)


def k_for(k_frac: float, dim: int) -> int:
    """Number of coordinates kept at density k_frac (rounded up, at least one)."""
    if not 0.0 < k_frac <= 1.0:
        raise ConfigError(f"k_frac must lie in (0, 1], got {k_frac}", "k_frac")
    # the small slack absorbs float noise such as 0.07 * 100 = 7.000000000000001
    return int(min(dim, max(1, math.ceil(k_frac * dim - 1e-9))))


def _select_topk(t: np.ndarray, k: int) -> np.ndarray:
    # stable sort on -|t|: equal magnitudes keep ascending index order
    chosen = np.argsort(-np.abs(t), kind="stable")[:k]
    return np.sort(chosen)


def _accumulate(vec, residual) -> np.ndarray:
    vec = _finite(vec)
    if residual is None:
        return vec.copy()
    residual = np.asarray(residual, dtype=np.float64)
    if residual.shape != vec.shape:
        raise ShapeError("residual and update differ in length")
    return vec + residual


def topk_sparsify(vec, k_frac: float, residual=None) -> tuple[Update, np.ndarray]:
    t = _accumulate(vec, residual)
    idx = _select_topk(t, k_for(k_frac, len(t)))
    update = Update("topk", len(t), t[idx].copy(), idx)
    return update, t - decode(update, len(t))


def stc_encode(vec, k_frac: float, residual=None) -> tuple[Update, np.ndarray]:
    """Sparse ternary compression with error feedback."""
    t = _accumulate(vec, residual)
    idx = _select_topk(t, k_for(k_frac, len(t)))
    mu = float(np.mean(np.abs(t[idx])))
    update = Update("ternary", len(t), np.sign(t[idx]).astype(np.int8), idx, scale=mu)
    return update, t - decode(update, len(t))


def decode(update: Update, dim: Optional[int] = None) -> np.ndarray:
    if dim is None:
        dim = update.dim
    if update.dim != dim:
        raise ShapeError(f"update has dim {update.dim}, expected {dim}")
    if update.encoding in ("dense", "sign"):
        if len(update.values) != dim:
            raise CorruptionError("payload length does not match dim")
        return np.asarray(update.values, dtype=np.float64).copy()
    idx = np.asarray(update.indices, dtype=np.int64)
    if len(idx) and (idx.min() < 0 or idx.max() >= dim):
        raise CorruptionError("payload index outside the vector")
    out = np.zeros(dim)
    vals = np.asarray(update.values, dtype=np.float64)
    out[idx] = vals * update.scale if update.encoding == "ternary" else vals
    return out


@dataclass
class MaskSet:
    arch: ModelArch
    kept: tuple[np.ndarray, ...]
    rate: float
    seed: int

    @property
    def sub_arch(self) -> ModelArch:
        sizes = self.arch.layer_sizes
        return ModelArch((sizes[0], *(len(k) for k in self.kept), sizes[-1]))

    def global_indices(self) -> np.ndarray:
        """Flat indices of the surviving coordinates, in the sub-model's canonical order."""
        sizes = self.arch.layer_sizes
        units = [np.arange(sizes[0]), *self.kept, np.arange(sizes[-1])]
        parts = []
        for (w0, b0, _), fan_out, rows, cols in zip(
            self.arch.layer_offsets(), sizes[1:], units[:-1], units[1:]
        ):
            parts.append((w0 + rows[:, None] * fan_out + cols[None, :]).ravel())
            parts.append(b0 + cols)
        return np.concatenate(parts).astype(np.int64)


def make_masks(arch: ModelArch, rate: float, seed: int, round_index: int = 0) -> MaskSet:
    """Keep round((1 - rate) * width) random units in every hidden layer."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}", "dropout_rate")
    if not arch.hidden_sizes:
        raise ConfigError("federated dropout needs at least one hidden layer", "model")
    rng = seeding.stream(seed, seeding.MASK, round_index)
    kept = []
    for width in arch.hidden_sizes:
        n_keep = max(1, int(math.floor((1.0 - rate) * width + 0.5)))
        kept.append(np.sort(rng.choice(width, size=n_keep, replace=False)).astype(np.int64))
    return MaskSet(arch, tuple(kept), rate, seed)


def _check_masks(arch: ModelArch, masks: MaskSet) -> None:
    if masks.arch != arch:
        raise ShapeError(f"masks built for {masks.arch.layer_sizes}, model is {arch.layer_sizes}")


def extract_submodel(params: ModelParams, masks: MaskSet) -> Update:
    _check_masks(params.arch, masks)
    idx = masks.global_indices()
    return Update("submodel", params.arch.n_params, params.values[idx].copy(), idx)


def expand_submodel(sub: Update, masks: MaskSet, global_params: ModelParams) -> ModelParams:
    """Write the sub-model back over the global model; dropped coordinates keep their values."""
    _check_masks(global_params.arch, masks)
    idx = masks.global_indices()
    if sub.encoding != "submodel" or len(sub.values) != len(idx):
        raise ShapeError("sub-model payload does not match the masks")
    values = global_params.values.copy()
    values[idx] = sub.values
    return ModelParams(global_params.arch, values)
