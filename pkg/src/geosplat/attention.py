"""Framework-free reference of the bidirectional satellite/ground
cross-attention block.

One block applies two residual cross-attention layers: the inner layer
updates ground tokens against satellite keys/values, the outer layer
updates satellite tokens against the freshly updated ground tokens. The
block repeats L times (default 12) with per-repeat parameters. Toy scale
only; no training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_NUM_LAYERS = 12


@dataclass
class MhaParams:
    """Per-head projections: wq/wk/wv are (heads, d, d_head), wo is (d, d)."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray

    @property
    def heads(self) -> int:
        return self.wq.shape[0]

    @property
    def dim(self) -> int:
        return self.wq.shape[1]

    @property
    def head_dim(self) -> int:
        return self.wq.shape[2]

    def __post_init__(self):
        h, d, dh = self.wq.shape
        if d % h != 0 or dh != d // h:
            raise ValueError(f"embedding dim {d} not divisible into {h} heads of {dh}")
        for name in ("wk", "wv"):
            if getattr(self, name).shape != (h, d, dh):
                raise ValueError(f"{name} shape {getattr(self, name).shape} != {(h, d, dh)}")
        if self.wo.shape != (d, d):
            raise ValueError(f"wo shape {self.wo.shape} != {(d, d)}")

    @staticmethod
    def random(dim: int, heads: int, rng: np.random.Generator, scale: float | None = None) -> "MhaParams":
        if dim % heads != 0:
            raise ValueError("dim must be divisible by heads")
        dh = dim // heads
        scale = scale if scale is not None else dim ** -0.5
        return MhaParams(
            rng.normal(0, scale, (heads, dim, dh)),
            rng.normal(0, scale, (heads, dim, dh)),
            rng.normal(0, scale, (heads, dim, dh)),
            rng.normal(0, scale, (dim, dim)),
        )

    @staticmethod
    def zeros(dim: int, heads: int) -> "MhaParams":
        dh = dim // heads
        return MhaParams(np.zeros((heads, dim, dh)), np.zeros((heads, dim, dh)),
                         np.zeros((heads, dim, dh)), np.zeros((dim, dim)))


def _softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(x)
    return e / np.sum(e, axis=axis, keepdims=True)


def mha(queries: np.ndarray, keys: np.ndarray, values: np.ndarray,
        params: MhaParams, return_weights: bool = False):
    """Scaled dot-product multi-head attention A(Q, K, V).

    queries (nq, d), keys/values (nk, d) with matching nk. Returns (nq, d);
    with return_weights also the (heads, nq, nk) row-stochastic weights.
    """
    queries, keys, values = (np.asarray(a, dtype=np.float64) for a in (queries, keys, values))
    if keys.shape[0] != values.shape[0]:
        raise ValueError("keys and values must have the same length")
    if queries.shape[1] != params.dim or keys.shape[1] != params.dim:
        raise ValueError(f"token dim does not match params dim {params.dim}")

    q = np.einsum("nd,hde->hne", queries, params.wq)
    k = np.einsum("nd,hde->hne", keys, params.wk)
    v = np.einsum("nd,hde->hne", values, params.wv)
    logits = np.einsum("hqe,hke->hqk", q, k) / np.sqrt(params.head_dim)
    weights = _softmax(logits, axis=-1)
    per_head = np.einsum("hqk,hke->hqe", weights, v)
    merged = per_head.transpose(1, 0, 2).reshape(queries.shape[0], params.dim)
    out = merged @ params.wo
    return (out, weights) if return_weights else out


@dataclass
class AttnMetaParams:
    """Parameters of the repeated bidirectional block: one (inner, outer)
    MhaParams pair per repeat."""

    layers: list

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @staticmethod
    def random(dim: int, heads: int, rng: np.random.Generator,
               num_layers: int = DEFAULT_NUM_LAYERS, scale: float | None = None) -> "AttnMetaParams":
        return AttnMetaParams([(MhaParams.random(dim, heads, rng, scale),
                                MhaParams.random(dim, heads, rng, scale))
                               for _ in range(num_layers)])

    @staticmethod
    def zeros(dim: int, heads: int, num_layers: int = DEFAULT_NUM_LAYERS) -> "AttnMetaParams":
        return AttnMetaParams([(MhaParams.zeros(dim, heads), MhaParams.zeros(dim, heads))
                               for _ in range(num_layers)])


def _layer_norm(x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


def attn_meta(t_sat: np.ndarray, t_ground: np.ndarray, params: AttnMetaParams,
              pre_norm: bool = False):
    """Bidirectional cross-attention, repeated over the parameter layers.

    Per repeat: ground tokens attend to satellite tokens (residual), then
    satellite tokens attend to the updated ground tokens (residual).
    Returns (t_sat', t_ground'). pre_norm applies layer norm to attention
    inputs only (off by default so the bare composition is testable).
    """
    t_sat = np.asarray(t_sat, dtype=np.float64)
    t_ground = np.asarray(t_ground, dtype=np.float64)
    if t_sat.shape[1] != t_ground.shape[1]:
        raise ValueError("satellite and ground tokens must share the embedding dim")
    norm = _layer_norm if pre_norm else (lambda x: x)
    for inner, outer in params.layers:
        t_ground = t_ground + mha(norm(t_ground), norm(t_sat), norm(t_sat), inner)
        t_sat = t_sat + mha(norm(t_sat), norm(t_ground), norm(t_ground), outer)
    return t_sat, t_ground
