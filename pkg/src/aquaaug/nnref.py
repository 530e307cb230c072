"""Reference kernels for area attention and the residual aggregation block.

Everything here is plain float64 numpy built for numerical verification,
not speed: scaled dot-product attention computed independently inside l
contiguous partitions of the flattened token axis, multi-path aggregation
fused by a pointwise projection, scaled by a learnable alpha, and added
back to the input. Blocks contain no nonlinearities or normalization
beyond attention's softmax, so analytic gradients are exactly checkable
against finite differences.

Tensor layout is (B, C, H, W) throughout; tokens are the row-major
flattening of (H, W).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch


def _check_tensor(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeMismatch(f"expected (B, C, H, W) tensor, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("tensor contains non-finite values")
    return x


@dataclass
class AttentionParams:
    """Per-head projections (heads, C, d_k) plus the (C, C) output projection."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    areas: int = 4

    def __post_init__(self):
        for name in ("wq", "wk", "wv", "wo"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        heads, c, d = self.wq.shape
        if self.wk.shape != (heads, c, d) or self.wv.shape != (heads, c, d):
            raise ShapeMismatch("wq, wk, wv must share shape (heads, C, d_k)")
        if heads * d != c:
            raise ShapeMismatch(f"heads * d_k = {heads * d} must equal C = {c}")
        if self.wo.shape != (c, c):
            raise ShapeMismatch(f"wo must be (C, C), got {self.wo.shape}")
        if self.areas < 1:
            raise ShapeMismatch("areas must be >= 1")

    @property
    def heads(self) -> int:
        return self.wq.shape[0]

    @property
    def channels(self) -> int:
        return self.wq.shape[1]

    @property
    def head_dim(self) -> int:
        return self.wq.shape[2]


def random_attention_params(
    rng: np.random.Generator, channels: int, heads: int, areas: int
) -> AttentionParams:
    if channels % heads:
        raise ShapeMismatch(f"heads {heads} must divide channels {channels}")
    d = channels // heads
    scale = 1.0 / np.sqrt(channels)
    return AttentionParams(
        wq=rng.normal(0.0, scale, (heads, channels, d)),
        wk=rng.normal(0.0, scale, (heads, channels, d)),
        wv=rng.normal(0.0, scale, (heads, channels, d)),
        wo=rng.normal(0.0, scale, (channels, channels)),
        areas=areas,
    )


def area_attention_forward(
    x: np.ndarray, p: AttentionParams
) -> tuple[np.ndarray, dict]:
    """Multi-head attention inside l contiguous token partitions.

    Returns the (B, C, H, W) output and a cache for the backward pass.
    """
    x = _check_tensor(x)
    b, c, h, w = x.shape
    n_tokens = h * w
    l = p.areas
    if c != p.channels:
        raise ShapeMismatch(f"input has C={c}, params expect C={p.channels}")
    if n_tokens % l:
        raise ShapeMismatch(f"areas {l} must divide H*W = {n_tokens}")
    n = n_tokens // l

    # (B, l, n, C) token view, contiguous row-major partitions
    tokens = x.reshape(b, c, n_tokens).transpose(0, 2, 1).reshape(b, l, n, c)

    q = np.einsum("blnc,hcd->bhlnd", tokens, p.wq)
    k = np.einsum("blnc,hcd->bhlnd", tokens, p.wk)
    v = np.einsum("blnc,hcd->bhlnd", tokens, p.wv)

    inv_sqrt_d = 1.0 / np.sqrt(p.head_dim)
    scores = np.einsum("bhlnd,bhlmd->bhlnm", q, k) * inv_sqrt_d
    scores -= scores.max(axis=-1, keepdims=True)
    exps = np.exp(scores)
    attn = exps / exps.sum(axis=-1, keepdims=True)

    heads_out = np.einsum("bhlnm,bhlmd->bhlnd", attn, v)
    # concat heads: (B, l, n, heads, d) -> (B, N, C)
    pre_wo = heads_out.transpose(0, 2, 3, 1, 4).reshape(b, n_tokens, c)
    y = pre_wo @ p.wo

    out = y.transpose(0, 2, 1).reshape(b, c, h, w)
    cache = {
        "tokens": tokens,
        "q": q,
        "k": k,
        "v": v,
        "attn": attn,
        "pre_wo": pre_wo,
        "params": p,
        "shape": (b, c, h, w),
        "inv_sqrt_d": inv_sqrt_d,
    }
    return out, cache


def area_attention_backward(
    grad_out: np.ndarray, cache: dict
) -> tuple[np.ndarray, dict]:
    """Analytic gradients for the input and all four projection matrices."""
    p: AttentionParams = cache["params"]
    b, c, h, w = cache["shape"]
    n_tokens = h * w
    l = p.areas
    n = n_tokens // l
    tokens, q, k, v = cache["tokens"], cache["q"], cache["k"], cache["v"]
    attn, pre_wo = cache["attn"], cache["pre_wo"]

    gy = _check_tensor(grad_out).reshape(b, c, n_tokens).transpose(0, 2, 1)

    gwo = np.einsum("bnc,bne->ce", pre_wo, gy)
    gpre = gy @ p.wo.T
    gheads = gpre.reshape(b, l, n, p.heads, p.head_dim).transpose(0, 3, 1, 2, 4)

    gattn = np.einsum("bhlnd,bhlmd->bhlnm", gheads, v)
    gv = np.einsum("bhlnm,bhlnd->bhlmd", attn, gheads)

    # softmax backward, then undo the 1/sqrt(d) scale
    gscores = attn * (gattn - (gattn * attn).sum(axis=-1, keepdims=True))
    gscores *= cache["inv_sqrt_d"]

    gq = np.einsum("bhlnm,bhlmd->bhlnd", gscores, k)
    gk = np.einsum("bhlnm,bhlnd->bhlmd", gscores, q)

    gwq = np.einsum("blnc,bhlnd->hcd", tokens, gq)
    gwk = np.einsum("blnc,bhlnd->hcd", tokens, gk)
    gwv = np.einsum("blnc,bhlnd->hcd", tokens, gv)

    gtokens = (
        np.einsum("bhlnd,hcd->blnc", gq, p.wq)
        + np.einsum("bhlnd,hcd->blnc", gk, p.wk)
        + np.einsum("bhlnd,hcd->blnc", gv, p.wv)
    )
    gx = gtokens.reshape(b, n_tokens, c).transpose(0, 2, 1).reshape(b, c, h, w)
    return gx, {"wq": gwq, "wk": gwk, "wv": gwv, "wo": gwo}


@dataclass
class RelanParams:
    """Transition/fusion pointwise maps around parallel attention paths.

    transition: (C, C_t); each path is a chain of attention blocks on C_t
    channels; fusion maps the (C_t * paths) concatenation back to C so the
    alpha-scaled result can be added to the input.
    """

    transition: np.ndarray
    paths: list[list[AttentionParams]]
    fusion: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.fusion = np.asarray(self.fusion, dtype=np.float64)
        if self.transition.ndim != 2 or self.fusion.ndim != 2:
            raise ShapeMismatch("transition and fusion must be 2-D matrices")
        c, ct = self.transition.shape
        if not self.paths or any(not path for path in self.paths):
            raise ShapeMismatch("need at least one path with at least one block")
        for path in self.paths:
            for block in path:
                if block.channels != ct:
                    raise ShapeMismatch(
                        f"path block has C={block.channels}, transition gives {ct}"
                    )
        expect = (ct * len(self.paths), c)
        if self.fusion.shape != expect:
            raise ShapeMismatch(
                f"fusion must be {expect} to restore input channels, "
                f"got {self.fusion.shape}"
            )


def random_relan_params(
    rng: np.random.Generator,
    channels: int,
    transition_channels: int,
    heads: int,
    areas: int,
    blocks_per_path: tuple[int, ...] = (1, 2),
    alpha: float = 0.7,
) -> RelanParams:
    ct = transition_channels
    scale = 1.0 / np.sqrt(channels)
    paths = [
        [random_attention_params(rng, ct, heads, areas) for _ in range(count)]
        for count in blocks_per_path
    ]
    return RelanParams(
        transition=rng.normal(0.0, scale, (channels, ct)),
        paths=paths,
        fusion=rng.normal(0.0, scale, (ct * len(paths), channels)),
        alpha=alpha,
    )


def relan_forward_cached(x: np.ndarray, p: RelanParams) -> tuple[np.ndarray, dict]:
    x = _check_tensor(x)
    t = np.einsum("bchw,ce->behw", x, p.transition)

    path_outputs = []
    path_caches = []
    for path in p.paths:
        u = t
        caches = []
        for block in path:
            u, cache = area_attention_forward(u, block)
            caches.append(cache)
        path_outputs.append(u)
        path_caches.append(caches)

    concat = np.concatenate(path_outputs, axis=1)
    fused = np.einsum("bchw,ce->behw", concat, p.fusion)
    out = p.alpha * fused + x
    cache = {
        "x": x,
        "t": t,
        "concat": concat,
        "fused": fused,
        "path_caches": path_caches,
        "params": p,
    }
    return out, cache


def relan_forward(x: np.ndarray, p: RelanParams) -> np.ndarray:
    """Residual aggregation: alpha * Fusion(Concat(paths(Transition(x)))) + x."""
    out, _ = relan_forward_cached(x, p)
    return out


def relan_backward(grad_out: np.ndarray, cache: dict) -> tuple[np.ndarray, dict]:
    """Gradients for the input, alpha, both pointwise maps, and every block."""
    p: RelanParams = cache["params"]
    x, concat, fused = cache["x"], cache["concat"], cache["fused"]
    gout = _check_tensor(grad_out)

    galpha = float((gout * fused).sum())
    gfused = p.alpha * gout
    gfusion = np.einsum("bchw,behw->ce", concat, gfused)
    gconcat = np.einsum("behw,ce->bchw", gfused, p.fusion)

    ct = p.transition.shape[1]
    gt = np.zeros_like(cache["t"])
    path_grads = []
    for i, caches in enumerate(cache["path_caches"]):
        gu = gconcat[:, i * ct : (i + 1) * ct]
        block_grads = []
        for block_cache in reversed(caches):
            gu, grads = area_attention_backward(gu, block_cache)
            block_grads.append(grads)
        block_grads.reverse()
        path_grads.append(block_grads)
        gt += gu

    gtransition = np.einsum("bchw,behw->ce", x, gt)
    gx = gout + np.einsum("behw,ce->bchw", gt, p.transition)
    return gx, {
        "alpha": galpha,
        "transition": gtransition,
        "fusion": gfusion,
        "paths": path_grads,
    }


def attention_flops(
    dims: tuple[int, int, int, int], l: int, include_projections: bool = False
) -> tuple[int, int]:
    """Multiply-accumulate counts of the attention products, area vs full.

    Counts the QK^T and attention-times-V products (2 * B * N^2 * C, cut by
    a factor of l under area partitioning). Projection costs, included on
    request, are identical for both variants.
    """
    b, c, h, w = dims
    n = h * w
    if n % l:
        raise ShapeMismatch(f"areas {l} must divide H*W = {n}")
    area = 2 * b * n * (n // l) * c
    full = 2 * b * n * n * c
    if include_projections:
        proj = 4 * b * n * c * c  # Q, K, V, and output projections
        area += proj
        full += proj
    return area, full
