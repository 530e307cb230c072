"""Built-in verification suite for the reference attention kernels.

Each check recomputes the quantity it verifies through an independent route
(straight-line loops, finite differences, exact counting) and compares at a
fixed tolerance. The CLI `selfcheck` subcommand prints one line per check
and exits non-zero if anything fails.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import nnref


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _global_attention_loops(x: np.ndarray, p: nnref.AttentionParams) -> np.ndarray:
    """Straight-line multi-head global attention, one head and batch at a time."""
    b, c, h, w = x.shape
    n = h * w
    tokens = x.reshape(b, c, n).transpose(0, 2, 1)
    out = np.zeros((b, n, c))
    for bi in range(b):
        head_outs = []
        for hi in range(p.heads):
            q = tokens[bi] @ p.wq[hi]
            k = tokens[bi] @ p.wk[hi]
            v = tokens[bi] @ p.wv[hi]
            s = q @ k.T / np.sqrt(p.head_dim)
            s = s - s.max(axis=1, keepdims=True)
            a = np.exp(s)
            a /= a.sum(axis=1, keepdims=True)
            head_outs.append(a @ v)
        out[bi] = np.concatenate(head_outs, axis=1) @ p.wo
    return out.transpose(0, 2, 1).reshape(b, c, h, w)


def finite_difference_grad(
    f: Callable[[], float], array: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of f with respect to `array` (mutated in place)."""
    grad = np.zeros_like(array, dtype=np.float64)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        up = f()
        flat[i] = keep - eps
        down = f()
        flat[i] = keep
        gflat[i] = (up - down) / (2.0 * eps)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float((np.abs(analytic - numeric) / denom).max())


def _attention_grad_error(rng: np.random.Generator) -> float:
    b = int(rng.integers(1, 3))
    heads = int(rng.choice([1, 2]))
    d = int(rng.choice([1, 2]))
    c = heads * d
    h = int(rng.choice([2, 4]))
    w = int(rng.choice([2, 4]))
    l = int(rng.choice([a for a in (1, 2, 4) if (h * w) % a == 0]))

    p = nnref.random_attention_params(rng, c, heads, l)
    x = rng.normal(0.0, 1.0, (b, c, h, w))
    probe = rng.normal(0.0, 1.0, (b, c, h, w))

    out, cache = nnref.area_attention_forward(x, p)
    gx, gparams = nnref.area_attention_backward(probe, cache)

    def loss() -> float:
        y, _ = nnref.area_attention_forward(x, p)
        return float((y * probe).sum())

    worst = max_relative_error(gx, finite_difference_grad(loss, x))
    for name in ("wq", "wk", "wv", "wo"):
        num = finite_difference_grad(loss, getattr(p, name))
        worst = max(worst, max_relative_error(gparams[name], num))
    return worst


def _relan_grad_error(rng: np.random.Generator) -> float:
    c, ct, heads, areas = 4, 4, 2, 2
    p = nnref.random_relan_params(
        rng, c, ct, heads, areas, blocks_per_path=(1, 2), alpha=0.7
    )
    x = rng.normal(0.0, 1.0, (1, c, 2, 2))
    probe = rng.normal(0.0, 1.0, x.shape)

    _, cache = nnref.relan_forward_cached(x, p)
    gx, grads = nnref.relan_backward(probe, cache)

    def loss() -> float:
        return float((nnref.relan_forward(x, p) * probe).sum())

    worst = max_relative_error(gx, finite_difference_grad(loss, x))
    worst = max(
        worst, max_relative_error(grads["transition"], finite_difference_grad(loss, p.transition))
    )
    worst = max(
        worst, max_relative_error(grads["fusion"], finite_difference_grad(loss, p.fusion))
    )
    alpha_arr = np.array([p.alpha])

    def loss_alpha() -> float:
        p.alpha = float(alpha_arr[0])
        return loss()

    num_alpha = finite_difference_grad(loss_alpha, alpha_arr)
    p.alpha = float(alpha_arr[0])
    worst = max(
        worst, max_relative_error(np.array([grads["alpha"]]), num_alpha)
    )
    for pi, path in enumerate(p.paths):
        for bi, block in enumerate(path):
            for name in ("wq", "wk", "wv", "wo"):
                num = finite_difference_grad(loss, getattr(block, name))
                worst = max(
                    worst, max_relative_error(grads["paths"][pi][bi][name], num)
                )
    return worst


def run_selfcheck(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []

    def check(name: str, passed: bool, detail: str) -> None:
        results.append(CheckResult(name, bool(passed), detail))

    # softmax rows sum to 1 for every head/area
    x = rng.normal(0.0, 1.0, (2, 8, 4, 4))
    p = nnref.random_attention_params(rng, 8, 2, 4)
    out, cache = nnref.area_attention_forward(x, p)
    row_err = float(np.abs(cache["attn"].sum(axis=-1) - 1.0).max())
    check("softmax-rows-unit", row_err < 1e-12, f"max |row sum - 1| = {row_err:.2e}")

    # output shapes match input shapes
    check("attention-shape", out.shape == x.shape, f"{out.shape} vs {x.shape}")
    rp = nnref.random_relan_params(rng, 8, 4, 2, 4)
    r_out = nnref.relan_forward(x, rp)
    check("relan-shape", r_out.shape == x.shape, f"{r_out.shape} vs {x.shape}")

    # l = 1 equals a straight-line global attention
    p1 = nnref.random_attention_params(rng, 8, 2, 1)
    got, _ = nnref.area_attention_forward(x, p1)
    want = _global_attention_loops(x, p1)
    glob_err = float(np.abs(got - want).max())
    check("global-attention-match", glob_err < 1e-10, f"max |diff| = {glob_err:.2e}")

    # one token per area reduces to the V projection
    pn = nnref.random_attention_params(rng, 8, 2, 16)
    _, cache_n = nnref.area_attention_forward(x, pn)
    v_direct = np.einsum("blnc,hcd->bhlnd", cache_n["tokens"], pn.wv)
    singleton_err = float(
        np.abs(
            np.einsum("bhlnm,bhlmd->bhlnd", cache_n["attn"], cache_n["v"]) - v_direct
        ).max()
    )
    check("singleton-area-identity", singleton_err < 1e-12, f"{singleton_err:.2e}")

    # perturbing a token changes only its own area (pre-projection)
    base, cache_b = nnref.area_attention_forward(x, p)
    bumped = x.copy()
    bumped[0, :, 0, 0] += 1.0  # token 0 lives in area 0
    _, cache_p = nnref.area_attention_forward(bumped, p)
    n = (4 * 4) // p.areas
    pre_b = cache_b["pre_wo"][0]
    pre_p = cache_p["pre_wo"][0]
    outside = float(np.abs(pre_p[n:] - pre_b[n:]).max())
    inside = float(np.abs(pre_p[:n] - pre_b[:n]).max())
    check(
        "area-locality",
        outside == 0.0 and inside > 0.0,
        f"outside delta {outside:.2e}, inside delta {inside:.2e}",
    )

    # permuting tokens inside one area permutes that area's outputs
    perm = rng.permutation(n)
    tokens = x.reshape(2, 8, 16).transpose(0, 2, 1).copy()
    tokens[:, :n] = tokens[:, :n][:, perm]
    x_perm = tokens.transpose(0, 2, 1).reshape(2, 8, 4, 4)
    _, cache_perm = nnref.area_attention_forward(x_perm, p)
    perm_err = float(
        np.abs(cache_perm["pre_wo"][:, :n] - cache_b["pre_wo"][:, :n][:, perm]).max()
    )
    check("area-permutation-equivariance", perm_err < 1e-12, f"{perm_err:.2e}")

    # gradient checks: attention alone, then through the full block
    worst_attn = max(_attention_grad_error(rng) for _ in range(5))
    check("attention-gradcheck", worst_attn < 1e-6, f"max rel err = {worst_attn:.2e}")
    worst_relan = max(_relan_grad_error(rng) for _ in range(2))
    check("relan-gradcheck", worst_relan < 1e-6, f"max rel err = {worst_relan:.2e}")

    # residual scaling: alpha = 0 is the identity, delta is linear in alpha
    rp.alpha = 0.0
    ident = nnref.relan_forward(x, rp)
    check("alpha-zero-identity", np.array_equal(ident, x), "bitwise compare")
    rp.alpha = 1.0
    d1 = nnref.relan_forward(x, rp) - x
    rp.alpha = 2.0
    d2 = nnref.relan_forward(x, rp) - x
    lin_err = float(np.abs(d2 - 2.0 * d1).max())
    check("alpha-linearity", lin_err <= 1e-12, f"max |d2 - 2 d1| = {lin_err:.2e}")

    # flop accounting: attention-term ratio is exactly l
    flops_ok = True
    detail = []
    for (hw, l) in ((64, 4), (256, 4), (256, 16), (64, 1)):
        area, full = nnref.attention_flops((1, 8, 1, hw), l)
        flops_ok &= area * l == full
        detail.append(f"HW={hw},l={l}:{full // area if area else 0}")
    check("flops-ratio-exact", flops_ok, " ".join(detail))

    return results
