"""Hand-written reverse-mode gradients for every learnable tensor.

The surrogate objective is a plain squared error over all enhanced layers,
which is enough to exercise every parameter path: query/key embeddings
through normalization and softmax, value encapsulations, the context deconv
kernel and the combine projection with its bias.  Analytic gradients are
checked against central finite differences of the real forward pass.

The derivative of the row normalization at a guarded (near-zero) row is
defined as zero, matching the forward zero-guard; seeded random inputs never
hit that set.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ShapeError
from .ffb import BorrowNetParams, EnhancedPyramid, _forward_with_trace, forward_pyramid
from .params import ParamGradients, param_tensors, replace_param_tensor
from .pyramid import FeaturePyramid
from .tensor import NORM_EPS, crop_offsets, l2norm_rows

# Relative errors are measured against |g_a| + |g_fd| floored at this value,
# so near-zero gradient pairs do not blow up the ratio.
REL_DENOM_FLOOR = 1e-8


def sq_loss(y: EnhancedPyramid, target: EnhancedPyramid) -> float:
    """Half the summed squared difference over every layer and cell."""
    if y.shapes() != target.shapes():
        raise ShapeError(
            f"sq_loss: pyramid shapes {y.shapes()} vs target {target.shapes()}"
        )
    total = 0.0
    for a, b in zip(y.layers, target.layers):
        diff = a.data - b.data
        total += float((diff * diff).sum())
    return 0.5 * total


def _l2norm_rows_backward(
    pre: np.ndarray, grad_normed: np.ndarray, eps: float = NORM_EPS
) -> np.ndarray:
    """Backward of row L2 normalization: project out the radial component.

    For a row x with norm v >= eps and u = x/v, dx = (g - (g.u) u) / v.
    Guarded rows (v < eps) were forced to zero forward and get zero gradient.
    """
    normed, norms = l2norm_rows(pre, eps)
    radial = (grad_normed * normed).sum(axis=1, keepdims=True)
    safe = np.where(norms < eps, 1.0, norms)
    out = (grad_normed - radial * normed) / safe[:, None]
    out[norms < eps] = 0.0
    return out


def _softmax_rows_backward(s_hat: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Jacobian-vector form: s * (g - sum(g * s)) per row, no d x d materialization."""
    inner = (grad_out * s_hat).sum(axis=1, keepdims=True)
    return s_hat * (grad_out - inner)


def backward(
    p: FeaturePyramid, params: BorrowNetParams, target: EnhancedPyramid
) -> tuple[float, ParamGradients]:
    """Loss and exact gradients of sq_loss with respect to every parameter tensor.

    Inputs are never mutated; repeated calls return bit-identical values.
    """
    y, traces = _forward_with_trace(p, params)
    enhanced = EnhancedPyramid(tuple(y))
    loss = sq_loss(enhanced, target)

    grads: ParamGradients = {
        name: np.zeros_like(t) for name, t in param_tensors(params).items()
    }
    # dL/dY[i]; the context path adds cross-layer terms below.
    g = [y[i].data - target.layers[i].data for i in range(p.depth)]

    for n in range(p.depth - 1):
        blk = params.layers[n]
        tr = traces[n]
        x = p.layers[n]
        m, c_n = x.h * x.w, x.c
        cc, cx = blk.frb.c_common, blk.ffb.c_ctx

        # Fusion: Y = X + cat @ Wc (+ bias).
        g_mat = g[n].reshape(m, c_n)
        cat = tr["cat"].data.reshape(m, c_n + cc + cx)
        grads[f"layer{n}.combine.w"] += cat.T @ g_mat
        if blk.ffb.w_combine.bias is not None:
            grads[f"layer{n}.combine.bias"] += g_mat.sum(axis=0)
        dcat = g_mat @ blk.ffb.w_combine.w.T
        dz = dcat[:, c_n : c_n + cc]
        dctx = dcat[:, c_n + cc :]

        # Borrowing: Z = S_hat @ V.
        s_hat = tr["s_hat"].data
        values = tr["values"].data
        ds_hat = dz @ values.T
        dvalues = s_hat.T @ dz

        # Matching: S_hat = softmax(Qn @ Kn.T) with Qn, Kn row-normalized.
        ds = _softmax_rows_backward(s_hat, ds_hat)
        q_pre = tr["q_pre"].data
        k_pre = tr["keys_pre"].data
        qn, _ = l2norm_rows(q_pre)
        kn, _ = l2norm_rows(k_pre)
        dqn = ds @ kn
        dkn = ds.T @ qn
        dq = _l2norm_rows_backward(q_pre, dqn)
        dk = _l2norm_rows_backward(k_pre, dkn)

        # Embedding convolutions (no gradients needed for the input maps).
        x_mat = x.data.reshape(m, c_n)
        grads[f"layer{n}.query.w"] += x_mat.T @ dq
        if blk.fmb.w_query.bias is not None:
            grads[f"layer{n}.query.bias"] += dq.sum(axis=0)
        offset = 0
        for j, xd in enumerate(p.layers[n + 1 :]):
            md = xd.h * xd.w
            xd_mat = xd.data.reshape(md, xd.c)
            grads[f"layer{n}.key{n + 1 + j}.w"] += xd_mat.T @ dk[offset : offset + md]
            if blk.fmb.w_keys[j].bias is not None:
                grads[f"layer{n}.key{n + 1 + j}.bias"] += dk[offset : offset + md].sum(axis=0)
            grads[f"layer{n}.value{n + 1 + j}.w"] += xd_mat.T @ dvalues[offset : offset + md]
            if blk.frb.w_values[j].bias is not None:
                grads[f"layer{n}.value{n + 1 + j}.bias"] += dvalues[offset : offset + md].sum(axis=0)
            offset += md

        # Context: ctx = crop(scatter(Y[n+1], kernel)); push back through the
        # crop (zero padding) and the stride-2 scatter.
        y_next = y[n + 1].data
        hd, wd = y_next.shape[0], y_next.shape[1]
        oi, oj = crop_offsets(2 * hd, 2 * wd, x.h, x.w)
        g_full = np.zeros((2 * hd, 2 * wd, cx))
        g_full[oi : oi + x.h, oj : oj + x.w] = dctx.reshape(x.h, x.w, cx)
        g5 = g_full.reshape(hd, 2, wd, 2, cx)
        grads[f"layer{n}.deconv.kernel"] += np.einsum("hwc,hawbo->abco", y_next, g5)
        g[n + 1] += np.einsum("abco,hawbo->hwc", blk.ffb.w_deconv.kernel, g5)

    return loss, grads


def central_difference(f: Callable[[float], float], x: float, eps: float) -> float:
    """Two-point central difference (f(x+eps) - f(x-eps)) / (2 eps)."""
    if eps <= 0.0:
        raise ValueError(f"central_difference: eps must be positive, got {eps}")
    return (f(x + eps) - f(x - eps)) / (2.0 * eps)


def finite_difference(
    p: FeaturePyramid,
    params: BorrowNetParams,
    target: EnhancedPyramid,
    eps: float,
    threads: int = 1,
) -> ParamGradients:
    """Central-difference gradient of sq_loss per scalar parameter.

    Every probe is an independent pair of full forward passes, so the work
    partitions cleanly; with threads > 1 fixed index chunks run concurrently
    and land in preallocated slots, keeping results independent of scheduling.
    """
    if eps <= 0.0:
        raise ValueError(f"finite_difference: eps must be positive, got {eps}")
    tensors = param_tensors(params)
    out: ParamGradients = {name: np.zeros_like(t) for name, t in tensors.items()}

    def loss_with(name: str, idx: int, value: float) -> float:
        probe = tensors[name].copy()
        probe.flat[idx] = value
        perturbed = replace_param_tensor(params, name, probe)
        return sq_loss(forward_pyramid(p, perturbed), target)

    tasks = [(name, idx) for name, t in tensors.items() for idx in range(t.size)]

    def run(task: tuple[str, int]) -> None:
        name, idx = task
        base = float(tensors[name].flat[idx])
        out[name].flat[idx] = central_difference(
            lambda v: loss_with(name, idx, v), base, eps
        )

    if threads <= 1:
        for task in tasks:
            run(task)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, tasks))
    return out


@dataclass(frozen=True)
class GradCheckReport:
    """Per-group comparison of analytic and finite-difference gradients."""

    max_rel: dict[str, float]
    max_abs: dict[str, float]
    eps: float
    tol: float
    passed: bool
    failed_groups: tuple[str, ...]

    def lines(self) -> list[str]:
        """Human-readable one-line-per-group summary."""
        width = max((len(n) for n in self.max_rel), default=0)
        rows = []
        for name in self.max_rel:
            status = "ok" if name not in self.failed_groups else "FAIL"
            rows.append(
                f"{name:<{width}}  max_rel {self.max_rel[name]:.3e}  "
                f"max_abs {self.max_abs[name]:.3e}  {status}"
            )
        rows.append(
            f"gradcheck: eps={self.eps:g} tol={self.tol:g} -> "
            + ("PASS" if self.passed else f"FAIL ({', '.join(self.failed_groups)})")
        )
        return rows


def compare_gradients(
    analytic: ParamGradients, numeric: ParamGradients, eps: float, tol: float
) -> GradCheckReport:
    """Elementwise |a - n| / max(floor, |a| + |n|), reduced to a max per group."""
    if set(analytic) != set(numeric):
        raise ShapeError(
            f"compare_gradients: group names differ: {sorted(set(analytic) ^ set(numeric))}"
        )
    max_rel: dict[str, float] = {}
    max_abs: dict[str, float] = {}
    failed = []
    for name, a in analytic.items():
        b = numeric[name]
        if a.shape != b.shape:
            raise ShapeError(
                f"compare_gradients: {name} shapes differ, {a.shape} vs {b.shape}"
            )
        diff = np.abs(a - b)
        denom = np.maximum(REL_DENOM_FLOOR, np.abs(a) + np.abs(b))
        rel = float((diff / denom).max())
        max_rel[name] = rel
        max_abs[name] = float(diff.max())
        if not rel < tol:
            failed.append(name)
    return GradCheckReport(
        max_rel=max_rel,
        max_abs=max_abs,
        eps=eps,
        tol=tol,
        passed=not failed,
        failed_groups=tuple(failed),
    )


def gradcheck(
    p: FeaturePyramid,
    params: BorrowNetParams,
    target: EnhancedPyramid,
    eps: float = 1e-5,
    tol: float = 1e-4,
    threads: int = 1,
) -> GradCheckReport:
    """Verify the analytic gradients against central differences."""
    if tol <= 0.0:
        raise ValueError(f"gradcheck: tol must be positive, got {tol}")
    _, analytic = backward(p, params, target)
    numeric = finite_difference(p, params, target, eps, threads=threads)
    return compare_gradients(analytic, numeric, eps=eps, tol=tol)
