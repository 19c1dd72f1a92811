"""Shared fixtures and oracle helpers for the test suite."""

from __future__ import annotations

import os

import numpy as np
import pytest

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture
def annotations_small() -> str:
    return os.path.join(DATA_DIR, "annotations_small.json")


def random_pyramid_shapes(rng: np.random.Generator, depth: int, max_dim: int = 8):
    """Strictly shrinking (h, w, c) shapes for a random pyramid."""
    h = int(rng.integers(depth, max_dim + 1))
    w = int(rng.integers(depth, max_dim + 1))
    shapes = []
    for _ in range(depth):
        c = int(rng.integers(1, max_dim + 1))
        shapes.append((h, w, c))
        # shrink at least one axis, never below 1
        dh = int(rng.integers(0, 2))
        dw = 1 if dh == 0 else int(rng.integers(0, 2))
        h = max(1, h - dh)
        w = max(1, w - dw)
    return shapes


def deconv_scatter_oracle(x: np.ndarray, kernel: np.ndarray, th: int, tw: int) -> np.ndarray:
    """Direct loop definition of the stride-2 scatter plus center crop."""
    h, w, c_in = x.shape
    c_out = kernel.shape[3]
    full = np.zeros((2 * h, 2 * w, c_out))
    for i in range(h):
        for j in range(w):
            for a in range(2):
                for b in range(2):
                    for c in range(c_in):
                        for o in range(c_out):
                            full[2 * i + a, 2 * j + b, o] += x[i, j, c] * kernel[a, b, c, o]
    oi = (2 * h - th) // 2
    oj = (2 * w - tw) // 2
    return full[oi : oi + th, oj : oj + tw]


def monolithic_forward_oracle(layers: list[np.ndarray], tensors: dict[str, np.ndarray]):
    """Straight-line re-implementation of the whole top-down pass.

    No package code paths: inline normalization and softmax, loop-based
    deconvolution.  Used to cross-check the modular pipeline end to end.
    """
    n_layers = len(layers)
    y: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    y[n_layers - 1] = layers[n_layers - 1]

    def unit_rows(a):
        norms = np.sqrt((a * a).sum(axis=1, keepdims=True))
        out = np.divide(a, np.where(norms < 1e-12, 1.0, norms))
        out[norms[:, 0] < 1e-12] = 0.0
        return out

    for n in range(n_layers - 2, -1, -1):
        x = layers[n]
        h, w, c = x.shape
        m = h * w
        q = x.reshape(m, c) @ tensors[f"layer{n}.query.w"]
        keys, vals = [], []
        for j in range(n + 1, n_layers):
            xd = layers[j]
            xm = xd.reshape(xd.shape[0] * xd.shape[1], xd.shape[2])
            keys.append(xm @ tensors[f"layer{n}.key{j}.w"])
            vals.append(xm @ tensors[f"layer{n}.value{j}.w"])
        k = np.vstack(keys)
        v = np.vstack(vals)
        scores = unit_rows(q) @ unit_rows(k).T
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        s_hat = e / e.sum(axis=1, keepdims=True)
        z = (s_hat @ v).reshape(h, w, v.shape[1])
        ctx = deconv_scatter_oracle(y[n + 1], tensors[f"layer{n}.deconv.kernel"], h, w)
        cat = np.concatenate([x, z, ctx], axis=2)
        corr = cat.reshape(m, cat.shape[2]) @ tensors[f"layer{n}.combine.w"]
        if f"layer{n}.combine.bias" in tensors:
            corr = corr + tensors[f"layer{n}.combine.bias"]
        y[n] = x + corr.reshape(h, w, c)
    return y
