"""Central finite-difference verification of every differentiable op.

This is the independent oracle for the autodiff engine: it never touches the
backward closures, only forward evaluations at perturbed inputs.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Tensor, concat, stack, take_rows, embedding_lookup


def numeric_grad(f, xs: list[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Central differences of scalar f with respect to each input array."""
    grads = []
    for k, x in enumerate(xs):
        g = np.zeros_like(x)
        flat = x.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f([np.array(a) for a in xs])
            flat[i] = orig - h
            fm = f([np.array(a) for a in xs])
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def analytic_grad(f_tensor, xs: list[np.ndarray]) -> list[np.ndarray]:
    ts = [Tensor(x.copy(), requires_grad=True) for x in xs]
    out = f_tensor(ts)
    out.backward()
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in ts]


def max_rel_error(f_tensor, xs: list[np.ndarray], h: float = 1e-5) -> float:
    def f_plain(arrays):
        ts = [Tensor(a) for a in arrays]
        return float(f_tensor(ts).data)

    num = numeric_grad(f_plain, [x.copy() for x in xs], h)
    ana = analytic_grad(f_tensor, xs)
    worst = 0.0
    for a, n in zip(ana, num):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def _case_list(rng: np.random.Generator):
    """One (name, fn, inputs) triple per differentiable operation."""

    def r(*shape):
        return rng.normal(0.0, 1.0, size=shape)

    def r_pos(*shape):
        return rng.uniform(0.5, 2.0, size=shape)

    def r_off_kink(*shape):
        # keep relu test points away from the kink at 0
        x = rng.normal(0.0, 1.0, size=shape)
        return np.where(np.abs(x) < 0.1, x + 0.2 * np.sign(x + 1e-12), x)

    labels = rng.integers(0, 3, size=4)
    emb_idx = rng.integers(0, 5, size=6)

    cases = [
        ("add", lambda ts: (ts[0] + ts[1]).sum(), [r(3, 4), r(3, 4)]),
        ("add_broadcast", lambda ts: (ts[0] + ts[1]).sum(), [r(3, 4), r(4)]),
        ("mul", lambda ts: (ts[0] * ts[1]).sum(), [r(3, 4), r(3, 4)]),
        ("div", lambda ts: (ts[0] / ts[1]).sum(), [r(3, 4), r_pos(3, 4)]),
        ("pow", lambda ts: (ts[0] ** 3).sum(), [r(5)]),
        ("matmul", lambda ts: (ts[0] @ ts[1]).sum(), [r(4, 3), r(3, 2)]),
        ("matmul_batched", lambda ts: (ts[0] @ ts[1]).sum(), [r(2, 4, 3), r(2, 3, 2)]),
        ("reshape_transpose",
         lambda ts: (ts[0].reshape(4, 3).transpose(1, 0) * ts[1]).sum(),
         [r(2, 6), r(3, 4)]),
        ("getitem", lambda ts: (ts[0][1:, ::2] ** 2).sum(), [r(4, 6)]),
        ("sum_axis", lambda ts: (ts[0].sum(axis=1) ** 2).sum(), [r(3, 5)]),
        ("mean", lambda ts: (ts[0].mean(axis=0) * ts[0].mean()).sum(), [r(4, 3)]),
        ("exp", lambda ts: ts[0].exp().sum(), [r(3, 3)]),
        ("log", lambda ts: ts[0].log().sum(), [r_pos(3, 3)]),
        ("sqrt", lambda ts: ts[0].sqrt().sum(), [r_pos(3, 3)]),
        ("tanh", lambda ts: ts[0].tanh().sum(), [r(3, 3)]),
        ("relu", lambda ts: (ts[0].relu() * ts[0].relu()).sum(), [r_off_kink(4, 4)]),
        ("sigmoid", lambda ts: ts[0].sigmoid().sum(), [r(3, 3)]),
        ("abs", lambda ts: ts[0].abs().sum(), [r_off_kink(4, 4)]),
        ("concat", lambda ts: (concat([ts[0], ts[1]], axis=1) ** 2).sum(),
         [r(2, 3), r(2, 2)]),
        ("stack", lambda ts: (stack([ts[0], ts[1]], axis=0) ** 3).sum(),
         [r(2, 3), r(2, 3)]),
        ("take_rows", lambda ts: take_rows(ts[0], labels).sum(), [r(4, 3)]),
        ("embedding", lambda ts: (embedding_lookup(ts[0], emb_idx) ** 2).sum(),
         [r(5, 3)]),
        ("softmax", lambda ts: (ops.softmax(ts[0]) * ts[1]).sum(), [r(3, 5), r(3, 5)]),
        ("log_softmax", lambda ts: (ops.log_softmax(ts[0]) * ts[1]).sum(),
         [r(3, 5), r(3, 5)]),
        ("layernorm", lambda ts: (ops.layernorm(ts[0], ts[1], ts[2]) ** 2).sum(),
         [r(3, 6), r_pos(6), r(6)]),
        ("attention",
         lambda ts: (ops.attention(ts[0], ts[1], ts[2], 2) ** 2).sum(),
         [r(5, 4), r(5, 4), r(5, 4)]),
        ("attention_batched",
         lambda ts: (ops.attention(ts[0], ts[1], ts[2], 2) * ts[3]).sum(),
         [r(2, 4, 4), r(2, 4, 4), r(2, 4, 4), r(2, 4, 4)]),
        ("attention_cross",
         lambda ts: (ops.attention(ts[0], ts[1], ts[2], 2) ** 2).sum(),
         [r(3, 4), r(6, 4), r(6, 4)]),
        ("conv2d",
         lambda ts: (ops.conv2d(ts[0], ts[1], ts[2], stride=2, pad=1) ** 2).sum(),
         [r(2, 2, 6, 6), r(3, 2, 3, 3), r(3)]),
        ("cross_entropy", lambda ts: ops.cross_entropy(ts[0], labels), [r(4, 3)]),
        ("kl", lambda ts: ops.kl_standard_normal(ts[0], ts[1]), [r(3, 4), r(3, 4)]),
        ("l1", lambda ts: ops.l1_loss(ts[0], ts[1]),
         [r_off_kink(3, 4), np.zeros((3, 4))]),
    ]
    return cases


def run_suite(seed: int = 0, n_seeds: int = 5, h: float = 1e-5,
              tol: float = 1e-4) -> list[tuple[str, float, bool]]:
    """Check every op over n_seeds random draws; returns (name, err, ok)."""
    results = []
    for name_i in range(n_seeds):
        rng = np.random.default_rng(seed + name_i)
        for name, fn, xs in _case_list(rng):
            err = max_rel_error(fn, xs, h)
            results.append((f"{name}[seed{seed + name_i}]", err, err < tol))
    return results
