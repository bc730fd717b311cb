"""Temporal ensembling of overlapping action chunks.

Each policy inference pushes a whole chunk of future actions; queries blend
every buffered chunk that covers the requested time with exponential weights
w_i = exp(-m * age_i), age 0 being the oldest chunk. With the default m=0.01
older chunks are weighted slightly higher (classic chunking behaviour); a
negative m favors the newest chunk. The buffer is cleared on every committed
phase transition so behaviours do not blend across a transition.
"""

from __future__ import annotations

import numpy as np


class EmptyBufferError(RuntimeError):
    pass


class ChunkBuffer:
    def __init__(self, row_period: float, decay: float = 0.01,
                 gripper_dims: tuple[int, ...] = ()):
        if row_period <= 0:
            raise ValueError("row_period must be positive")
        self.row_period = float(row_period)
        self.decay = float(decay)
        self.gripper_dims = tuple(gripper_dims)
        self._chunks: list[tuple[float, np.ndarray]] = []  # (issue time, rows)

    def __len__(self) -> int:
        return len(self._chunks)

    def reset(self):
        self._chunks.clear()

    def push(self, chunk: np.ndarray, t: float):
        chunk = np.asarray(chunk, dtype=np.float64)
        if chunk.ndim != 2:
            raise ValueError("chunk must be (horizon, action_dim)")
        if self._chunks and t < self._chunks[-1][0]:
            raise ValueError("push times must be non-decreasing")
        self._chunks.append((float(t), chunk))
        self._drop_expired(t)

    def _drop_expired(self, t: float):
        horizon = lambda c: c[0] + (c[1].shape[0] - 1) * self.row_period
        self._chunks = [c for c in self._chunks if horizon(c) >= t - 1e-12]

    def query(self, t: float) -> np.ndarray:
        """Weighted blend of all chunks covering time t.

        Rows are interpolated piecewise-linearly inside each chunk, so the
        result always lies within the per-coordinate range of the contributing
        rows. Gripper dims are blended then thresholded at 0.5.
        """
        if not self._chunks:
            raise EmptyBufferError("query on an empty chunk buffer; push first")
        rows = []
        ages = []
        for age, (t0, chunk) in enumerate(self._chunks):
            u = (t - t0) / self.row_period
            n = chunk.shape[0]
            if u < -1e-9 or u > n - 1 + 1e-9:
                continue
            u = min(max(u, 0.0), n - 1.0)
            lo = int(np.floor(u))
            hi = min(lo + 1, n - 1)
            frac = u - lo
            rows.append((1.0 - frac) * chunk[lo] + frac * chunk[hi])
            ages.append(age)
        if not rows:
            raise EmptyBufferError(f"no buffered chunk covers t={t}")
        w = np.exp(-self.decay * np.asarray(ages, dtype=np.float64))
        w /= w.sum()
        out = np.einsum("i,ij->j", w, np.asarray(rows))
        for d in self.gripper_dims:
            out[d] = 1.0 if out[d] >= 0.5 else 0.0
        return out
