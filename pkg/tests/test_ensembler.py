import numpy as np
import pytest

from phaseloop.ensembler import ChunkBuffer, EmptyBufferError


def make_buffer(**kw):
    return ChunkBuffer(row_period=1.0 / 30.0, **kw)


def test_single_chunk_returns_its_row_exactly():
    buf = make_buffer()
    chunk = np.arange(20.0)[:, None] * np.ones((1, 3))
    buf.push(chunk, t=0.0)
    for k in (0, 5, 19):
        np.testing.assert_allclose(buf.query(k / 30.0), chunk[k])


def test_two_chunks_uniform_weights_average():
    buf = ChunkBuffer(row_period=0.1, decay=0.0)
    buf.push(np.zeros((5, 2)), t=0.0)
    buf.push(np.ones((5, 2)), t=0.1)
    np.testing.assert_allclose(buf.query(0.2), [0.5, 0.5])


def test_reset_clears_then_next_query_uses_newest_only():
    buf = make_buffer()
    buf.push(np.zeros((10, 2)), t=0.0)
    buf.reset()
    fresh = np.full((10, 2), 7.0)
    buf.push(fresh, t=0.5)
    np.testing.assert_allclose(buf.query(0.5), fresh[0])


def test_query_after_reset_errors():
    buf = make_buffer()
    buf.push(np.zeros((4, 2)), t=0.0)
    buf.reset()
    with pytest.raises(EmptyBufferError):
        buf.query(0.0)


def test_reset_idempotent():
    buf = make_buffer()
    buf.reset()
    buf.reset()
    assert len(buf) == 0


def test_convexity_within_row_range():
    rng = np.random.default_rng(0)
    buf = ChunkBuffer(row_period=0.05, decay=0.01)
    chunks = [rng.normal(size=(8, 4)) for _ in range(3)]
    for i, c in enumerate(chunks):
        buf.push(c, t=0.05 * i)
    t = 0.2
    covering = []
    for i, c in enumerate(chunks):
        u = (t - 0.05 * i) / 0.05
        lo, hi = int(np.floor(u)), min(int(np.floor(u)) + 1, 7)
        covering += [c[lo], c[hi]]
    covering = np.asarray(covering)
    out = buf.query(t)
    assert (out >= covering.min(axis=0) - 1e-12).all()
    assert (out <= covering.max(axis=0) + 1e-12).all()


def test_weights_positive_and_age_convention():
    # decay > 0: oldest chunk (age 0) carries the largest weight
    buf = ChunkBuffer(row_period=0.1, decay=1.0)
    buf.push(np.zeros((10, 1)), t=0.0)
    buf.push(np.ones((10, 1)), t=0.1)
    out = buf.query(0.1)[0]
    w0, w1 = np.exp(0.0), np.exp(-1.0)
    np.testing.assert_allclose(out, w1 / (w0 + w1))
    # negative decay: newest chunk dominates
    buf2 = ChunkBuffer(row_period=0.1, decay=-1.0)
    buf2.push(np.zeros((10, 1)), t=0.0)
    buf2.push(np.ones((10, 1)), t=0.1)
    assert buf2.query(0.1)[0] > 0.5


def test_gripper_channel_thresholded():
    buf = ChunkBuffer(row_period=0.1, decay=0.0, gripper_dims=(1,))
    buf.push(np.array([[0.0, 0.4]] * 4), t=0.0)
    buf.push(np.array([[1.0, 0.8]] * 4), t=0.0)
    out = buf.query(0.1)
    assert out[0] == pytest.approx(0.5)
    assert out[1] == 1.0  # blended 0.6 -> thresholded


def test_expired_chunks_dropped():
    buf = ChunkBuffer(row_period=0.1, decay=0.0)
    buf.push(np.zeros((3, 1)), t=0.0)  # covers to 0.2
    buf.push(np.ones((3, 1)), t=1.0)
    assert len(buf) == 1


def test_empty_query_before_any_push():
    with pytest.raises(EmptyBufferError):
        make_buffer().query(0.0)


def test_continuity_within_chunk():
    rng = np.random.default_rng(1)
    buf = ChunkBuffer(row_period=0.1, decay=0.01)
    chunk = np.cumsum(rng.normal(size=(20, 2)), axis=0) * 0.01
    buf.push(chunk, t=0.0)
    row_delta = np.abs(np.diff(chunk, axis=0)).max()
    ts = np.arange(0.0, 1.9, 0.008)
    vals = np.array([buf.query(t) for t in ts])
    assert np.abs(np.diff(vals, axis=0)).max() <= row_delta + 1e-12
