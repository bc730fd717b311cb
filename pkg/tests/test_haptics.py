import json

import numpy as np

from phaseloop import haptics


def test_zero_force_single_faint_pulse():
    s = haptics.force_to_schedule(0.0)
    assert len(s.pulses) == 1
    assert s.pulses[0].duration_ms == 50.0
    assert s.pulses[0].amplitude == 0.1


def test_full_force_fills_window():
    s = haptics.force_to_schedule(1.0)
    assert len(s.pulses) == 10
    assert all(p.amplitude == 1.0 for p in s.pulses)
    # contiguous: each pulse starts where the previous one ends
    for a, b in zip(s.pulses[:-1], s.pulses[1:]):
        assert b.start_ms == a.start_ms + a.duration_ms
    last = s.pulses[-1]
    assert last.start_ms + last.duration_ms == s.window_ms


def test_monotone_count_and_amplitude_fine_grid():
    grid = np.arange(0.0, 1.0 + 1e-9, 1e-3)
    prev_n, prev_a = 0, 0.0
    for f in grid:
        s = haptics.force_to_schedule(f)
        s.validate()
        n, a = len(s.pulses), s.pulses[0].amplitude
        assert n >= prev_n
        assert a >= prev_a - 1e-12
        prev_n, prev_a = n, a


def test_out_of_range_forces_clamp():
    assert len(haptics.force_to_schedule(-3.0).pulses) == 1
    assert len(haptics.force_to_schedule(7.0).pulses) == 10


def test_json_round_trip():
    s = haptics.force_to_schedule(0.42)
    d = json.loads(s.to_json())
    assert d["window_ms"] == 500.0
    assert len(d["pulses"]) == len(s.pulses)
