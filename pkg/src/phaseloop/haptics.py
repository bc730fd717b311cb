"""Force-to-vibration mapping for bilateral feedback.

Pure function from a normalized force magnitude to a pulse schedule inside a
fixed 500 ms window: near-zero force gives a single faint 50 ms pulse, full
force fills the window with contiguous pulses at full amplitude. Count and
amplitude both increase monotonically in between. Device drivers are out of
scope; schedules serialize to JSON for downstream adapters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

WINDOW_MS = 500.0
PULSE_MS = 50.0
MAX_PULSES = int(WINDOW_MS // PULSE_MS)
MIN_AMPLITUDE = 0.1


@dataclass(frozen=True)
class Pulse:
    start_ms: float
    duration_ms: float
    amplitude: float


@dataclass(frozen=True)
class VibrationSchedule:
    window_ms: float
    pulses: tuple[Pulse, ...]

    def validate(self):
        prev_end = 0.0
        for p in self.pulses:
            if not (0.0 <= p.amplitude <= 1.0):
                raise ValueError(f"amplitude out of range: {p.amplitude}")
            if p.start_ms < prev_end - 1e-9:
                raise ValueError("pulses overlap or are unsorted")
            if p.start_ms + p.duration_ms > self.window_ms + 1e-9:
                raise ValueError("pulse extends past the window")
            prev_end = p.start_ms + p.duration_ms
        return self

    def to_json(self) -> str:
        return json.dumps(
            {
                "window_ms": self.window_ms,
                "pulses": [
                    {"start_ms": p.start_ms, "duration_ms": p.duration_ms,
                     "amplitude": p.amplitude}
                    for p in self.pulses
                ],
            },
            sort_keys=True,
        )


def force_to_schedule(f: float) -> VibrationSchedule:
    """Map normalized force in [0, 1] (clamped) to a vibration schedule."""
    f = min(max(float(f), 0.0), 1.0)
    count = 1 + round(f * (MAX_PULSES - 1))
    amplitude = MIN_AMPLITUDE + f * (1.0 - MIN_AMPLITUDE)
    if count == 1:
        starts = [0.0]
    else:
        # evenly spaced; at count == MAX_PULSES the pulses tile the window
        gap = (WINDOW_MS - count * PULSE_MS) / (count - 1)
        starts = [i * (PULSE_MS + gap) for i in range(count)]
    pulses = tuple(Pulse(s, PULSE_MS, amplitude) for s in starts)
    return VibrationSchedule(WINDOW_MS, pulses).validate()
