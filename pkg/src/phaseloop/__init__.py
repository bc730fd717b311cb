"""phaseloop: phase-conditioned action-chunking control with failure recovery,
validated in a deterministic 2D deformable-object simulator."""

__version__ = "0.1.0"
