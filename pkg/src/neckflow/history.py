"""Flow states, surgery records and the snapshot ring buffer."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .profile import RadialProfile, curvature_field


@dataclass(frozen=True, eq=False)
class FlowState:
    profile: RadialProfile
    time: float = 0.0
    step_count: int = 0

    @cached_property
    def curvatures(self):
        """(lam_axial, lam_round, H) at every sample, cached."""
        lam_a, lam_r, H, _ = curvature_field(self.profile, 0)
        return lam_a, lam_r, H

    def curvature_derivatives(self, k):
        key = f"_grad_{k}"
        if key not in self.__dict__:
            self.__dict__[key] = curvature_field(self.profile, k)
        return self.__dict__[key]


@dataclass(frozen=True)
class SurgeryRecord:
    time: float
    region: tuple
    cap_params: dict
    pre_neck_certificate: object = None

    def __post_init__(self):
        if not self.region[0] < self.region[1]:
            raise ValueError("surgery region must be a nonempty interval")

    def overlaps(self, lo, hi):
        return self.region[0] <= hi and lo <= self.region[1]


@dataclass
class FlowHistory:
    """Time-ordered snapshots (bounded) plus every surgery performed so far."""

    capacity: int = 256
    snapshots: deque = field(default=None)
    surgeries: list = field(default_factory=list)

    def __post_init__(self):
        items = list(self.snapshots or [])
        self.snapshots = deque(items, maxlen=self.capacity)

    def append(self, state: FlowState):
        if self.snapshots and state.time <= self.snapshots[-1].time:
            raise ValueError("snapshot times must be strictly increasing")
        self.snapshots.append(state)

    def record_surgery(self, record: SurgeryRecord):
        self.surgeries.append(record)

    @property
    def times(self):
        return np.array([s.time for s in self.snapshots])

    @property
    def first_time(self):
        return self.snapshots[0].time if self.snapshots else np.inf

    @property
    def last(self):
        return self.snapshots[-1]

    def in_window(self, t0, t1, tol=1e-12):
        return [s for s in self.snapshots if t0 - tol <= s.time <= t1 + tol]

    def copy(self):
        return FlowHistory(self.capacity, deque(self.snapshots), list(self.surgeries))
