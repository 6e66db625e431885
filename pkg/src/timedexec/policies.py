"""Behavior policies shared by agents and the adversary harness."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass

__all__ = ["Behavior", "BehaviorPolicy", "HONEST"]


class Behavior(str, enum.Enum):
    HONEST = "honest"
    IDENTITY_DISCLOSURE = "identity_disclosure"
    ADVANCE_DISCLOSURE = "advance_disclosure"
    ABSENT = "absent"
    FAKE_SUBMISSION = "fake_submission"
    INADVERTENT = "inadvertent"


@dataclass(frozen=True)
class BehaviorPolicy:
    kind: Behavior = Behavior.HONEST
    p_im: float = 0.0
    trigger_tick: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Behavior(self.kind))
        if not 0.0 <= self.p_im <= 1.0:
            raise ValueError(f"p_im must lie in [0, 1], got {self.p_im}")

    def resolve(self, rng: random.Random) -> "BehaviorPolicy":
        """Collapse an inadvertent policy into absent or honest."""
        if self.kind is not Behavior.INADVERTENT:
            return self
        kind = Behavior.ABSENT if rng.random() < self.p_im else Behavior.HONEST
        return BehaviorPolicy(kind, self.p_im, self.trigger_tick)

    @property
    def leaks(self) -> bool:
        return self.kind in (Behavior.IDENTITY_DISCLOSURE, Behavior.ADVANCE_DISCLOSURE)


HONEST = BehaviorPolicy()
