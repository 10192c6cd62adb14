from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional


@dataclass
class RoundRecord:
    round: int
    participants: list[int]
    test_accuracy: Optional[float] = None
    test_loss: Optional[float] = None
    bits_up: int = 0
    bits_down: int = 0
    uploads_skipped: int = 0
    stalled: bool = False


@dataclass
class RunResult:
    config: dict
    records: list[RoundRecord] = field(default_factory=list)
    converged_at: Optional[int] = None
    wall_time: float = 0.0

    @property
    def final_accuracy(self) -> Optional[float]:
        evaluated = [r.test_accuracy for r in self.records if r.test_accuracy is not None]
        return evaluated[-1] if evaluated else None

    @property
    def total_bits_up(self) -> int:
        return sum(r.bits_up for r in self.records)

    @property
    def total_bits_down(self) -> int:
        return sum(r.bits_down for r in self.records)

    def accuracy_at(self, round_index: int) -> Optional[float]:
        for r in self.records:
            if r.round == round_index:
                return r.test_accuracy
        return None
