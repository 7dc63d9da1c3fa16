"""Records comparing measured discrete norms with a-priori bounds."""
from __future__ import annotations

from dataclasses import dataclass, field

#: relative slack allowed when comparing a measured value with its bound
AUDIT_SLACK = 1e-8


@dataclass
class EstimateAudit:
    name: str
    lhs: float
    rhs: float
    asserted: bool = True
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.lhs <= self.rhs * (1.0 + AUDIT_SLACK) + 1e-300)

    @property
    def ratio(self) -> float:
        if self.rhs == 0.0:
            return 0.0 if self.lhs == 0.0 else float("inf")
        return self.lhs / self.rhs

    def row(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "passed": self.passed,
                "asserted": self.asserted}
