from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

PASS, FAIL, INCONCLUSIVE = "PASS", "FAIL", "INCONCLUSIVE"
EXIT_CODES = {PASS: 0, FAIL: 1, INCONCLUSIVE: 2}


@dataclass
class Witness:
    x: np.ndarray
    direction: Optional[np.ndarray] = None
    velocity: Optional[np.ndarray] = None
    margin: float = 0.0
    extra: Dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict:
        def lst(v):
            return None if v is None else [float(c) for c in np.atleast_1d(v)]
        out = {"x": lst(self.x), "direction": lst(self.direction),
               "velocity": lst(self.velocity), "margin": float(self.margin)}
        for k, v in sorted(self.extra.items()):
            out[k] = lst(v) if isinstance(v, (np.ndarray, list, tuple)) else v
        return out


@dataclass
class Verdict:
    status: str
    witnesses: List[Witness] = field(default_factory=list)
    resolution: Dict[str, Any] = field(default_factory=dict)
    reason: str = ""

    @property
    def passed(self) -> bool:
        return self.status == PASS

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]

    @property
    def max_margin(self) -> float:
        return max((w.margin for w in self.witnesses), default=float("-inf"))

    def as_dict(self) -> dict:
        return {"status": self.status, "reason": self.reason,
                "resolution": _plain(self.resolution),
                "witnesses": [w.as_dict() for w in self.witnesses]}

    def to_text(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def worst_first(witnesses: List[Witness]) -> List[Witness]:
    """Max-margin first; ties broken by lexicographic x."""
    return sorted(witnesses, key=lambda w: (-w.margin, tuple(np.atleast_1d(w.x))))
