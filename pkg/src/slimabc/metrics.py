"""Run reports, traffic accounting helpers, and scaling fits."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np


def duplicate_ratio(batches: Sequence[Sequence[bytes]]) -> float:
    """1 - unique/total over all requests in the delivered batches."""
    reqs = [r for batch in batches for r in batch]
    if not reqs:
        return 0.0
    return 1.0 - len(set(reqs)) / len(reqs)


def scaling_fit(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log(y) against log(x)."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise ValueError("need at least two points")
    return float(np.polyfit(np.log(np.asarray(xs, dtype=float)),
                            np.log(np.asarray(ys, dtype=float)), 1)[0])


@dataclass
class RunReport:
    config: dict
    stalled: bool
    steps: int
    messages: int  # envelopes sent by honest parties, counted at delivery
    bytes: int
    finalized_instances: int
    phases: Dict[int, int]  # instance -> max phases over honest parties
    rounds: Dict[str, int]  # "instance:slot" -> max decided round over honest
    decisions: Dict[str, int]  # "instance:slot" -> decided bit
    duplicate_ratios: Dict[int, float]
    delivered_total: int
    log_digest: str
    lemma: List[dict]
    censorship: Optional[dict]
    assertions: Dict[str, bool]
    failures: List[str] = field(default_factory=list)
    fairness_overrides: int = 0

    @property
    def ok(self) -> bool:
        return not self.stalled and all(self.assertions.values())

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "stalled": self.stalled,
            "steps": self.steps,
            "messages": self.messages,
            "bytes": self.bytes,
            "finalized_instances": self.finalized_instances,
            "phases": {str(k): v for k, v in sorted(self.phases.items())},
            "rounds": dict(sorted(self.rounds.items())),
            "decisions": dict(sorted(self.decisions.items())),
            "duplicate_ratios": {str(k): v for k, v in sorted(self.duplicate_ratios.items())},
            "delivered_total": self.delivered_total,
            "log_digest": self.log_digest,
            "lemma": self.lemma,
            "censorship": self.censorship,
            "assertions": dict(sorted(self.assertions.items())),
            "failures": list(self.failures),
            "fairness_overrides": self.fairness_overrides,
            "ok": self.ok,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def write_csv(path: str, rows: List[dict]) -> None:
    if not rows:
        raise ValueError("no rows to write")
    fields = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
