"""Run metrics: command accounting, MAC pathology counters, latencies, doses."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class Metrics:
    # command accounting: issued = COMMAND frames fully transmitted,
    # delivered = ACK-confirmed.  lost is derived so delivered + lost = issued.
    issued: int = 0
    delivered: int = 0
    # controller-bound requests (relay path) accounted separately
    requests_issued: int = 0
    requests_served: int = 0
    retries: int = 0
    exits: int = 0
    collisions: int = 0
    rx_rejects: int = 0
    blocks_sent: int = 0
    acks_sent: int = 0
    doses: list[dict] = field(default_factory=list)
    actuations: list[dict] = field(default_factory=list)
    latencies: list[dict] = field(default_factory=list)  # per event kind, cycles
    timeouts: list[dict] = field(default_factory=list)

    @property
    def lost(self) -> int:
        return self.issued - self.delivered

    def delivery_ratio(self) -> float:
        if self.issued == 0 and self.requests_issued == 0:
            return 1.0
        issued = self.issued + self.requests_issued
        return (self.delivered + self.requests_served) / issued

    def total_dose(self) -> float:
        return sum(d["dose"] for d in self.doses)

    def summary(self) -> dict:
        return {
            "issued": self.issued,
            "delivered": self.delivered,
            "lost": self.lost,
            "requests_issued": self.requests_issued,
            "requests_served": self.requests_served,
            "delivery_ratio": self.delivery_ratio(),
            "retries": self.retries,
            "exits": self.exits,
            "collisions": self.collisions,
            "rx_rejects": self.rx_rejects,
            "blocks_sent": self.blocks_sent,
            "acks_sent": self.acks_sent,
            "total_dose": self.total_dose(),
            "actuations": len(self.actuations),
            "timeouts": len(self.timeouts),
        }

    def to_json(self) -> str:
        body = {
            "summary": self.summary(),
            "doses": self.doses,
            "actuations": self.actuations,
            "latencies": self.latencies,
            "timeouts": self.timeouts,
        }
        return json.dumps(body, indent=2, sort_keys=True)
