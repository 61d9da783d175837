"""Metrics derived purely from a run trace, so they can be recomputed
offline from the trace file alone.

The fault accounting identity ties every injected fault to exactly one
outcome: corrected + replaced + repaired + degraded + undetected +
absorbed == injected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .trace import TraceRecord

OUTCOMES = ("corrected", "replaced", "repaired", "degraded")


@dataclass
class MetricsSummary:
    horizon: int = 0
    partial: bool = False
    loss_of_mission: bool = False
    injected: int = 0
    absorbed: int = 0
    undetected: int = 0
    corrected: int = 0
    replaced: int = 0
    repaired: int = 0
    degraded: int = 0
    detected: int = 0
    faults_by_kind: dict = field(default_factory=dict)
    detection_latency_mean: Optional[float] = None
    detection_latency_max: Optional[int] = None
    recovery_latency_mean: Optional[float] = None
    recovery_latency_max: Optional[int] = None
    overhead_by_tile: dict = field(default_factory=dict)
    availability: dict = field(default_factory=dict)   # thread id -> fraction
    checkpoints: int = 0
    propagation_window_count: int = 0
    outputs_escaped: int = 0
    no_majority_events: int = 0
    undetected_divergences: int = 0
    supervisor_commands: int = 0

    def identity_holds(self) -> bool:
        return (self.corrected + self.replaced + self.repaired + self.degraded
                + self.undetected + self.absorbed) == self.injected

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "partial": self.partial,
            "loss_of_mission": self.loss_of_mission,
            "faults": {
                "injected": self.injected,
                "absorbed": self.absorbed,
                "undetected": self.undetected,
                "corrected": self.corrected,
                "replaced": self.replaced,
                "repaired": self.repaired,
                "degraded": self.degraded,
                "detected": self.detected,
                "by_kind": self.faults_by_kind,
            },
            "latency": {
                "detection_mean": self.detection_latency_mean,
                "detection_max": self.detection_latency_max,
                "recovery_mean": self.recovery_latency_mean,
                "recovery_max": self.recovery_latency_max,
            },
            "overhead_by_tile": self.overhead_by_tile,
            "availability": self.availability,
            "checkpoints": self.checkpoints,
            "outputs": {
                "propagation_window_count": self.propagation_window_count,
                "escaped": self.outputs_escaped,
                "no_majority_events": self.no_majority_events,
            },
            "undetected_divergences": self.undetected_divergences,
            "supervisor_commands": self.supervisor_commands,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"


def compute_metrics(records: Iterable[TraceRecord]) -> MetricsSummary:
    m = MetricsSummary()
    records = list(records)

    horizon = None
    tg_map: dict[str, list[str]] = {}
    fault_kind: dict[int, str] = {}
    disposition: dict[int, str] = {}
    outcome: dict[int, str] = {}
    detections: list[tuple[int, int, str]] = []   # (fault id, at, group)
    detection_latencies: list[int] = []
    verdicts: list[TraceRecord] = []
    busy: dict[str, int] = {}
    tg_events: dict[str, list[tuple[int, bool]]] = {}

    for rec in records:
        kind = rec.kind
        p = rec.payload
        if kind == "run-start":
            m.horizon = p.get("horizon", 0)
            tg_map = p.get("tg_map", {})
        elif kind == "run-end":
            horizon = rec.at
            m.loss_of_mission = p.get("reason") == "loss-of-mission"
        elif kind == "fault":
            fid = p["id"]
            fault_kind[fid] = p["fault_kind"]
            disposition[fid] = p["disposition"]
        elif kind == "fault-detected":
            detections.append((p["id"], rec.at, p["group"]))
            detection_latencies.append(p["latency"])
        elif kind == "fault-outcome":
            outcome[p["id"]] = p["outcome"]
        elif kind == "verdict":
            verdicts.append(rec)
        elif kind == "checkpoint-end":
            m.checkpoints += 1
            for tile in p.get("tiles", []):
                busy[tile] = busy.get(tile, 0) + p["duration"]
        elif kind == "output-vote":
            m.propagation_window_count += len(p.get("divergent", []))
            m.outputs_escaped += p.get("escaped", 0)
            if p.get("no_majority"):
                m.no_majority_events += 1
        elif kind == "oracle-divergence":
            m.undetected_divergences += 1
        elif kind in ("command", "command-lost", "command-rejected"):
            m.supervisor_commands += 1
        elif kind == "tg-active":
            tg_events.setdefault(p["tg"], []).append((rec.at, p["active"]))

    m.partial = horizon is None
    if horizon is not None:
        m.horizon = horizon

    # fault accounting
    m.injected = len(fault_kind)
    for fid, kind in sorted(fault_kind.items()):
        final = outcome.get(fid)
        if disposition[fid] == "absorbed" or final == "absorbed":
            bucket = "absorbed"
        elif final in OUTCOMES:
            bucket = final
        else:
            bucket = "undetected"
        setattr(m, bucket, getattr(m, bucket) + 1)
        per = m.faults_by_kind.setdefault(kind, {})
        per[bucket] = per.get(bucket, 0) + 1
    m.detected = len({fid for fid, _, _ in detections})

    if detection_latencies:
        m.detection_latency_mean = sum(detection_latencies) / len(detection_latencies)
        m.detection_latency_max = max(detection_latencies)

    # recovery: from a fault's detection verdict to the group's next
    # all-agree checkpoint at full strength
    recoveries: list[int] = []
    for fid, at, group in detections:
        for rec in verdicts:
            if rec.at <= at or rec.payload.get("group") != group:
                continue
            if (rec.payload.get("result") == "all-agree"
                    and rec.payload.get("participants") == rec.payload.get("target_size")):
                recoveries.append(rec.at - at)
                break
    if recoveries:
        m.recovery_latency_mean = sum(recoveries) / len(recoveries)
        m.recovery_latency_max = max(recoveries)

    if m.horizon:
        m.overhead_by_tile = {
            tile: busy[tile] / m.horizon for tile in sorted(busy)
        }

    # availability from activity transitions
    end = m.horizon
    for tg, events in tg_events.items():
        total = 0
        active_since = None
        for at, active in events:
            if active and active_since is None:
                active_since = at
            elif not active and active_since is not None:
                total += at - active_since
                active_since = None
        if active_since is not None:
            total += max(0, end - active_since)
        frac = total / end if end else 0.0
        for thread in tg_map.get(tg, [tg]):
            m.availability[thread] = frac

    return m
