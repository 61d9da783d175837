"""Radiation fault model: transient upsets, permanent cell damage, and
functional interrupts, generated from Poisson rates or explicit scripts.

Rates are events per simulated microsecond. Time-windowed multipliers allow
storm phases with elevated flux. Generation is fully deterministic given
(profile, seed): arrivals and target choices come from one dedicated
random stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .engine import RandomStream
from . import fabric as fab

TRANSIENT_STATE = "transient-state"
TRANSIENT_VMEM = "transient-validation-memory"
PERMANENT_CELL = "permanent-cell"
SEFI_TILE = "sefi-tile"
SEFI_SHARED = "sefi-shared"
MEMORY_WORD = "memory-word"

KINDS = (TRANSIENT_STATE, TRANSIENT_VMEM, PERMANENT_CELL, SEFI_TILE, SEFI_SHARED, MEMORY_WORD)


@dataclass
class FaultEvent:
    at: int
    kind: str
    fault_id: int = -1
    tile: Optional[str] = None
    thread: Optional[str] = None
    word: int = 0
    masks: tuple[int, ...] = (0,)
    partition: Optional[str] = None
    cell: int = 0
    flavor: str = fab.DD
    duration: int = 0

    def target_label(self) -> str:
        if self.kind in (TRANSIENT_STATE, TRANSIENT_VMEM, MEMORY_WORD):
            return f"{self.tile}/{self.thread}[{self.word}]"
        if self.kind == PERMANENT_CELL:
            return f"{self.partition}:{self.cell}"
        if self.kind == SEFI_TILE:
            return str(self.tile)
        return "shared"


@dataclass
class RateWindow:
    start: int
    end: int
    factor: float


@dataclass
class FaultProfile:
    rates: dict[str, float] = field(default_factory=dict)
    explicit: list[FaultEvent] = field(default_factory=list)
    windows: list[RateWindow] = field(default_factory=list)
    multi_word_prob: float = 0.0
    sefi_duration: int = 1000

    def __post_init__(self):
        for kind, rate in self.rates.items():
            if kind not in KINDS:
                raise ValueError(f"unknown fault kind {kind!r}")
            if rate < 0:
                raise ValueError(f"rate for {kind} must be >= 0")


@dataclass
class TargetSpace:
    """Everything a generated fault may hit, fixed at generation time."""
    tiles: list[str]
    threads_on: dict[str, list[str]]          # tile -> thread ids
    state_words: dict[str, int]               # thread id -> word count
    partitions: list[str]                     # includes the shared region
    cells_per_partition: dict[str, int]


def _segments(horizon: int, windows: list[RateWindow]) -> list[tuple[int, int, float]]:
    cuts = {0, horizon}
    for w in windows:
        cuts.add(max(0, min(horizon, w.start)))
        cuts.add(max(0, min(horizon, w.end)))
    points = sorted(cuts)
    segs = []
    for a, b in zip(points, points[1:]):
        factor = 1.0
        for w in windows:
            if w.start <= a and b <= w.end:
                factor = w.factor
        segs.append((a, b, factor))
    return segs


def _nonzero_mask(stream: RandomStream) -> int:
    while True:
        m = stream.uniform64()
        if m:
            return m


def _pick_target(event: FaultEvent, space: TargetSpace, stream: RandomStream):
    if event.kind in (TRANSIENT_STATE, TRANSIENT_VMEM, MEMORY_WORD):
        tile = stream.choice(space.tiles)
        threads = space.threads_on.get(tile) or []
        if not threads:
            # spare tiles host no running threads; keep the draw but let
            # apply() absorb it
            event.tile = tile
            return
        thread = stream.choice(threads)
        event.tile = tile
        event.thread = thread
        event.word = stream.uniform_range(0, space.state_words[thread] - 1)
        event.masks = (_nonzero_mask(stream),)
    elif event.kind == PERMANENT_CELL:
        part = stream.choice(space.partitions)
        event.partition = part
        event.cell = stream.uniform_range(0, space.cells_per_partition[part] - 1)
    elif event.kind == SEFI_TILE:
        event.tile = stream.choice(space.tiles)


def generate(
    profile: FaultProfile,
    horizon: int,
    stream: RandomStream,
    space: TargetSpace,
) -> list[FaultEvent]:
    """Merge explicit script events with Poisson arrivals per fault kind."""
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    events: list[FaultEvent] = []
    for kind in KINDS:
        rate = profile.rates.get(kind, 0.0)
        if rate <= 0:
            continue
        for seg_start, seg_end, factor in _segments(horizon, profile.windows):
            eff = rate * factor
            if eff <= 0:
                continue
            t = float(seg_start)
            while True:
                t += stream.exponential(eff)
                at = int(t)
                if at >= seg_end:
                    break
                ev = FaultEvent(at=at, kind=kind, duration=profile.sefi_duration)
                _pick_target(ev, space, stream)
                if ev.kind == TRANSIENT_STATE and profile.multi_word_prob > 0:
                    roll = (stream.uniform64() >> 11) * 2.0**-53
                    if roll < profile.multi_word_prob and ev.thread is not None:
                        ev.masks = (ev.masks[0], _nonzero_mask(stream))
                events.append(ev)
    events.extend(profile.explicit)
    events.sort(key=lambda e: e.at)
    for i, ev in enumerate(events):
        ev.fault_id = i
    return events
