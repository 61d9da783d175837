"""Synthetic replicated application threads.

A thread's observable state is a small vector of 64-bit words evolved by a
deterministic multiply-xor-rotate mix, so replicas stay bit-identical until
something corrupts one of them, and any single-bit corruption avalanches
instead of cancelling out. The four per-thread hooks (init, checksum, sync,
update) operate on this state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace

from .engine import MASK64, mix64

# checksum fold seed
CHECKSUM_SEED = 0xC0F5E11DC0DEF00D

# state mix parameters
MIX_MULT = 0x2545F4914F6CDD1D
MIX_TAG = 0x9E3779B97F4A7C15


class ThreadIdMismatch(ValueError):
    """A snapshot was applied to a thread it does not belong to."""


@dataclass(frozen=True)
class ThreadSpec:
    thread_id: str
    criticality: int
    checkpoint_period: int
    state_words: int = 4
    work_per_tick: int = 1
    emits_output: bool = False
    viable_delay: int = 0      # checkpoint deferral while the thread reaches a stable point
    checksum_cost: int = 10
    sync_cost: int = 10
    update_cost: int = 10

    def __post_init__(self):
        if self.state_words < 1:
            raise ValueError(f"{self.thread_id}: state_words must be >= 1")
        if self.checkpoint_period <= 0:
            raise ValueError(f"{self.thread_id}: checkpoint_period must be > 0")
        if self.work_per_tick < 1:
            raise ValueError(f"{self.thread_id}: work_per_tick must be >= 1")


@dataclass
class ThreadState:
    spec: ThreadSpec
    state: list[int]
    cycle_counter: int = 0
    # Diagnostic flag for the run oracle only. Protocol logic never reads it;
    # tests enforce that by running with reads trapped.
    corrupted: bool = False


@dataclass(frozen=True)
class StateSnapshot:
    thread_id: str
    cycle_counter: int
    state: tuple[int, ...]


def _rotl(x: int, r: int) -> int:
    return ((x << r) | (x >> (64 - r))) & MASK64


def _mix_word(w: int, cycle: int) -> int:
    # Composition of bijections: a differing word can never re-converge.
    w ^= (cycle * MIX_TAG) & MASK64
    w = (w * MIX_MULT) & MASK64
    w ^= w >> 29
    return _rotl(w, 17)


def init_thread(spec: ThreadSpec, tile_id: str) -> ThreadState:
    """Build the initial state for a thread replica.

    The state depends on the thread id alone, never the tile, so every
    replica starts bit-identical.
    """
    digest = hashlib.blake2b(spec.thread_id.encode(), digest_size=8).digest()
    base = int.from_bytes(digest, "little")
    words = [_mix_word((base + k) & MASK64, k) for k in range(spec.state_words)]
    return ThreadState(spec=spec, state=words, cycle_counter=0)


def execute_slice(ts: ThreadState, ticks: int) -> ThreadState:
    """Advance the thread by floor(ticks / work_per_tick) work cycles."""
    if ticks < 0:
        raise ValueError("ticks must be >= 0")
    cycles = ticks // ts.spec.work_per_tick
    words = list(ts.state)
    counter = ts.cycle_counter
    for _ in range(cycles):
        counter += 1
        for i, w in enumerate(words):
            words[i] = _mix_word(w, counter + i)
    return replace(ts, state=words, cycle_counter=counter)


def checksum_callback(ts: ThreadState) -> int:
    """64-bit fold over the state words and cycle counter.

    Each word is absorbed through a full-avalanche mix so that single-bit
    corruption anywhere in the state changes the result.
    """
    h = CHECKSUM_SEED
    for w in ts.state:
        h = mix64(h ^ w)
    return mix64(h ^ ts.cycle_counter)


def sync_callback(ts: ThreadState) -> StateSnapshot:
    return StateSnapshot(
        thread_id=ts.spec.thread_id,
        cycle_counter=ts.cycle_counter,
        state=tuple(ts.state),
    )


def update_callback(target: ThreadState, snap: StateSnapshot) -> ThreadState:
    if snap.thread_id != target.spec.thread_id:
        raise ThreadIdMismatch(
            f"snapshot of {snap.thread_id!r} applied to {target.spec.thread_id!r}"
        )
    return replace(target, state=list(snap.state), cycle_counter=snap.cycle_counter)


@dataclass(frozen=True)
class OutputRecord:
    thread_id: str
    cycle_counter: int
    digest: int


def emit_output(ts: ThreadState) -> OutputRecord | None:
    """Digest of the thread's externally visible result for this cycle."""
    if not ts.spec.emits_output:
        return None
    return OutputRecord(
        thread_id=ts.spec.thread_id,
        cycle_counter=ts.cycle_counter,
        digest=checksum_callback(ts),
    )
