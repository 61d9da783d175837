import pytest

from tilesim.tiles import (
    ACTIVE, BOOTING, DEFUNCT, IDLE_SPARE, PERFORM_UPDATE, REBOOTING,
    RUN_THREADS, SLEEP, SUSPECT, UPDATING, InvalidTransition, NotOwner,
    RunWindow, Tile, TileGroup, ValidationMemory, scheduler_step,
)
from tilesim.workload import StateSnapshot


def test_single_writer_enforced():
    vmem = ValidationMemory("C0")
    vmem.write_checksum("C0", "Ta", 1, 123)
    with pytest.raises(NotOwner):
        vmem.write_checksum("C1", "Ta", 1, 999)
    with pytest.raises(NotOwner):
        vmem.mark_ready("C1", "G1", 1)


def test_ready_flag_after_entries():
    vmem = ValidationMemory("C0")
    vmem.write_checksum("C0", "Ta", 2, 1)
    assert not vmem.is_ready("G1", 2)
    vmem.write_checksum("C0", "Tb", 2, 2)
    vmem.mark_ready("C0", "G1", 2)
    assert vmem.is_ready("G1", 2)
    assert vmem.checksum_of("Ta", 2) == 1
    assert vmem.checksum_of("Tb", 2) == 2


def test_snapshot_storage():
    vmem = ValidationMemory("C0")
    snap = StateSnapshot(thread_id="Ta", cycle_counter=4, state=(1, 2))
    vmem.write_snapshot("C0", 3, snap)
    assert vmem.snapshot_of("Ta", 3) == snap
    assert vmem.snapshot_of("Ta", 2) is None


def test_status_machine_allows_documented_paths():
    tile = Tile("C0", "p0")
    for path in [
        (ACTIVE, SUSPECT, ACTIVE, REBOOTING, BOOTING, IDLE_SPARE,
         UPDATING, ACTIVE, SUSPECT, REBOOTING, BOOTING, DEFUNCT, REBOOTING,
         BOOTING, IDLE_SPARE),
    ]:
        tile = Tile("C0", "p0")
        for status in path:
            tile.set_status(status)


def test_status_machine_rejects_illegal():
    tile = Tile("C0", "p0")
    tile.set_status(ACTIVE)
    with pytest.raises(InvalidTransition):
        tile.set_status(IDLE_SPARE)   # active tiles must reboot first
    tile.set_status(REBOOTING)
    with pytest.raises(InvalidTransition):
        tile.set_status(ACTIVE)       # must go through booting


def test_spare_and_defunct_host_nothing():
    tile = Tile("C0", "p0")
    tile.set_status(ACTIVE)
    tile.groups.append("G1")
    tile.hosted_groups.add("TG1")
    tile.set_status(REBOOTING)
    assert not tile.groups and not tile.hosted_groups
    tile.set_status(BOOTING)
    tile.set_status(DEFUNCT)
    assert not tile.hosted_groups


def test_tile_group_invariants():
    with pytest.raises(ValueError):
        TileGroup("G1", members=["C0", "C1"], thread_groups=["TG1"],
                  base_period=0, comparison_deadline=10, grace_period=10)
    g = TileGroup("G1", members=["C0", "C1", "C2"], thread_groups=["TG1"],
                  base_period=1000, comparison_deadline=100, grace_period=60)
    assert g.target_size == 3
    assert g.period == 1000
    g.period_factor = 2
    assert g.period == 2000


def test_scheduler_step_conditions():
    tile = Tile("C0", "p0")
    tile.set_status(ACTIVE)
    tile.hosted_groups.add("TG1")
    assert scheduler_step(tile) == RUN_THREADS
    assert scheduler_step(tile, pending_update_donor="C1") == PERFORM_UPDATE
    tile.hosted_groups.clear()
    assert scheduler_step(tile) == SLEEP
    spare = Tile("C1", "p1")
    spare.set_status(IDLE_SPARE)
    spare.set_status(UPDATING)
    assert scheduler_step(spare) == PERFORM_UPDATE


def test_run_window_split_advance_is_exact():
    # advancing in arbitrary sub-intervals must count the same work cycles
    # as one whole advance, for any work_per_tick
    whole = RunWindow()
    whole.resume(100)
    split = RunWindow()
    split.resume(100)
    total = 0
    for stop in (117, 118, 250, 333, 901):
        total += split.cycles(stop, 25)
        split.advanced_to = stop
    assert total == whole.cycles(901, 25)
