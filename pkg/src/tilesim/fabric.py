"""Reconfigurable-fabric abstraction: partitions, logic cells, damage, and
differently-routed configuration variants.

Two damage flavors exist. True silicon damage ("dd") is permanent and can
only be routed around; corrupted configuration memory ("config") behaves
the same until the partition is rewritten, which any reconfiguration does.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

DD = "dd"
CONFIG = "config"

SHARED = "shared"


@dataclass
class ConfigVariant:
    variant_id: str
    footprint: frozenset[int]


@dataclass
class Partition:
    partition_id: str
    cell_count: int = 64
    hosted_tile: Optional[str] = None
    active_variant: int = 0


def default_variants(cell_count: int = 64, anchor: tuple[int, ...] = (0,)) -> list[ConfigVariant]:
    """Three variants over distinct thirds of the partition plus shared anchor cells."""
    third = cell_count // 3
    variants = []
    for i in range(3):
        cells = set(range(1 + i * third, 1 + (i + 1) * third))
        cells.update(anchor)
        variants.append(ConfigVariant(f"v{i}", frozenset(cells)))
    return variants


class Fabric:
    def __init__(
        self,
        partitions: list[Partition],
        tile_variants: list[ConfigVariant],
        shared_variants: Optional[list[ConfigVariant]] = None,
        shared_cells: int = 64,
    ):
        self.partitions = {p.partition_id: p for p in partitions}
        if len(self.partitions) != len(partitions):
            raise ValueError("duplicate partition ids")
        self.tile_variants = tile_variants
        self.shared = Partition(SHARED, cell_count=shared_cells)
        self.shared_variants = shared_variants or list(tile_variants)
        # (partition_id, cell) -> flavor; dd entries never leave this map
        self.damage: dict[tuple[str, int], str] = {}

    # -- damage bookkeeping -------------------------------------------------

    def add_damage(self, partition_id: str, cell: int, flavor: str = DD):
        part = self._part(partition_id)
        if not 0 <= cell < part.cell_count:
            raise ValueError(f"cell {cell} outside partition {partition_id}")
        key = (partition_id, cell)
        # dd dominates: permanent damage is never downgraded
        if self.damage.get(key) != DD:
            self.damage[key] = flavor

    def damaged_cells(self, partition_id: str) -> set[int]:
        return {c for (p, c) in self.damage if p == partition_id}

    def dd_cells(self, partition_id: str) -> set[int]:
        return {c for (p, c), fl in self.damage.items() if p == partition_id and fl == DD}

    def _part(self, partition_id: str) -> Partition:
        if partition_id == SHARED:
            return self.shared
        return self.partitions[partition_id]

    def _variants_for(self, partition_id: str) -> list[ConfigVariant]:
        return self.shared_variants if partition_id == SHARED else self.tile_variants

    # -- reconfiguration ----------------------------------------------------

    def footprint_overlap(self, partition_id: str, variant_index: int) -> set[int]:
        variant = self._variants_for(partition_id)[variant_index]
        return set(variant.footprint) & self.damaged_cells(partition_id)

    def partial_reconfigure(self, partition_id: str, variant_index: int) -> bool:
        """Rewrite one partition with the given variant.

        Rewriting clears corrupted configuration memory as a side effect;
        success then depends on the variant's footprint avoiding permanent
        damage. Returns True on success, False on a fabric fault.
        """
        part = self._part(partition_id)
        for key in [k for k, fl in self.damage.items() if k[0] == partition_id and fl == CONFIG]:
            del self.damage[key]
        variant = self._variants_for(partition_id)[variant_index]
        if variant.footprint & self.dd_cells(partition_id):
            return False
        part.active_variant = variant_index
        return True

    def validate_partition(self, partition_id: str) -> tuple[bool, set[int]]:
        """Post-reconfiguration check; failure returns the offending cells."""
        part = self._part(partition_id)
        overlap = self.footprint_overlap(partition_id, part.active_variant)
        return (not overlap, overlap)

    def self_test(self, partition_id: str) -> bool:
        """Boot-time check a tile runs against its own partition."""
        ok, _ = self.validate_partition(partition_id)
        return ok

    def viable_variants(self, partition_id: str) -> list[int]:
        """Variant indices whose footprints avoid all permanent damage."""
        dd = self.dd_cells(partition_id)
        return [
            i for i, v in enumerate(self._variants_for(partition_id))
            if not (v.footprint & dd)
        ]

    def free_partitions(self) -> list[str]:
        return sorted(p.partition_id for p in self.partitions.values() if p.hosted_tile is None)

    def rebind(self, tile_id: str, new_partition: str):
        for p in self.partitions.values():
            if p.hosted_tile == tile_id:
                p.hosted_tile = None
        self.partitions[new_partition].hosted_tile = tile_id
