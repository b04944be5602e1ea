"""
Key-value cache

Per-layer cached keys and values over the surviving tokens, with the original position
and modality of every cached row. Layers may hold different row sets once pruning has
evicted tokens from the later layers.
"""

from dataclasses import dataclass, field
from typing import Collection, List, Optional, Sequence

import numpy as np

from ..errors import ConfigurationError
from .numeric import DTYPE
from .tokens import Modality


@dataclass
class LayerCache:
    """
    Cached rows of one layer

    keys, values: (H, n, d_head) float32. positions and modality have n entries.
    """
    keys: np.ndarray
    values: np.ndarray
    positions: List[int]
    modality: List[Modality]

    def __post_init__(self):
        if self.keys.shape != self.values.shape or self.keys.ndim != 3:
            raise ConfigurationError(
                f"key/value shapes differ: {self.keys.shape} vs {self.values.shape}"
            )
        n = self.keys.shape[1]
        if len(self.positions) != n or len(self.modality) != n:
            raise ConfigurationError(
                f"cache rows ({n}) disagree with positions ({len(self.positions)}) "
                f"or modality ({len(self.modality)})"
            )

    @classmethod
    def empty(cls, n_heads: int, d_head: int) -> 'LayerCache':
        blank = np.zeros((n_heads, 0, d_head), dtype=DTYPE)
        return cls(blank, blank.copy(), [], [])

    @property
    def n_rows(self) -> int:
        return self.keys.shape[1]

    def append(self, keys: np.ndarray, values: np.ndarray,
               positions: Sequence[int], modality: Sequence[Modality]) -> 'LayerCache':
        """New LayerCache with rows appended; keys/values are (H, m, d_head)"""
        return LayerCache(
            np.concatenate([self.keys, keys.astype(DTYPE)], axis=1),
            np.concatenate([self.values, values.astype(DTYPE)], axis=1),
            self.positions + list(positions),
            self.modality + list(modality),
        )

    def select_rows(self, rows: Sequence[int]) -> 'LayerCache':
        index = np.asarray(rows, dtype=np.int64)
        return LayerCache(
            np.ascontiguousarray(self.keys[:, index, :]),
            np.ascontiguousarray(self.values[:, index, :]),
            [self.positions[i] for i in rows],
            [self.modality[i] for i in rows],
        )

    def retain_positions(self, keep: Collection[int]) -> 'LayerCache':
        rows = [i for i, p in enumerate(self.positions) if p in keep]
        if len(rows) == self.n_rows:
            return self
        return self.select_rows(rows)

    def visual_rows(self) -> List[int]:
        return [i for i, m in enumerate(self.modality) if m is Modality.VISUAL]


@dataclass
class KvCache:
    """
    Per-layer caches plus decoding bookkeeping

    pruned_from: first layer whose rows were evicted, None while unpruned.
    steps: number of tokens appended by decode steps.
    """
    layers: List[LayerCache]
    next_position: int = 0
    pruned_from: Optional[int] = None
    steps: int = 0
    evicted: List[int] = field(default_factory=list)

    @classmethod
    def empty(cls, n_layers: int, n_heads: int, d_head: int) -> 'KvCache':
        return cls([LayerCache.empty(n_heads, d_head) for _ in range(n_layers)])

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def validate(self) -> 'KvCache':
        for index, layer in enumerate(self.layers):
            if layer.keys.shape[1] != layer.values.shape[1] or layer.n_rows != len(layer.positions):
                raise ConfigurationError(f"cache layer {index} is inconsistent")
        return self

    def row_counts(self) -> List[int]:
        return [layer.n_rows for layer in self.layers]

    def position_for_next(self) -> int:
        """Original positions survive pruning, so evicted positions are never reused"""
        return self.next_position

    def reference_layer(self, from_layer: int) -> int:
        return min(max(from_layer - 1, 0), self.n_layers - 1)

    def retain_positions(self, keep: Collection[int], from_layer: int) -> 'KvCache':
        """New cache whose layers >= from_layer only hold rows at the kept positions"""
        if not 0 <= from_layer <= self.n_layers:
            raise ConfigurationError(f"from_layer {from_layer} outside [0, {self.n_layers}]")
        keep_set = set(keep)
        layers = [
            layer if index < from_layer else layer.retain_positions(keep_set)
            for index, layer in enumerate(self.layers)
        ]
        # rows of the last untouched layer are the ones the keep set was drawn from
        reference = self.layers[self.reference_layer(from_layer)].positions
        evicted = sorted(set(self.evicted) | {p for p in reference if p not in keep_set})
        pruned_from = self.pruned_from
        if evicted and from_layer < self.n_layers:
            pruned_from = from_layer if pruned_from is None else min(pruned_from, from_layer)
        return KvCache(layers, self.next_position, pruned_from, self.steps, evicted)
