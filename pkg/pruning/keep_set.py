"""
Keep sets

The surviving rows of a pruning decision: every text row plus k visual rows, where
k = clamp(round(keep_ratio * n_visual), 1, n_visual) with round-half-to-even.
"""

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, Tuple

from engine.core.plan import validate_keep_ratio
from engine.core.tokens import Modality
from engine.errors import ConfigurationError


def keep_count(keep_ratio: float, n_visual: int) -> int:
    """Number of visual tokens a keep ratio retains"""
    ratio = validate_keep_ratio(keep_ratio)
    if n_visual < 1:
        raise ConfigurationError("pruning needs at least one visual token")
    return min(max(round(ratio * n_visual), 1), n_visual)


def stride_indices(n: int, k: int) -> Tuple[int, ...]:
    """k indices floor(j * n / k), j = 0..k-1"""
    if not 1 <= k <= n:
        raise ConfigurationError(f"cannot take {k} of {n} tokens")
    return tuple(j * n // k for j in range(k))


@dataclass(frozen=True)
class KeepSet:
    """
    Surviving row indices of one pruning decision

    indices are sorted ascending, unique and index a row set of size n_rows.
    """
    indices: Tuple[int, ...]
    keep_ratio: float
    n_rows: int
    n_visual_kept: int

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        validate_keep_ratio(self.keep_ratio)
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ConfigurationError("keep indices must be sorted and unique")
        if self.indices and (self.indices[0] < 0 or self.indices[-1] >= self.n_rows):
            raise ConfigurationError(f"keep index out of range for {self.n_rows} rows")

    @classmethod
    def from_choice(
        cls,
        chosen_visual: Iterable[int],
        modality: Sequence[Modality],
        keep_ratio: float,
    ) -> 'KeepSet':
        """Chosen visual rows plus every text row of the scored set"""
        chosen = set(chosen_visual)
        stray = [
            i for i in chosen
            if not 0 <= i < len(modality) or modality[i] is not Modality.VISUAL
        ]
        if stray:
            raise ConfigurationError(f"chosen rows are not visual tokens: {sorted(stray)}")
        text = {i for i, m in enumerate(modality) if m is Modality.TEXT}
        return cls(tuple(sorted(chosen | text)), keep_ratio, len(modality), len(chosen))

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self) -> Iterator[int]:
        return iter(self.indices)

    def __contains__(self, index: object) -> bool:
        return index in self.indices

    @property
    def is_full(self) -> bool:
        return len(self.indices) == self.n_rows

    def positions(self, row_positions: Sequence[int]) -> Tuple[int, ...]:
        if len(row_positions) != self.n_rows:
            raise ConfigurationError(
                f"keep set covers {self.n_rows} rows, got {len(row_positions)} positions"
            )
        return tuple(row_positions[i] for i in self.indices)
