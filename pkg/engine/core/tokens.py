"""
Token streams

A TokenStream is the prompt as the decoder sees it: token ids, a modality tag per token
and the original position of every token. Pruned streams keep the original positions.
"""

import enum
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError


class Modality(str, enum.Enum):
    VISUAL = "visual"
    TEXT = "text"

    @property
    def code(self) -> int:
        """Row index into the modality embedding"""
        return 0 if self is Modality.VISUAL else 1


@dataclass(frozen=True)
class TokenStream:
    """
    Modality-tagged token sequence

    Invariants:
        ids, modality and positions have equal length;
        positions are distinct (strictly increasing unless built for a bidirectional probe).
    """
    ids: Tuple[int, ...]
    modality: Tuple[Modality, ...]
    positions: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        object.__setattr__(self, "modality", tuple(Modality(m) for m in self.modality))
        object.__setattr__(self, "positions", tuple(int(p) for p in self.positions))
        if not (len(self.ids) == len(self.modality) == len(self.positions)):
            raise ConfigurationError(
                f"token stream fields differ in length: ids={len(self.ids)}, "
                f"modality={len(self.modality)}, positions={len(self.positions)}"
            )
        if any(i < 0 for i in self.ids):
            raise ConfigurationError("token ids must be non-negative")
        if any(p < 0 for p in self.positions):
            raise ConfigurationError("positions must be non-negative")
        if len(set(self.positions)) != len(self.positions):
            raise ConfigurationError("positions must be distinct")

    @property
    def is_ordered(self) -> bool:
        return all(b > a for a, b in zip(self.positions, self.positions[1:]))

    @classmethod
    def build(
        cls,
        ids: Sequence[int],
        modality: Sequence[Modality],
        positions: Optional[Sequence[int]] = None,
    ) -> 'TokenStream':
        if positions is None:
            positions = range(len(ids))
        return cls(tuple(ids), tuple(modality), tuple(positions))

    @classmethod
    def from_segments(cls, visual_ids: Sequence[int], text_ids: Sequence[int]) -> 'TokenStream':
        """Visual tokens first, then the text prompt, positions 0..N-1"""
        ids = list(visual_ids) + list(text_ids)
        modality = [Modality.VISUAL] * len(visual_ids) + [Modality.TEXT] * len(text_ids)
        return cls.build(ids, modality)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def n_visual(self) -> int:
        return sum(1 for m in self.modality if m is Modality.VISUAL)

    @property
    def n_text(self) -> int:
        return len(self) - self.n_visual

    def visual_indices(self) -> List[int]:
        return [i for i, m in enumerate(self.modality) if m is Modality.VISUAL]

    def text_indices(self) -> List[int]:
        return [i for i, m in enumerate(self.modality) if m is Modality.TEXT]

    def select(self, indices: Iterable[int]) -> 'TokenStream':
        """Sub-stream of the given row indices (sorted), original positions kept"""
        rows = sorted(set(indices))
        if rows and (rows[0] < 0 or rows[-1] >= len(self)):
            raise ConfigurationError(f"select index out of range for stream of {len(self)}")
        positions = [self.positions[i] for i in rows]
        return TokenStream(
            tuple(self.ids[i] for i in rows),
            tuple(self.modality[i] for i in rows),
            tuple(positions),
        )

    def append(self, token_id: int, modality: Modality = Modality.TEXT) -> 'TokenStream':
        next_position = max(self.positions) + 1 if self.positions else 0
        return TokenStream(
            self.ids + (int(token_id),),
            self.modality + (Modality(modality),),
            self.positions + (next_position,),
        )

    def to_dict(self) -> dict:
        return {
            'ids': list(self.ids),
            'modality': [m.value for m in self.modality],
            'positions': list(self.positions),
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'TokenStream':
        modality = [Modality(m) for m in data['modality']]
        return cls.build(data['ids'], modality, data.get('positions'))


def synthetic_stream(
    rng: np.random.Generator, n_img: int, n_txt: int, vocab_size: int
) -> TokenStream:
    """
    Seeded stand-in for an image + prompt pair

    Visual ids are drawn from the lower half of the vocabulary, text ids from the upper half.
    """
    if n_img < 0 or n_txt < 0 or n_img + n_txt == 0:
        raise ConfigurationError(f"need a non-empty stream, got n_img={n_img}, n_txt={n_txt}")
    half = max(1, vocab_size // 2)
    visual_ids = rng.integers(0, half, size=n_img)
    text_ids = rng.integers(half if vocab_size > 1 else 0, vocab_size, size=n_txt)
    return TokenStream.from_segments(visual_ids.tolist(), text_ids.tolist())
