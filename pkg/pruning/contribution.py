"""
Attention contribution

C_i = || sum_h A_{i,h} (x_i W_{V,h}) W_{O,h} ||_2

The heads are summed before the norm. x_i W_{V,h} is the value row the layer caches for
token i, so scores are computed straight from the cache.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from engine.core.numeric import ACC_DTYPE, l2_norm
from engine.core.tokens import Modality
from engine.core.weights import LayerWeights
from engine.errors import ConfigurationError
from engine.interfaces.pruning_policy import PruneContext

from .keep_set import KeepSet, keep_count, stride_indices

# Slack for probabilities that round just outside [0, 1] in float32
PROBABILITY_SLACK = 1e-6


@dataclass(frozen=True)
class ContributionRecord:
    """
    Contribution of one key token to the current query

    token_index is the row in the scored key set; position is the token's original position.
    """
    token_index: int
    c_value: float
    per_head_attn: Tuple[float, ...]
    layer: int
    position: Optional[int] = None
    modality: Modality = Modality.VISUAL

    def __post_init__(self):
        object.__setattr__(self, "per_head_attn", tuple(float(a) for a in self.per_head_attn))
        object.__setattr__(self, "modality", Modality(self.modality))
        if self.position is None:
            object.__setattr__(self, "position", self.token_index)
        if not self.c_value >= 0.0:
            raise ConfigurationError(f"contribution must be non-negative, got {self.c_value}")
        if any(a < -PROBABILITY_SLACK or a > 1.0 + PROBABILITY_SLACK for a in self.per_head_attn):
            raise ConfigurationError("attention probabilities must lie in [0, 1]")

    @property
    def mean_attn(self) -> float:
        return float(np.mean(self.per_head_attn)) if self.per_head_attn else 0.0


def _head_slices(layer_weights: LayerWeights, n_heads: int) -> Tuple[np.ndarray, np.ndarray]:
    """W_V as (H, d, d_head) and W_O as (H, d_head, d), float64"""
    d = layer_weights.w_v.shape[0]
    if d % n_heads != 0:
        raise ConfigurationError(f"d_model {d} does not split into {n_heads} heads")
    d_head = d // n_heads
    w_v = np.stack([layer_weights.value_head(h, d_head) for h in range(n_heads)])
    w_o = np.stack([layer_weights.output_head(h, d_head) for h in range(n_heads)])
    return w_v.astype(ACC_DTYPE), w_o.astype(ACC_DTYPE)


def attention_contribution(
    attn: Sequence[float],
    x_i: np.ndarray,
    layer_weights: LayerWeights,
    n_heads: Optional[int] = None,
) -> float:
    """
    C_i for one token

    Args:
        attn: A_{i,h}, the query's attention probability on token i for every head
        x_i: (d,) normalized layer input of token i (the vector entering W_V)
        layer_weights: weights of the scoring layer
        n_heads: head count; defaults to len(attn)

    Raises:
        ConfigurationError: len(attn) differs from the head count
    """
    weights = np.asarray(attn, dtype=ACC_DTYPE)
    heads = len(weights) if n_heads is None else n_heads
    if weights.shape != (heads,):
        raise ConfigurationError(f"head count mismatch: {weights.shape[0]} rows for {heads} heads")
    w_v, w_o = _head_slices(layer_weights, heads)
    x = np.asarray(x_i, dtype=ACC_DTYPE)
    total = np.zeros(layer_weights.w_o.shape[1], dtype=ACC_DTYPE)
    for h in range(heads):
        total += weights[h] * ((x @ w_v[h]) @ w_o[h])
    return l2_norm(total)


def head_contributions(context: PruneContext) -> np.ndarray:
    """(H, n_keys, d) output-projected value update of every head, attention-weighted"""
    _, w_o = _head_slices(context.layer_weights, context.n_heads)
    projected = np.einsum("hnk,hkd->hnd", context.values.astype(ACC_DTYPE), w_o)
    return projected * context.attention.astype(ACC_DTYPE)[:, :, None]


def contribution_scores(context: PruneContext) -> np.ndarray:
    """C_i for every key row of the context"""
    summed = head_contributions(context).sum(axis=0)
    return np.sqrt(np.einsum("nd,nd->n", summed, summed))


def contribution_records(context: PruneContext) -> List[ContributionRecord]:
    scores = contribution_scores(context)
    attention = np.clip(context.attention.astype(ACC_DTYPE), 0.0, 1.0)
    return [
        ContributionRecord(
            token_index=i,
            c_value=float(scores[i]),
            per_head_attn=tuple(attention[:, i]),
            layer=context.layer,
            position=int(context.positions[i]),
            modality=context.modality[i],
        )
        for i in range(context.n_keys)
    ]


def _top_k(candidates: Sequence[Tuple[int, float]], k: int) -> List[int]:
    """Highest scores first; ties go to the smaller index"""
    ranked = sorted(candidates, key=lambda item: (-item[1], item[0]))
    return [index for index, _ in ranked[:k]]


def rank_by_contribution(records: Sequence[ContributionRecord], keep_ratio: float) -> KeepSet:
    """
    Top-k visual tokens by C_i; text tokens always survive

    Raises:
        ConfigurationError: keep_ratio outside (0, 1] or no visual record
    """
    if not records:
        raise ConfigurationError("no contribution records to rank")
    n_rows = max(r.token_index for r in records) + 1
    modality = [Modality.VISUAL] * n_rows
    present = set()
    for record in records:
        modality[record.token_index] = record.modality
        present.add(record.token_index)
    visual = [(r.token_index, r.c_value) for r in records if r.modality is Modality.VISUAL]
    k = keep_count(keep_ratio, len(visual))
    chosen = _top_k(visual, k)
    text = [i for i in present if modality[i] is Modality.TEXT]
    return KeepSet(tuple(sorted(set(chosen) | set(text))), keep_ratio, n_rows, len(chosen))


def rank_by_attention(
    attn_rows: np.ndarray,
    keep_ratio: float,
    modality: Optional[Sequence[Modality]] = None,
) -> KeepSet:
    """
    Top-k visual tokens by head-mean attention probability

    Args:
        attn_rows: (H, n) query attention over the n scored tokens
        modality: per-token modality; every token is visual when None
    """
    rows = np.atleast_2d(np.asarray(attn_rows, dtype=ACC_DTYPE))
    n = rows.shape[1]
    modality = list(modality) if modality is not None else [Modality.VISUAL] * n
    if len(modality) != n:
        raise ConfigurationError(f"{len(modality)} modality tags for {n} attention columns")
    scores = rows.mean(axis=0)
    visual = [(i, float(scores[i])) for i, m in enumerate(modality) if m is Modality.VISUAL]
    k = keep_count(keep_ratio, len(visual))
    return KeepSet.from_choice(_top_k(visual, k), modality, keep_ratio)


def uniform_stride(n_visual: int, keep_ratio: float) -> KeepSet:
    """
    Fixed-stride sample of n_visual tokens

    Index j of k is floor(j * n / k), so the first index is always 0.
    """
    k = keep_count(keep_ratio, n_visual)
    return KeepSet(stride_indices(n_visual, k), keep_ratio, n_visual, k)
