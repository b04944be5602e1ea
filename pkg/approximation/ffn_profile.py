"""
FFN linearity profile

Sim(x) = cos(x, y) with y = x + FFN(norm(x)), the residual output of the FFN block.
Per-token similarities are averaged per layer and modality over a calibration set;
layers whose mean exceeds eta (and that are not protected) are candidates for the
Hadamard approximation.
"""

import logging
from dataclasses import dataclass, field
from typing import Collection, FrozenSet, List, Optional, Sequence

import numpy as np

from engine.core.model import DecoderModel
from engine.core.numeric import ACC_DTYPE, Similarity, cosine_sim, row_cosines
from engine.core.plan import LayerExecPlan, ProbeRequest
from engine.core.tokens import Modality, TokenStream
from engine.errors import ConfigurationError

from .parallel import chunked_map

logger = logging.getLogger(__name__)

SELECTION_BASES = ("visual", "text", "joint")


def layer_similarity(x: np.ndarray, ffn_out: np.ndarray) -> Similarity:
    """cos(x, x + ffn_out); UNDEFINED_SIMILARITY when either vector vanishes"""
    xv = np.asarray(x, dtype=ACC_DTYPE)
    return cosine_sim(xv, xv + np.asarray(ffn_out, dtype=ACC_DTYPE))


@dataclass
class LayerProfile:
    """Similarity sums of one layer; undefined samples are only counted"""
    layer: int
    sum_visual: float = 0.0
    n_visual: int = 0
    sum_text: float = 0.0
    n_text: int = 0
    n_undefined: int = 0

    @property
    def mean_sim_visual(self) -> Optional[float]:
        return self.sum_visual / self.n_visual if self.n_visual else None

    @property
    def mean_sim_text(self) -> Optional[float]:
        return self.sum_text / self.n_text if self.n_text else None

    @property
    def mean_sim_joint(self) -> Optional[float]:
        total = self.n_visual + self.n_text
        return (self.sum_visual + self.sum_text) / total if total else None

    def mean(self, basis: str = "visual") -> Optional[float]:
        if basis not in SELECTION_BASES:
            raise ConfigurationError(f"basis must be one of {SELECTION_BASES}, got {basis!r}")
        return getattr(self, f"mean_sim_{basis}")

    def add(self, x: np.ndarray, y: np.ndarray, modality: Sequence[Modality]) -> None:
        values, defined = row_cosines(x, y)
        visual = np.array([m is Modality.VISUAL for m in modality], dtype=bool)
        self.sum_visual += float(values[defined & visual].sum())
        self.n_visual += int(np.count_nonzero(defined & visual))
        self.sum_text += float(values[defined & ~visual].sum())
        self.n_text += int(np.count_nonzero(defined & ~visual))
        self.n_undefined += int(np.count_nonzero(~defined))

    def merge(self, other: 'LayerProfile') -> None:
        self.sum_visual += other.sum_visual
        self.n_visual += other.n_visual
        self.sum_text += other.sum_text
        self.n_text += other.n_text
        self.n_undefined += other.n_undefined


@dataclass
class RedundancyProfile:
    """Per-layer mean similarity per modality"""
    layers: List[LayerProfile]
    n_samples: int = 0

    @classmethod
    def empty(cls, n_layers: int) -> 'RedundancyProfile':
        return cls([LayerProfile(layer) for layer in range(n_layers)])

    @classmethod
    def from_means(cls, visual: Sequence[float], text: Optional[Sequence[float]] = None,
                   count: int = 1) -> 'RedundancyProfile':
        """Profile with the given per-layer means, each backed by `count` samples"""
        text = text if text is not None else visual
        layers = [
            LayerProfile(i, sum_visual=v * count, n_visual=count, sum_text=t * count, n_text=count)
            for i, (v, t) in enumerate(zip(visual, text))
        ]
        return cls(layers, n_samples=count)

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def merge(self, other: 'RedundancyProfile') -> None:
        for mine, theirs in zip(self.layers, other.layers):
            mine.merge(theirs)
        self.n_samples += other.n_samples

    def rows(self) -> List[list]:
        """CSV rows: layer, mean_sim_visual, mean_sim_text, n_visual, n_text"""
        return [
            [p.layer, p.mean_sim_visual, p.mean_sim_text, p.n_visual, p.n_text]
            for p in self.layers
        ]

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence]) -> 'RedundancyProfile':
        """Inverse of rows(); empty means only go with zero counts"""
        layers = []
        for layer, visual, text, n_visual, n_text in rows:
            n_v, n_t = int(n_visual), int(n_text)
            layers.append(LayerProfile(
                int(layer),
                sum_visual=float(visual) * n_v if n_v else 0.0, n_visual=n_v,
                sum_text=float(text) * n_t if n_t else 0.0, n_text=n_t,
            ))
        layers.sort(key=lambda p: p.layer)
        if [p.layer for p in layers] != list(range(len(layers))):
            raise ConfigurationError("profile rows must cover layers 0..L-1 once each")
        return cls(layers)


@dataclass(frozen=True)
class LayerSelection:
    """Layers chosen for approximation; never intersects the protected set"""
    selected: FrozenSet[int]
    eta: float
    protected: FrozenSet[int] = field(default_factory=frozenset)
    basis: str = "visual"

    def __post_init__(self):
        object.__setattr__(self, "selected", frozenset(self.selected))
        object.__setattr__(self, "protected", frozenset(self.protected))
        overlap = self.selected & self.protected
        if overlap:
            raise ConfigurationError(f"selected layers are protected: {sorted(overlap)}")

    def __iter__(self):
        return iter(sorted(self.selected))

    def __len__(self) -> int:
        return len(self.selected)


def _profile_chunk(model: DecoderModel, streams: Sequence[TokenStream]) -> RedundancyProfile:
    partial = RedundancyProfile.empty(model.config.n_layers)
    probes = ProbeRequest(hidden_states=True, attention=False)
    for stream in streams:
        trace = model.forward(stream, LayerExecPlan.vanilla(model.config.n_layers), probes)
        for layer, probe in trace.layers.items():
            partial.layers[layer].add(probe.ffn_input, probe.ffn_output, probe.modality)
        partial.n_samples += 1
    return partial


def build_profile(
    model: DecoderModel,
    calib: Sequence[TokenStream],
    plan: Optional[LayerExecPlan] = None,
    chunk_size: int = 8,
    max_workers: Optional[int] = None,
) -> RedundancyProfile:
    """
    Profile every layer of the dense model over a calibration set

    Args:
        plan: must be all-dense without pruning when given

    Raises:
        ConfigurationError: empty calibration set or a non-vanilla plan
    """
    if not calib:
        raise ConfigurationError("empty calibration set")
    if plan is not None and not plan.is_vanilla():
        raise ConfigurationError("profiling runs the fully dense model")
    partials = chunked_map(lambda chunk: _profile_chunk(model, chunk), list(calib),
                           chunk_size, max_workers)
    profile = RedundancyProfile.empty(model.config.n_layers)
    for partial in partials:
        profile.merge(partial)
    for layer in profile.layers:
        if layer.n_visual == 0 or layer.n_text == 0:
            logger.warning("[Profile] layer %d lacks samples of one modality", layer.layer)
    logger.info("[Profile] %d samples over %d layers", profile.n_samples, profile.n_layers)
    return profile


def select_layers(
    profile: RedundancyProfile,
    eta: float = 0.96,
    protected: Collection[int] = (),
    basis: str = "visual",
) -> LayerSelection:
    """
    S = {l : mean Sim_l > eta} minus the protected layers

    Layers with no defined samples on the basis are never selected.

    Raises:
        ConfigurationError: eta outside (0, 1] or an unknown basis
    """
    if not 0.0 < eta <= 1.0:
        raise ConfigurationError(f"eta must be in (0, 1], got {eta}")
    guarded = frozenset(protected)
    selected = set()
    for layer in profile.layers:
        mean = layer.mean(basis)
        if mean is not None and mean > eta and layer.layer not in guarded:
            selected.add(layer.layer)
    logger.info("[Profile] eta=%.4f basis=%s selected %s", eta, basis, sorted(selected))
    return LayerSelection(frozenset(selected), eta, guarded & set(range(profile.n_layers)), basis)

