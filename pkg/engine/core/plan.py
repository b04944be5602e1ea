"""
Execution plans

A LayerExecPlan tells the decoder, per layer, which FFN residual block to run and where
visual tokens are pruned. Probe requests choose what a forward pass records.
"""

import enum
from dataclasses import dataclass, field
from typing import Collection, Dict, FrozenSet, Iterable, List, Optional, Tuple

from config.model_config import ModelConfig

from ..errors import ConfigurationError
from ..implementations.hadamard import AlphaVector
from ..interfaces.ffn_block import FfnMode, HadamardScope
from ..interfaces.pruning_policy import IPruningPolicy


class PruneStage(str, enum.Enum):
    PREFILL = "prefill"
    DECODE = "decode"


def validate_keep_ratio(keep_ratio: float) -> float:
    value = float(keep_ratio)
    if not 0.0 < value <= 1.0:
        raise ConfigurationError(f"keep_ratio must be in (0, 1], got {keep_ratio}")
    return value


@dataclass(frozen=True)
class PrunePoint:
    """
    One pruning decision

    Scores come from layer `layer`; layers after it run on the survivors.
    Decode-stage points fire at decode step `step` (1 = first token after the prompt).
    """
    layer: int
    keep_ratio: float
    policy: IPruningPolicy
    stage: PruneStage = PruneStage.PREFILL
    step: int = 0

    def __post_init__(self):
        object.__setattr__(self, "keep_ratio", validate_keep_ratio(self.keep_ratio))
        object.__setattr__(self, "stage", PruneStage(self.stage))
        if self.layer < 0:
            raise ConfigurationError(f"prune layer must be >= 0, got {self.layer}")
        if self.stage is PruneStage.DECODE and self.step < 1:
            raise ConfigurationError(f"decode prune step must be >= 1, got {self.step}")
        if self.stage is PruneStage.PREFILL and self.step != 0:
            raise ConfigurationError("prefill prune points take step 0")

    def to_dict(self) -> dict:
        return {
            'layer': self.layer,
            'keep_ratio': self.keep_ratio,
            'policy': self.policy.get_policy_name(),
            'stage': self.stage.value,
            'step': self.step,
        }


@dataclass
class LayerExecPlan:
    """
    Per-layer execution modes and prune points

    Invariants (checked by validate):
        one FFN mode per layer;
        every hadamard layer has a calibrated AlphaVector of length d;
        prefill points sit on distinct layers; at most one decode point.
    """
    ffn_modes: Tuple[FfnMode, ...]
    hadamard_scope: HadamardScope = HadamardScope.VISUAL_ONLY
    prune_points: Tuple[PrunePoint, ...] = ()
    alphas: Dict[int, AlphaVector] = field(default_factory=dict)

    def __post_init__(self):
        self.ffn_modes = tuple(FfnMode(mode) for mode in self.ffn_modes)
        self.hadamard_scope = HadamardScope.parse(self.hadamard_scope)
        self.prune_points = tuple(self.prune_points)

    @classmethod
    def vanilla(cls, n_layers: int) -> 'LayerExecPlan':
        return cls((FfnMode.DENSE,) * n_layers)

    @classmethod
    def build(
        cls,
        n_layers: int,
        approximated: Iterable[int] = (),
        mode: FfnMode = FfnMode.HADAMARD,
        scope: HadamardScope = HadamardScope.VISUAL_ONLY,
        prune_points: Iterable[PrunePoint] = (),
        alphas: Optional[Dict[int, AlphaVector]] = None,
    ) -> 'LayerExecPlan':
        selected = set(approximated)
        outside = [layer for layer in selected if not 0 <= layer < n_layers]
        if outside:
            raise ConfigurationError(f"approximated layers outside [0, {n_layers}): {outside}")
        modes = tuple(FfnMode(mode) if i in selected else FfnMode.DENSE for i in range(n_layers))
        return cls(modes, scope, tuple(prune_points), dict(alphas or {}))

    @property
    def n_layers(self) -> int:
        return len(self.ffn_modes)

    def approximated_layers(self) -> FrozenSet[int]:
        return frozenset(i for i, mode in enumerate(self.ffn_modes) if mode is not FfnMode.DENSE)

    def prefill_points(self) -> List[PrunePoint]:
        return sorted(
            (p for p in self.prune_points if p.stage is PruneStage.PREFILL), key=lambda p: p.layer
        )

    def decode_point(self) -> Optional[PrunePoint]:
        points = [p for p in self.prune_points if p.stage is PruneStage.DECODE]
        return points[0] if points else None

    def is_vanilla(self) -> bool:
        return not self.approximated_layers() and not self.prune_points

    def with_prune_points(self, points: Collection[PrunePoint]) -> 'LayerExecPlan':
        return LayerExecPlan(self.ffn_modes, self.hadamard_scope, tuple(points), dict(self.alphas))

    def validate(self, config: ModelConfig) -> 'LayerExecPlan':
        if self.n_layers != config.n_layers:
            raise ConfigurationError(
                f"plan covers {self.n_layers} layers, model has {config.n_layers}"
            )
        for layer, mode in enumerate(self.ffn_modes):
            if mode is not FfnMode.HADAMARD:
                continue
            alpha = self.alphas.get(layer)
            if alpha is None:
                raise ConfigurationError(f"uncalibrated hadamard layer {layer}")
            if alpha.dim != config.d_model:
                raise ConfigurationError(
                    f"alpha for layer {layer} has length {alpha.dim}, expected {config.d_model}"
                )
        layers = [p.layer for p in self.prefill_points()]
        if len(set(layers)) != len(layers):
            raise ConfigurationError(f"duplicate prefill prune layers: {layers}")
        if sum(1 for p in self.prune_points if p.stage is PruneStage.DECODE) > 1:
            raise ConfigurationError("decode-stage pruning takes a single prune point")
        for point in self.prune_points:
            if point.layer >= config.n_layers:
                raise ConfigurationError(
                    f"prune layer {point.layer} outside [0, {config.n_layers})"
                )
        return self

    def to_dict(self) -> dict:
        return {
            'ffn_modes': [mode.value for mode in self.ffn_modes],
            'hadamard_scope': self.hadamard_scope.value,
            'prune_points': [point.to_dict() for point in self.prune_points],
            'alpha_layers': sorted(self.alphas),
        }


@dataclass(frozen=True)
class ProbeRequest:
    """
    What a forward pass records

    layers: probed layers, None for every layer
    query_index: stream row whose attention row is kept (-1 = final token)
    bidirectional: disable the causal mask (FFN token-independence checks only)
    """
    layers: Optional[FrozenSet[int]] = None
    hidden_states: bool = True
    attention: bool = True
    query_index: int = -1
    bidirectional: bool = False

    @classmethod
    def none(cls) -> 'ProbeRequest':
        return cls(layers=frozenset(), hidden_states=False, attention=False)

    @classmethod
    def at(cls, *layers: int) -> 'ProbeRequest':
        return cls(layers=frozenset(layers))

    def wants(self, layer: int) -> bool:
        return self.layers is None or layer in self.layers
