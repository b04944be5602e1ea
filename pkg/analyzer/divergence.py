"""
Output divergence

Hellinger distance between the next-token distributions of the vanilla model and a
pruned or approximated variant, step by step along one generation. The variant is fed the
vanilla model's tokens at every step, so any gap comes from the variant's execution plan
alone.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from engine.core.model import DecoderModel, GenerationResult
from engine.core.numeric import ACC_DTYPE, softmax
from engine.core.plan import LayerExecPlan, PrunePoint, PruneStage
from engine.core.tokens import TokenStream
from engine.errors import ConfigurationError, DistributionError
from pruning.policy_factory import create_policy

logger = logging.getLogger(__name__)

NORMALIZATION_TOLERANCE = 1e-5
_INV_SQRT2 = 1.0 / math.sqrt(2.0)


def _check_distribution(p: np.ndarray, name: str) -> None:
    if p.ndim != 1 or p.size == 0:
        raise DistributionError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise DistributionError(f"{name} has negative or non-finite entries")
    total = float(p.sum())
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
        raise DistributionError(f"{name} sums to {total:.8f}, not 1")


def hellinger(p: Sequence[float], q: Sequence[float]) -> float:
    """
    H(p, q) = sqrt(sum_i (sqrt(p_i) - sqrt(q_i))^2) / sqrt(2), in [0, 1]

    Raises:
        DistributionError: length mismatch, negative entries or sums off 1 by more than 1e-5
    """
    pv = np.asarray(p, dtype=ACC_DTYPE)
    qv = np.asarray(q, dtype=ACC_DTYPE)
    if pv.shape != qv.shape:
        raise DistributionError(f"distribution lengths differ: {pv.shape} vs {qv.shape}")
    _check_distribution(pv, "p")
    _check_distribution(qv, "q")
    diff = np.sqrt(pv) - np.sqrt(qv)
    return min(float(np.sqrt(np.sum(diff * diff))) * _INV_SQRT2, 1.0)


def probabilities(logits: np.ndarray) -> np.ndarray:
    """Temperature-1 softmax over the full vocabulary"""
    return softmax(np.asarray(logits, dtype=ACC_DTYPE))


@dataclass
class DivergenceTrace:
    """
    Per-step Hellinger distances of one variant

    Step t compares the distributions produced after t decode steps (t = 0 is the prefill).
    """
    label: str
    values: List[float] = field(default_factory=list)
    prune_step: Optional[int] = None

    def __post_init__(self):
        if any(not 0.0 <= v <= 1.0 for v in self.values):
            raise DistributionError("hellinger values must lie in [0, 1]")

    @property
    def steps(self) -> List[int]:
        return list(range(len(self.values)))

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if self.values else 0.0

    @property
    def max(self) -> float:
        return float(np.max(self.values)) if self.values else 0.0

    def rows(self) -> List[list]:
        """CSV rows: step, policy, hellinger"""
        return [[step, self.label, value] for step, value in zip(self.steps, self.values)]


def _prune_step(plan: Optional[LayerExecPlan]) -> Optional[int]:
    if plan is None or not plan.prune_points:
        return None
    point = plan.decode_point()
    return point.step if point is not None else 0


def reference_run(model: DecoderModel, prompt: TokenStream, steps: int) -> GenerationResult:
    """Greedy vanilla generation every variant is compared against"""
    return model.generate(prompt, None, steps)


def trace_divergence(
    model: DecoderModel,
    plan: Optional[LayerExecPlan],
    prompt: TokenStream,
    steps: int,
    label: str = "variant",
    reference: Optional[GenerationResult] = None,
) -> DivergenceTrace:
    """
    Hellinger trace of a plan against the vanilla model

    Args:
        plan: variant plan; None compares vanilla with itself
        reference: vanilla generation to reuse; must cover at least `steps` steps
    """
    if steps < 1:
        raise ConfigurationError(f"steps must be >= 1, got {steps}")
    reference = reference or reference_run(model, prompt, steps)
    if len(reference.tokens) < steps:
        raise ConfigurationError(f"reference covers {len(reference.tokens)} steps, need {steps}")
    variant = model.generate(prompt, plan, steps, forced=reference.tokens)
    values = [
        hellinger(probabilities(reference.logits[t]), probabilities(variant.logits[t]))
        for t in range(steps)
    ]
    trace = DivergenceTrace(label, values, _prune_step(plan))
    logger.info("[Divergence] %s: mean %.6f, max %.6f over %d steps",
                label, trace.mean, trace.max, steps)
    return trace


def recompute_divergence(
    model: DecoderModel,
    plan: LayerExecPlan,
    prompt: TokenStream,
    steps: int,
    label: str = "variant",
    reference: Optional[GenerationResult] = None,
) -> DivergenceTrace:
    """
    Same trace as trace_divergence, with every step re-run from scratch without a cache

    The variant's prefill pruning decisions are replayed through keep_override, with every
    generated token kept. Only prefill prune points can be replayed this way.
    """
    if plan.decode_point() is not None:
        raise ConfigurationError("decode-stage pruning cannot be replayed from scratch")
    reference = reference or reference_run(model, prompt, steps)
    decided = model.forward(prompt, plan)
    kept: Dict[int, set] = {event.layer: set(event.kept_positions)
                            for event in decided.prune_events}
    values = [hellinger(probabilities(reference.logits[0]), probabilities(decided.last_logits))]
    stream = prompt
    for t in range(1, steps):
        stream = stream.append(reference.tokens[t - 1])
        for positions in kept.values():
            positions.add(stream.positions[-1])
        vanilla = model.forward(stream).last_logits
        variant = model.forward(stream, plan, keep_override=kept if kept else None).last_logits
        values.append(hellinger(probabilities(vanilla), probabilities(variant)))
    return DivergenceTrace(label, values, _prune_step(plan))


@dataclass(frozen=True)
class SweepPoint:
    policy: str
    keep_ratio: float
    mean_hellinger: float
    max_hellinger: float

    def row(self) -> list:
        return [self.policy, self.keep_ratio, self.mean_hellinger, self.max_hellinger]


def ratio_sweep(
    model: DecoderModel,
    prompt: TokenStream,
    steps: int,
    policies: Sequence[str],
    keep_ratios: Sequence[float],
    prune_layer: int,
    base_plan: Optional[LayerExecPlan] = None,
    stage: PruneStage = PruneStage.PREFILL,
    prune_step: int = 0,
) -> List[SweepPoint]:
    """
    Mean and max Hellinger distance for every (policy, keep_ratio) pair

    base_plan supplies the FFN modes; its own prune points are replaced.
    """
    base = base_plan or LayerExecPlan.vanilla(model.config.n_layers)
    reference = reference_run(model, prompt, steps)
    results = []
    for name in policies:
        for ratio in keep_ratios:
            point = PrunePoint(prune_layer, ratio, create_policy(name), stage, prune_step)
            trace = trace_divergence(model, base.with_prune_points([point]), prompt, steps,
                                     f"{name}@{ratio}", reference)
            results.append(SweepPoint(name, ratio, trace.mean, trace.max))
    return results
