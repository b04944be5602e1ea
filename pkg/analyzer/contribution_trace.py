"""
Contribution trajectory

Mean attention contribution of visual keys and of text keys to the queries of generated
tokens, for every layer. Values are raw; log-scaling is left to the consumer.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

from engine.core.model import DecodeResult, DecoderModel, greedy
from engine.core.plan import LayerExecPlan, ProbeRequest
from engine.core.tokens import Modality, TokenStream
from engine.errors import ConfigurationError
from pruning.contribution import contribution_records

logger = logging.getLogger(__name__)


@dataclass
class LayerContribution:
    layer: int
    sum_visual: float = 0.0
    n_visual: int = 0
    sum_text: float = 0.0
    n_text: int = 0

    @property
    def mean_visual(self) -> Optional[float]:
        return self.sum_visual / self.n_visual if self.n_visual else None

    @property
    def mean_text(self) -> Optional[float]:
        return self.sum_text / self.n_text if self.n_text else None


@dataclass
class ContributionTrajectory:
    layers: List[LayerContribution]
    n_generated: int = 0
    steps: List[DecodeResult] = field(default_factory=list, repr=False)

    def rows(self) -> List[list]:
        """CSV rows: layer, modality, mean_c, n_keys; one visual and one text row per layer"""
        rows = []
        for entry in self.layers:
            rows.append([entry.layer, Modality.VISUAL.value, entry.mean_visual, entry.n_visual])
            rows.append([entry.layer, Modality.TEXT.value, entry.mean_text, entry.n_text])
        return rows


def contribution_trace(
    model: DecoderModel,
    prompt: TokenStream,
    steps: int,
    plan: Optional[LayerExecPlan] = None,
) -> ContributionTrajectory:
    """
    Greedy-generate `steps` tokens and average the contribution of every key to each of
    them, per layer and key modality

    Raises:
        ConfigurationError: empty prompt or steps < 1
    """
    if len(prompt) == 0:
        raise ConfigurationError("contribution trace needs a non-empty prompt")
    if steps < 1:
        raise ConfigurationError(f"steps must be >= 1, got {steps}")
    cfg = model.config
    probes = ProbeRequest(hidden_states=False, attention=True)
    trajectory = ContributionTrajectory([LayerContribution(i) for i in range(cfg.n_layers)])

    prefill = model.forward(prompt, plan, ProbeRequest.none())
    cache, logits = prefill.cache, prefill.last_logits
    for _ in range(steps):
        result = model.decode_step(cache, greedy(logits), plan, probes)
        _accumulate(model, trajectory, result)
        trajectory.steps.append(result)
        cache, logits = result.cache, result.logits
    trajectory.n_generated = steps
    logger.info("[Trace] contributions over %d generated tokens, %d layers",
                steps, cfg.n_layers)
    return trajectory


def _accumulate(model: DecoderModel, trajectory: ContributionTrajectory,
                result: DecodeResult) -> None:
    for layer, probe in result.layers.items():
        entry = trajectory.layers[layer]
        records = contribution_records(probe.prune_context(model.weights.layers[layer]))
        for record in records:
            if record.modality is Modality.VISUAL:
                entry.sum_visual += record.c_value
                entry.n_visual += 1
            else:
                entry.sum_text += record.c_value
                entry.n_text += 1
