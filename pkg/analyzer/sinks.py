"""
Sink taxonomy

Sink value phi = max_k |h_k| / RMS(h) measures how much one hidden dimension dominates a
token's layer input. Tokens with phi above tau are sinks; among them, tokens whose
attention contribution falls below c_split are probability dumps, the rest structural
anchors. phi is scale-free, so it is bounded by sqrt(d): at toy widths tau must sit below
sqrt(d_model) for any token to qualify.
"""

import enum
import logging
from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np

from engine.core.model import ForwardTrace
from engine.core.numeric import ACC_DTYPE
from engine.core.tokens import Modality
from engine.core.weights import ModelWeights
from engine.errors import ConfigurationError, ProbeError
from pruning.contribution import contribution_records

logger = logging.getLogger(__name__)

DEFAULT_TAU = 20.0

CSplit = Union[str, float]


class SinkClass(str, enum.Enum):
    NOT_SINK = "NotSink"
    PROBABILITY_DUMP = "ProbabilityDump"
    STRUCTURAL_ANCHOR = "StructuralAnchor"


@dataclass(frozen=True)
class SinkRecord:
    token_index: int
    phi: float
    c_value: float
    sink_class: SinkClass
    layer: int
    position: int

    def row(self) -> list:
        """CSV row: layer, token, phi, c_value, class"""
        return [self.layer, self.token_index, self.phi, self.c_value, self.sink_class.value]


def sink_value(h: np.ndarray) -> float:
    """max_k |h_k| / sqrt(mean_k h_k^2); 0 for the zero vector"""
    v = np.asarray(h, dtype=ACC_DTYPE).ravel()
    if not np.all(np.isfinite(v)):
        raise ConfigurationError("sink value of a non-finite hidden state")
    rms = float(np.sqrt(np.mean(v * v))) if v.size else 0.0
    if rms == 0.0:
        return 0.0
    return float(np.max(np.abs(v))) / rms


def classify(phi: float, c_value: float, tau: float = DEFAULT_TAU,
             c_split: float = 0.0) -> SinkClass:
    if phi <= tau:
        return SinkClass.NOT_SINK
    if c_value < c_split:
        return SinkClass.PROBABILITY_DUMP
    return SinkClass.STRUCTURAL_ANCHOR


def resolve_split(c_split: CSplit, phis: Sequence[float], contributions: Sequence[float],
                  tau: float) -> float:
    """'median' -> median C among tokens with phi > tau (0.0 when there are none)"""
    if c_split != "median":
        return float(c_split)
    above = [c for phi, c in zip(phis, contributions) if phi > tau]
    return float(np.median(above)) if above else 0.0


def sink_report(
    trace: ForwardTrace,
    layer: int,
    weights: ModelWeights,
    tau: float = DEFAULT_TAU,
    c_split: CSplit = "median",
) -> List[SinkRecord]:
    """
    Classify every visual token of a probed prefill at one layer

    phi is taken from the layer input of each token, C from the final token's attention at
    that layer. Records come back sorted by token index.

    Raises:
        ProbeError: the layer was not probed with hidden states and attention
        ConfigurationError: tau not positive, or a bad c_split
    """
    if tau <= 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    if c_split != "median" and not float(c_split) > 0:
        raise ConfigurationError(f"c_split must be 'median' or positive, got {c_split!r}")
    probe = trace.probe(layer)
    if probe.residual_in is None:
        raise ProbeError(f"layer {layer} was probed without hidden states")
    records = contribution_records(probe.prune_context(weights.layers[layer]))
    row_of = {position: row for row, position in enumerate(probe.positions)}

    visual = [r for r in records if r.modality is Modality.VISUAL and r.position in row_of]
    phis = [sink_value(probe.residual_in[row_of[r.position]]) for r in visual]
    contributions = [r.c_value for r in visual]
    split = resolve_split(c_split, phis, contributions, tau)

    report = [
        SinkRecord(r.token_index, phi, r.c_value, classify(phi, r.c_value, tau, split),
                   layer, r.position)
        for r, phi in zip(visual, phis)
    ]
    report.sort(key=lambda record: record.token_index)
    sinks = sum(1 for record in report if record.sink_class is not SinkClass.NOT_SINK)
    logger.info("[Sinks] layer %d: %d of %d visual tokens above tau=%.2f (split %.6g)",
                layer, sinks, len(report), tau, split)
    return report
