"""
Toy decoder

Pre-norm decoder-only transformer. Each layer runs multi-head attention followed by an FFN
residual block chosen by the execution plan (dense SwiGLU, Hadamard or skip). No bias terms.
Inputs are embedding[id] + modality_embedding[modality] + a sinusoidal encoding of the
original position, so pruned streams keep the positions their tokens were embedded with.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Collection, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError, ProbeError, SequenceTooLongError
from ..implementations.hadamard import HadamardBlock, SkipBlock
from ..implementations.swiglu import SwiGLUBlock
from ..interfaces.ffn_block import FfnMode, IFeedForwardBlock
from ..interfaces.pruning_policy import PruneContext
from .kv_cache import KvCache, LayerCache
from .numeric import ACC_DTYPE, DTYPE, OpCounter, matmul, rms_norm, softmax
from .plan import LayerExecPlan, PrunePoint, PruneStage, ProbeRequest
from .tokens import Modality, TokenStream
from .weights import ModelWeights

logger = logging.getLogger(__name__)

POSITION_BASE = 10000.0


@dataclass
class LayerProbe:
    """
    Recorded internals of one layer

    Query rows are the stream rows entering the layer; key rows are the cached rows the
    queries attended to (equal to the query rows in a prefill without a prior cache).
    """
    layer: int
    positions: Tuple[int, ...]
    modality: Tuple[Modality, ...]
    key_positions: Tuple[int, ...]
    key_modality: Tuple[Modality, ...]
    residual_in: Optional[np.ndarray] = None   # (n, d) layer input
    ffn_input: Optional[np.ndarray] = None     # (n, d) x, residual entering the FFN block
    ffn_output: Optional[np.ndarray] = None    # (n, d) y = x + FFN(norm(x)) or its stand-in
    values: Optional[np.ndarray] = None        # (H, n_keys, d_head)
    attention: Optional[np.ndarray] = None     # (H, n_keys) row of the probe query

    def prune_context(self, layer_weights) -> PruneContext:
        if self.attention is None or self.values is None:
            raise ProbeError(f"layer {self.layer} was probed without attention")
        return PruneContext(
            layer=self.layer,
            layer_weights=layer_weights,
            attention=self.attention,
            values=self.values,
            positions=self.key_positions,
            modality=self.key_modality,
        )


@dataclass
class PruneEvent:
    layer: int
    stage: PruneStage
    step: int
    keep: object                      # KeepSet over the scored key rows
    kept_positions: Tuple[int, ...]
    records: List = field(default_factory=list)

    @property
    def n_visual_kept(self) -> int:
        return self.keep.n_visual_kept


@dataclass
class ForwardTrace:
    """
    Result of a prefill pass

    logits has one row per token surviving at the last layer; positions names them.
    """
    logits: np.ndarray
    positions: Tuple[int, ...]
    layers: Dict[int, LayerProbe]
    cache: KvCache
    prune_events: List[PruneEvent]
    counter: OpCounter

    @property
    def last_logits(self) -> np.ndarray:
        return self.logits[-1]

    @property
    def keep(self):
        return self.prune_events[-1].keep if self.prune_events else None

    @property
    def contributions(self) -> List:
        return [record for event in self.prune_events for record in event.records]

    def probe(self, layer: int) -> LayerProbe:
        try:
            return self.layers[layer]
        except KeyError:
            raise ProbeError(f"layer {layer} was not probed") from None


@dataclass
class DecodeResult:
    logits: np.ndarray                   # (vocab,)
    cache: KvCache
    step: int
    attention: Dict[int, np.ndarray]     # layer -> (H, n_keys) row of the new token
    layers: Dict[int, LayerProbe]
    contributions: List
    prune_event: Optional[PruneEvent]
    counter: OpCounter

    @property
    def keep(self):
        return self.prune_event.keep if self.prune_event else None


@dataclass
class GenerationResult:
    """tokens[t] is the token chosen (or forced) from logits[t]"""
    tokens: List[int]
    logits: List[np.ndarray]
    prefill: ForwardTrace
    steps: List[DecodeResult]

    @property
    def cache(self) -> KvCache:
        return self.steps[-1].cache if self.steps else self.prefill.cache

    def total_mul_adds(self) -> int:
        return self.prefill.counter.mul_adds + sum(s.counter.mul_adds for s in self.steps)


def greedy(logits: np.ndarray) -> int:
    """Index of the largest logit; the first one on ties"""
    return int(np.argmax(logits))


class DecoderModel:
    """
    Toy decoder-only transformer

    Immutable after construction; forward and decode_step never mutate their inputs.

    Usage:
        model = DecoderModel(init_weights(ModelConfig()))
        trace = model.forward(stream, plan)
        step = model.decode_step(trace.cache, greedy(trace.last_logits), plan)
    """

    def __init__(self, weights: ModelWeights,
                 block_overrides: Optional[Mapping[int, IFeedForwardBlock]] = None):
        """
        Args:
            weights: validated model weights
            block_overrides: layer -> block used instead of the SwiGLU block as that
                layer's dense residual block
        """
        self.weights = weights.validate()
        self.config = weights.config
        self._dense: List[IFeedForwardBlock] = [
            SwiGLUBlock(layer, self.config.norm_eps) for layer in weights.layers
        ]
        for layer, block in (block_overrides or {}).items():
            if not 0 <= layer < self.config.n_layers:
                raise ConfigurationError(f"block override for missing layer {layer}")
            self._dense[layer] = block
        d = self.config.d_model
        exponents = 2.0 * (np.arange(d) // 2) / d
        self._inv_freq = 1.0 / np.power(POSITION_BASE, exponents)

    # ------------------------------------------------------------------
    # Embedding
    # ------------------------------------------------------------------

    def position_encoding(self, positions: Sequence[int]) -> np.ndarray:
        """(n, d) sinusoidal encoding scaled by 1/sqrt(d): sin on even dims, cos on odd"""
        angles = np.asarray(positions, dtype=ACC_DTYPE)[:, None] * self._inv_freq[None, :]
        even = np.arange(self.config.d_model) % 2 == 0
        encoding = np.where(even, np.sin(angles), np.cos(angles))
        return encoding / math.sqrt(self.config.d_model)

    def _embed_rows(self, ids: Sequence[int], modality: Sequence[Modality],
                    positions: Sequence[int]) -> np.ndarray:
        w = self.weights
        codes = [Modality(m).code for m in modality]
        rows = (
            w.embedding[list(ids)].astype(ACC_DTYPE)
            + w.modality_embedding[codes].astype(ACC_DTYPE)
            + self.position_encoding(positions)
        )
        return rows.astype(DTYPE)

    def embed(self, tokens: TokenStream) -> np.ndarray:
        return self._embed_rows(tokens.ids, tokens.modality, tokens.positions)

    # ------------------------------------------------------------------
    # Layer pieces
    # ------------------------------------------------------------------

    def blocks(self, plan: LayerExecPlan) -> List[IFeedForwardBlock]:
        """FFN residual block of every layer under the plan"""
        blocks: List[IFeedForwardBlock] = []
        for layer, mode in enumerate(plan.ffn_modes):
            dense = self._dense[layer]
            if mode is FfnMode.HADAMARD:
                blocks.append(HadamardBlock(plan.alphas[layer], plan.hadamard_scope, dense))
            elif mode is FfnMode.SKIP:
                blocks.append(SkipBlock(plan.hadamard_scope, dense))
            else:
                blocks.append(dense)
        return blocks

    def _attention(
        self,
        layer: int,
        hidden: np.ndarray,
        cache: LayerCache,
        positions: Sequence[int],
        modality: Sequence[Modality],
        causal: bool,
        counter: OpCounter,
    ) -> Tuple[np.ndarray, LayerCache, np.ndarray]:
        """
        Multi-head attention of the stream rows over the cache plus themselves

        Returns:
            (attention output (n, d), cache with the new rows appended,
             probabilities (H, n, n_keys) float64)
        """
        cfg = self.config
        lw = self.weights.layers[layer]
        n, n_heads, d_head = hidden.shape[0], cfg.n_heads, cfg.d_head

        normed = rms_norm(hidden, lw.attn_norm, cfg.norm_eps)
        q = matmul(normed, lw.w_q, counter)
        k = matmul(normed, lw.w_k, counter)
        v = matmul(normed, lw.w_v, counter)

        def split(t: np.ndarray) -> np.ndarray:
            return np.ascontiguousarray(t.reshape(n, n_heads, d_head).transpose(1, 0, 2))

        q_heads = split(q)
        cache = cache.append(split(k), split(v), positions, modality)
        scale = 1.0 / math.sqrt(d_head)
        allowed = None
        if causal:
            key_pos = np.asarray(cache.positions)
            allowed = key_pos[None, :] <= np.asarray(positions)[:, None]

        probs = np.empty((n_heads, n, cache.n_rows), dtype=ACC_DTYPE)
        mixed = np.empty((n, cfg.d_model), dtype=DTYPE)
        for head in range(n_heads):
            scores = matmul(q_heads[head], cache.keys[head].T, counter).astype(ACC_DTYPE) * scale
            if allowed is not None:
                scores = np.where(allowed, scores, -np.inf)
            probs[head] = softmax(scores, axis=-1)
            mixed[:, head * d_head:(head + 1) * d_head] = matmul(
                probs[head].astype(DTYPE), cache.values[head], counter
            )
        return matmul(mixed, lw.w_o, counter), cache, probs

    def _logits(self, hidden: np.ndarray) -> np.ndarray:
        normed = rms_norm(hidden, self.weights.final_norm, self.config.norm_eps)
        return matmul(normed, self.weights.unembedding)

    def _check_ids(self, ids: Sequence[int]) -> None:
        bad = [i for i in ids if not 0 <= i < self.config.vocab_size]
        if bad:
            raise ConfigurationError(
                f"token ids outside vocabulary of {self.config.vocab_size}: {bad[:5]}"
            )

    def _prune(self, point: PrunePoint, context: PruneContext, step: int) -> PruneEvent:
        records = point.policy.score(context)
        keep = point.policy.select(context, point.keep_ratio)
        kept = tuple(context.positions[i] for i in keep.indices)
        n_visual = len(context.visual_rows())
        logger.debug(
            "[Pruning] %s layer %d step %d: kept %d/%d visual tokens",
            point.policy.get_policy_name(), point.layer, step, keep.n_visual_kept, n_visual,
        )
        return PruneEvent(point.layer, point.stage, step, keep, kept, records)

    # ------------------------------------------------------------------
    # Public passes
    # ------------------------------------------------------------------

    def forward(
        self,
        tokens: TokenStream,
        plan: Optional[LayerExecPlan] = None,
        probes: Optional[ProbeRequest] = None,
        keep_override: Optional[Mapping[int, Collection[int]]] = None,
    ) -> ForwardTrace:
        """
        Prefill pass over a prompt

        Args:
            tokens: prompt stream (visual tokens first by convention)
            plan: execution plan, vanilla when None
            probes: what to record, every layer when None
            keep_override: layer -> positions to keep after that layer; replaces the plan's
                prefill prune points (used to replay a pruning decision from scratch)

        Raises:
            SequenceTooLongError: stream longer than max_seq
            ConfigurationError: plan inconsistent with the model, bad ids, a prune point
                whose query token is not text
        """
        cfg = self.config
        plan = (plan or LayerExecPlan.vanilla(cfg.n_layers)).validate(cfg)
        probes = probes or ProbeRequest()
        if len(tokens) == 0:
            raise ConfigurationError("empty token stream")
        if len(tokens) > cfg.max_seq or max(tokens.positions) >= cfg.max_seq:
            raise SequenceTooLongError(f"{len(tokens)} tokens exceed max_seq={cfg.max_seq}")
        self._check_ids(tokens.ids)
        causal = not probes.bidirectional
        if causal and not tokens.is_ordered:
            raise ConfigurationError("causal pass needs strictly increasing positions")

        counter = OpCounter()
        blocks = self.blocks(plan)
        layer_caches = KvCache.empty(cfg.n_layers, cfg.n_heads, cfg.d_head).layers
        prefill_points = {p.layer: p for p in plan.prefill_points()}
        overrides = None
        if keep_override is not None:
            overrides = {layer: set(kept) for layer, kept in keep_override.items()}

        hidden = self.embed(tokens)
        positions = list(tokens.positions)
        modality = list(tokens.modality)
        probed: Dict[int, LayerProbe] = {}
        events: List[PruneEvent] = []
        kept_after: List[Tuple[int, Tuple[int, ...]]] = []

        for layer in range(cfg.n_layers):
            residual_in = hidden
            attn_out, layer_caches[layer], probs = self._attention(
                layer, hidden, layer_caches[layer], positions, modality, causal, counter
            )
            x = (residual_in.astype(ACC_DTYPE) + attn_out.astype(ACC_DTYPE)).astype(DTYPE)
            hidden = blocks[layer].apply(x, modality, counter)
            layer_cache = layer_caches[layer]

            if probes.wants(layer):
                probe = LayerProbe(
                    layer, tuple(positions), tuple(modality),
                    tuple(layer_cache.positions), tuple(layer_cache.modality),
                )
                if probes.hidden_states:
                    probe.residual_in, probe.ffn_input, probe.ffn_output = residual_in, x, hidden
                if probes.attention:
                    probe.values = layer_cache.values
                    probe.attention = probs[:, probes.query_index, :].astype(DTYPE)
                probed[layer] = probe

            keep_rows: Optional[List[int]] = None
            if overrides is not None:
                if layer in overrides:
                    keep_rows = [i for i, p in enumerate(positions) if p in overrides[layer]]
            elif layer in prefill_points:
                if modality[-1] is not Modality.TEXT:
                    raise ConfigurationError("pruning needs a text token as the final prompt token")
                context = PruneContext(
                    layer, self.weights.layers[layer], probs[:, -1, :].astype(DTYPE),
                    layer_cache.values, layer_cache.positions, layer_cache.modality,
                )
                event = self._prune(prefill_points[layer], context, step=0)
                events.append(event)
                keep_rows = list(event.keep.indices)

            if keep_rows is not None:
                kept_after.append((layer, tuple(positions[i] for i in keep_rows)))
                if len(keep_rows) < len(positions):
                    hidden = hidden[keep_rows]
                    positions = [positions[i] for i in keep_rows]
                    modality = [modality[i] for i in keep_rows]

        cache = KvCache(layer_caches, next_position=max(tokens.positions) + 1)
        for layer, kept in kept_after:
            cache = cache.retain_positions(kept, layer + 1)

        logger.debug("[Decoder] prefill of %d tokens: %d mul-adds, %d rows reach the head",
                     len(tokens), counter.mul_adds, len(positions))
        return ForwardTrace(self._logits(hidden), tuple(positions), probed, cache, events, counter)

    def decode_step(
        self,
        cache: KvCache,
        token_id: int,
        plan: Optional[LayerExecPlan] = None,
        probes: Optional[ProbeRequest] = None,
    ) -> DecodeResult:
        """
        Append one generated token and return its logits

        The token is the query of this step. A decode-stage prune point fires when the step
        number reaches its step: rows of the later layers are evicted before they are
        attended. Later steps re-score the survivors at that layer without evicting.
        The input cache is left untouched.

        Raises:
            ConfigurationError: cache and plan disagree on the layer count, bad token id
            SequenceTooLongError: no position left below max_seq
        """
        cfg = self.config
        plan = (plan or LayerExecPlan.vanilla(cfg.n_layers)).validate(cfg)
        probes = probes or ProbeRequest.none()
        if cache.n_layers != plan.n_layers:
            raise ConfigurationError(
                f"cache holds {cache.n_layers} layers, plan covers {plan.n_layers}"
            )
        self._check_ids([token_id])
        decode_point = plan.decode_point()
        position = cache.position_for_next()
        if position >= cfg.max_seq:
            raise SequenceTooLongError(f"position {position} reaches max_seq={cfg.max_seq}")

        step = cache.steps + 1
        counter = OpCounter()
        blocks = self.blocks(plan)
        working = replace(cache, layers=list(cache.layers), evicted=list(cache.evicted))
        hidden = self._embed_rows([token_id], [Modality.TEXT], [position])
        attention: Dict[int, np.ndarray] = {}
        probed: Dict[int, LayerProbe] = {}
        records: List = []
        event: Optional[PruneEvent] = None

        for layer in range(cfg.n_layers):
            residual_in = hidden
            attn_out, layer_cache, probs = self._attention(
                layer, hidden, working.layers[layer], [position], [Modality.TEXT], False, counter
            )
            working.layers[layer] = layer_cache
            x = (residual_in.astype(ACC_DTYPE) + attn_out.astype(ACC_DTYPE)).astype(DTYPE)
            hidden = blocks[layer].apply(x, [Modality.TEXT], counter)
            row = probs[:, 0, :].astype(DTYPE)
            attention[layer] = row

            if probes.wants(layer):
                probe = LayerProbe(
                    layer, (position,), (Modality.TEXT,),
                    tuple(layer_cache.positions), tuple(layer_cache.modality),
                )
                if probes.hidden_states:
                    probe.residual_in, probe.ffn_input, probe.ffn_output = residual_in, x, hidden
                if probes.attention:
                    probe.values, probe.attention = layer_cache.values, row
                probed[layer] = probe

            if decode_point is None or layer != decode_point.layer or step < decode_point.step:
                continue
            context = PruneContext(layer, self.weights.layers[layer], row, layer_cache.values,
                                   layer_cache.positions, layer_cache.modality)
            if step == decode_point.step:
                event = self._prune(decode_point, context, step)
                records = event.records
                working = working.retain_positions(event.kept_positions, layer + 1)
            else:
                evicted = set(working.evicted)
                records = [r for r in decode_point.policy.score(context)
                           if r.position not in evicted]

        updated = replace(working, next_position=position + 1, steps=step).validate()
        return DecodeResult(self._logits(hidden)[0], updated, step, attention, probed,
                            records, event, counter)

    def generate(
        self,
        tokens: TokenStream,
        plan: Optional[LayerExecPlan] = None,
        steps: int = 1,
        forced: Optional[Sequence[int]] = None,
        probes: Optional[ProbeRequest] = None,
    ) -> GenerationResult:
        """
        Greedy generation of `steps` tokens

        Args:
            forced: token ids fed back instead of the greedy choice;
                must hold at least `steps` ids
        """
        if steps < 1:
            raise ConfigurationError(f"steps must be >= 1, got {steps}")
        if forced is not None and len(forced) < steps:
            raise ConfigurationError(f"{len(forced)} forced tokens for {steps} steps")
        prefill = self.forward(tokens, plan, probes)
        logits = [prefill.last_logits]
        chosen: List[int] = []
        results: List[DecodeResult] = []
        cache = prefill.cache
        for t in range(steps):
            token = int(forced[t]) if forced is not None else greedy(logits[-1])
            chosen.append(token)
            if t == steps - 1:
                break
            result = self.decode_step(cache, token, plan, probes)
            results.append(result)
            logits.append(result.logits)
            cache = result.cache
        return GenerationResult(chosen, logits, prefill, results)
