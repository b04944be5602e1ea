"""
Analytical FLOPs model

Per-layer multiply-accumulate counts of a prefill pass, built once as SymPy expressions
and evaluated with exact integers:

    attn_proj       4 d^2 N          Q, K, V and O projections
    attn_quadratic  2 N^2 d          score and mix products over every head
    ffn_dense       3 d d_ff N_dense SwiGLU gate, up and down
    ffn_hadamard    d N_had          elementwise scaling

N is the number of tokens entering the layer. Layers after a prune point see the reduced
length; the prune layer itself still runs at full length. One mul-add is two FLOPs, so
report totals equal twice the instrumented OpCounter count of the same pass.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

import sympy as sp

from config.model_config import ModelConfig
from engine.core.plan import LayerExecPlan
from engine.core.tokens import TokenStream
from engine.errors import ConfigurationError
from engine.interfaces.ffn_block import FfnMode, HadamardScope
from pruning.keep_set import keep_count

logger = logging.getLogger(__name__)

COMPONENTS = ("attn_proj", "attn_quadratic", "ffn_dense", "ffn_hadamard")

D, D_FF, N, N_DENSE, N_HAD = sp.symbols("d d_ff N N_dense N_had",
                                        integer=True, nonnegative=True)

_FORMULAS = {
    "attn_proj": 4 * D ** 2 * N,
    "attn_quadratic": 2 * N ** 2 * D,
    "ffn_dense": 3 * D * D_FF * N_DENSE,
    "ffn_hadamard": D * N_HAD,
}


def cost_formulas() -> Dict[str, sp.Expr]:
    """Per-layer mul-add expressions keyed by component"""
    return dict(_FORMULAS)


def _evaluate(component: str, **values: int) -> int:
    symbols = {"d": D, "d_ff": D_FF, "N": N, "N_dense": N_DENSE, "N_had": N_HAD}
    expr = _FORMULAS[component].subs({symbols[k]: sp.Integer(v) for k, v in values.items()})
    return int(expr)


def ffn_flops(d: int, d_ff: int) -> int:
    """FLOPs of the dense FFN per token: 2 * 3 d d_ff"""
    return 2 * _evaluate("ffn_dense", d=d, d_ff=d_ff, N_dense=1)


def hadamard_flops(d: int) -> int:
    """FLOPs of the Hadamard scaling per token, counted as d"""
    return _evaluate("ffn_hadamard", d=d, N_had=1)


def reduction_factor(d: int, d_ff: int) -> int:
    """ffn_flops / hadamard_flops = 6 d_ff"""
    ratio = sp.Rational(ffn_flops(d, d_ff), hadamard_flops(d))
    if ratio.q != 1:
        raise ConfigurationError(f"non-integral reduction factor {ratio}")
    return int(ratio)


def sequence_lengths(n_img: int, n_txt: int, rho: float) -> Tuple[int, int]:
    """
    (N, N') with N' = (1 - rho) n_img + n_txt under the keep-set rounding rule

    Raises:
        ConfigurationError: rho outside [0, 1) or negative token counts
    """
    if not 0.0 <= rho < 1.0:
        raise ConfigurationError(f"pruning ratio must be in [0, 1), got {rho}")
    if n_img < 0 or n_txt < 0:
        raise ConfigurationError("token counts cannot be negative")
    kept = keep_count(1.0 - rho, n_img) if n_img and rho > 0 else n_img
    return n_img + n_txt, kept + n_txt


def linear_speedup(n_img: int, n_txt: int, rho: float) -> sp.Rational:
    """N / N'"""
    full, reduced = sequence_lengths(n_img, n_txt, rho)
    return sp.Rational(full, reduced)


def attention_speedup(n_img: int, n_txt: int, rho: float) -> sp.Rational:
    """(N / N')^2"""
    return linear_speedup(n_img, n_txt, rho) ** 2


@dataclass(frozen=True)
class CostSpec:
    """
    Everything the analytical model needs, independent of weights and calibration

    prune_points holds (layer, keep_ratio) pairs of prefill pruning.
    """
    d_model: int
    d_ff: int
    n_layers: int
    n_heads: int
    n_img: int
    n_txt: int
    ffn_modes: Tuple[FfnMode, ...] = ()
    scope: HadamardScope = HadamardScope.VISUAL_ONLY
    prune_points: Tuple[Tuple[int, float], ...] = ()

    def __post_init__(self):
        modes = self.ffn_modes or (FfnMode.DENSE,) * self.n_layers
        object.__setattr__(self, "ffn_modes", tuple(FfnMode(m) for m in modes))
        object.__setattr__(self, "scope", HadamardScope.parse(self.scope))
        object.__setattr__(self, "prune_points",
                           tuple(sorted((int(layer), float(ratio))
                                        for layer, ratio in self.prune_points)))
        if len(self.ffn_modes) != self.n_layers:
            raise ConfigurationError(
                f"{len(self.ffn_modes)} FFN modes for {self.n_layers} layers"
            )
        if min(self.d_model, self.d_ff, self.n_layers, self.n_heads) < 1:
            raise ConfigurationError("model dimensions must be positive")
        if self.n_img < 0 or self.n_txt < 0 or self.n_img + self.n_txt == 0:
            raise ConfigurationError("cost model needs a non-empty sequence")
        layers = [layer for layer, _ in self.prune_points]
        outside = [layer for layer in layers if not 0 <= layer < self.n_layers]
        if len(set(layers)) != len(layers) or outside:
            raise ConfigurationError(f"invalid prune layers {layers}")

    @classmethod
    def from_plan(cls, config: ModelConfig, plan: LayerExecPlan, n_img: int,
                  n_txt: int) -> 'CostSpec':
        """Prefill cost of a plan; decode-stage prune points do not affect the prefill"""
        if plan.n_layers != config.n_layers:
            raise ConfigurationError(
                f"plan covers {plan.n_layers} layers, model has {config.n_layers}"
            )
        return cls(
            config.d_model, config.d_ff, config.n_layers, config.n_heads, n_img, n_txt,
            plan.ffn_modes, plan.hadamard_scope,
            tuple((p.layer, p.keep_ratio) for p in plan.prefill_points()),
        )

    def approximated_layers(self) -> FrozenSet[int]:
        return frozenset(i for i, m in enumerate(self.ffn_modes) if m is not FfnMode.DENSE)

    def layer_lengths(self) -> List[Tuple[int, int]]:
        """(visual, text) token counts entering every layer"""
        ratios = dict(self.prune_points)
        n_visual, lengths = self.n_img, []
        for layer in range(self.n_layers):
            lengths.append((n_visual, self.n_txt))
            if layer in ratios and n_visual > 0:
                n_visual = keep_count(ratios[layer], n_visual)
        return lengths

    def echo(self) -> Dict[str, object]:
        return {
            'd_model': self.d_model,
            'd_ff': self.d_ff,
            'n_heads': self.n_heads,
            'n_layers': self.n_layers,
            'n_img': self.n_img,
            'n_txt': self.n_txt,
            'prune_points': [f"{layer}:{ratio}" for layer, ratio in self.prune_points],
            'approximated_layers': sorted(self.approximated_layers()),
            'scope': self.scope.value,
        }


@dataclass(frozen=True)
class CostEntry:
    layer: int
    component: str
    mul_adds: int

    def row(self) -> list:
        return [self.layer, self.component, self.mul_adds]


@dataclass
class CostReport:
    """Per-layer component counts of one prefill, with totals, shares and speedups"""
    spec: CostSpec
    entries: List[CostEntry] = field(default_factory=list)

    @property
    def total_mul_adds(self) -> int:
        return sum(entry.mul_adds for entry in self.entries)

    @property
    def total_flops(self) -> int:
        return 2 * self.total_mul_adds

    def component_totals(self) -> Dict[str, int]:
        totals = {component: 0 for component in COMPONENTS}
        for entry in self.entries:
            totals[entry.component] += entry.mul_adds
        return totals

    def shares(self) -> Dict[str, float]:
        total = self.total_mul_adds
        if total == 0:
            return {component: 0.0 for component in COMPONENTS}
        return {c: float(sp.Rational(v, total)) for c, v in self.component_totals().items()}

    @property
    def ffn_share(self) -> float:
        shares = self.shares()
        return shares["ffn_dense"] + shares["ffn_hadamard"]

    def reduction_vs(self, baseline: 'CostReport') -> float:
        """1 - total / baseline total"""
        if baseline.total_mul_adds == 0:
            raise ConfigurationError("baseline report is empty")
        return float(1 - sp.Rational(self.total_mul_adds, baseline.total_mul_adds))

    def speedups(self) -> Tuple[sp.Rational, sp.Rational]:
        """(linear, attention) speedup of the first prune point; (1, 1) without pruning"""
        if not self.spec.prune_points or self.spec.n_img == 0:
            return sp.Integer(1), sp.Integer(1)
        rho = 1.0 - self.spec.prune_points[0][1]
        return (linear_speedup(self.spec.n_img, self.spec.n_txt, rho),
                attention_speedup(self.spec.n_img, self.spec.n_txt, rho))

    def rows(self) -> List[list]:
        """CSV rows: layer, component, mul_adds"""
        return [entry.row() for entry in self.entries]

    def summary(self, baseline: Optional['CostReport'] = None) -> List[str]:
        linear, attention = self.speedups()
        lines = [f"{key}={value}" for key, value in self.spec.echo().items()]
        lines.append(f"total_mul_adds={self.total_mul_adds}")
        lines.append(f"total_flops={self.total_flops}")
        for component, share in self.shares().items():
            lines.append(f"share.{component}={share:.6f}")
        lines.append(f"linear_speedup={linear}")
        lines.append(f"attention_speedup={attention}")
        if baseline is not None:
            lines.append(f"reduction={self.reduction_vs(baseline):.6f}")
        return lines


def cost_report(spec: CostSpec) -> CostReport:
    report = CostReport(spec)
    for layer, (n_visual, n_text) in enumerate(spec.layer_lengths()):
        n = n_visual + n_text
        mode = spec.ffn_modes[layer]
        if mode is FfnMode.DENSE:
            inside = 0
        elif spec.scope is HadamardScope.ALL_TOKENS:
            inside = n
        else:
            inside = n_visual
        n_had = inside if mode is FfnMode.HADAMARD else 0
        counts = {
            "attn_proj": _evaluate("attn_proj", d=spec.d_model, N=n),
            "attn_quadratic": _evaluate("attn_quadratic", d=spec.d_model, N=n),
            "ffn_dense": _evaluate("ffn_dense", d=spec.d_model, d_ff=spec.d_ff,
                                   N_dense=n - inside),
            "ffn_hadamard": _evaluate("ffn_hadamard", d=spec.d_model, N_had=n_had),
        }
        report.entries.extend(CostEntry(layer, c, counts[c]) for c in COMPONENTS)
    logger.debug("[Flops] %d layers, %d mul-adds", spec.n_layers, report.total_mul_adds)
    return report


def pipeline_report(
    config: ModelConfig,
    plan: LayerExecPlan,
    seq: Union[TokenStream, Tuple[int, int]],
) -> CostReport:
    """
    Analytical cost of prefilling `seq` under `plan`

    Args:
        seq: the prompt, or its (n_img, n_txt) split
    """
    if isinstance(seq, TokenStream):
        n_img, n_txt = seq.n_visual, seq.n_text
    else:
        n_img, n_txt = seq
    return cost_report(CostSpec.from_plan(config, plan, n_img, n_txt))


# Llava-1.5-7B-like constants: LLaMA-2-7B backbone, 576 image tokens
LLAVA7B_PRUNE_LAYER = 2
LLAVA7B_HADAMARD_LAYERS = (2, 3, 4, 5, 22, 23, 24, 25, 26, 27, 28, 29)


def llava7b_spec(
    rho: float = 0.75,
    approximated: Sequence[int] = LLAVA7B_HADAMARD_LAYERS,
    n_txt: int = 64,
    prune_layer: int = LLAVA7B_PRUNE_LAYER,
) -> CostSpec:
    """Analytical config of a 7B vision-language model; rho = 0 disables pruning"""
    selected = set(approximated)
    modes = tuple(FfnMode.HADAMARD if i in selected else FfnMode.DENSE for i in range(32))
    points = ((prune_layer, 1.0 - rho),) if rho > 0 else ()
    return CostSpec(4096, 11008, 32, 32, 576, n_txt, modes, HadamardScope.ALL_TOKENS, points)


PRESETS = {"llava7b": llava7b_spec}
