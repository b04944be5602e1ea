"""
Harness commands

One function per command. The pipeline runs the same functions in sequence, so its
outputs are exactly what the individual commands write for the same inputs.
"""

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence

from analyzer.contribution_trace import contribution_trace
from analyzer.divergence import (
    DivergenceTrace,
    SweepPoint,
    ratio_sweep,
    reference_run,
    trace_divergence,
)
from analyzer.flops import CostReport, CostSpec, cost_report, pipeline_report
from analyzer.reports import read_csv, write_csv
from analyzer.sinks import SinkRecord, sink_report
from approximation.ffn_profile import (
    LayerSelection,
    RedundancyProfile,
    build_profile,
    select_layers,
)
from approximation.hadamard import collect_moments, reconstruction_errors, solve_alpha
from config import ModelConfig, PruningConfig, RunManifest
from engine.core.model import DecoderModel
from engine.core.plan import LayerExecPlan, PrunePoint, PruneStage, ProbeRequest
from engine.core.tokens import TokenStream
from engine.errors import CapaError, ConfigurationError, FormatError, StageError
from engine.implementations.hadamard import AlphaVector
from engine.interfaces.ffn_block import FfnMode, HadamardScope
from pruning.policy_factory import create_policy

from .artifacts import (
    generate_streams,
    load_model,
    load_prompt,
    load_streams,
    save_alphas,
    save_model,
    save_run_output,
    save_streams,
)

logger = logging.getLogger(__name__)

PROFILE_COLUMNS = ("layer", "mean_sim_visual", "mean_sim_text", "n_visual", "n_text")
SELECTION_COLUMNS = ("layer", "mean_sim", "selected", "protected")
RECONSTRUCTION_COLUMNS = ("layer", "mse_hadamard", "mse_skip", "n_samples")
FLOPS_COLUMNS = ("layer", "component", "mul_adds")
TRACE_COLUMNS = ("step", "policy", "hellinger")
SWEEP_COLUMNS = ("policy", "keep_ratio", "mean_hellinger", "max_hellinger")
SINK_COLUMNS = ("layer", "token", "phi", "c_value", "class")
CONTRIBUTION_COLUMNS = ("layer", "modality", "mean_c", "n_keys")
ABLATION_COLUMNS = ("variant", "mean_hellinger", "total_flops", "reduction")


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Tag failures of a stage; configuration and format errors pass through untouched"""
    logger.info("[Pipeline] stage %s", name)
    try:
        yield
    except (ConfigurationError, FormatError, StageError):
        raise
    except CapaError as exc:
        raise StageError(name, str(exc), exc) from exc


@dataclass
class ReportContext:
    """What every report header carries"""
    seed: int
    config_hash: str

    @classmethod
    def of(cls, config: ModelConfig, seed: Optional[int] = None) -> 'ReportContext':
        return cls(config.seed if seed is None else seed, config.config_hash())

    def write(self, path, columns, rows, summary=None) -> Path:
        return write_csv(path, columns, rows, self.seed, self.config_hash, summary)


# ----------------------------------------------------------------------
# Plans
# ----------------------------------------------------------------------

def prune_point(pruning: PruningConfig) -> PrunePoint:
    return PrunePoint(pruning.prune_layer, pruning.keep_ratio, create_policy(pruning.policy),
                      PruneStage(pruning.prune_stage), pruning.prune_step)


def build_plan(
    config: ModelConfig,
    approximated: Sequence[int] = (),
    ffn_mode: str = "hadamard",
    scope: str = "visual",
    alphas: Optional[Dict[int, AlphaVector]] = None,
    pruning: Optional[PruningConfig] = None,
) -> LayerExecPlan:
    """
    Validated plan for the model

    Raises:
        ConfigurationError: hadamard layers without alphas, prune layer out of range
    """
    mode = FfnMode(ffn_mode)
    layers = sorted(set(approximated)) if mode is not FfnMode.DENSE else []
    used = {}
    if mode is FfnMode.HADAMARD:
        used = {layer: alphas[layer] for layer in layers if alphas and layer in alphas}
    points = [prune_point(pruning)] if pruning is not None else []
    plan = LayerExecPlan.build(config.n_layers, layers, mode, HadamardScope.parse(scope),
                               points, used)
    return plan.validate(config)


# ----------------------------------------------------------------------
# Stage commands
# ----------------------------------------------------------------------

def cmd_gen(config: ModelConfig, out_dir) -> Dict[str, str]:
    return save_model(config, out_dir)


def cmd_gen_calib(n: int, seed: int, n_img: int, n_txt: int, vocab_size: int, out) -> str:
    streams = generate_streams(n, seed, n_img, n_txt, vocab_size)
    metadata = {"seed": seed, "n_img": n_img, "n_txt": n_txt, "vocab_size": vocab_size}
    return save_streams(out, streams, metadata)


def take_calibration(streams: Sequence[TokenStream], n: int) -> List[TokenStream]:
    """First n calibration streams; all of them when fewer are available"""
    if n < 1:
        raise ConfigurationError(f"calib_samples must be at least 1, got {n}")
    if len(streams) < n:
        logger.warning("[Calibration] %d samples requested, %d available", n, len(streams))
    return list(streams[:n])


def cmd_profile(model: DecoderModel, calib: Sequence[TokenStream], out,
                ctx: ReportContext, chunk_size: int = 8) -> RedundancyProfile:
    profile = build_profile(model, calib, chunk_size=chunk_size)
    ctx.write(out, PROFILE_COLUMNS, profile.rows(),
              summary=[f"n_samples={profile.n_samples}"])
    return profile


def load_profile(path) -> RedundancyProfile:
    rows = read_csv(path)
    try:
        return RedundancyProfile.from_rows([[row[c] for c in PROFILE_COLUMNS] for row in rows])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: not a profile report ({exc})") from None


def cmd_select(profile: RedundancyProfile, eta: float, protected: Sequence[int],
               basis: str, out, ctx: ReportContext) -> LayerSelection:
    selection = select_layers(profile, eta, protected, basis)
    rows = [
        [p.layer, p.mean(basis), p.layer in selection.selected, p.layer in selection.protected]
        for p in profile.layers
    ]
    ctx.write(out, SELECTION_COLUMNS, rows,
              summary=[f"eta={eta}", f"basis={basis}", f"selected={sorted(selection.selected)}"])
    return selection


def load_selection(path) -> List[int]:
    try:
        return [int(row["layer"]) for row in read_csv(path) if row["selected"] == "true"]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: not a selection report ({exc})") from None


def cmd_calibrate(
    model: DecoderModel,
    calib: Sequence[TokenStream],
    layers: Sequence[int],
    scope: str,
    epsilon: float,
    alpha_out,
    errors_out,
    ctx: ReportContext,
    chunk_size: int = 8,
) -> Dict[int, AlphaVector]:
    """Write the alpha container and the reconstruction-error report"""
    moments = collect_moments(model, layers, calib, scope, chunk_size)
    alphas = {layer: solve_alpha(m, epsilon) for layer, m in moments.items()}
    for layer, alpha in alphas.items():
        logger.info("[Calibration] layer %d: %d samples, %d fallback dims",
                    layer, moments[layer].n_samples, int(alpha.fallback_mask.sum()))
    save_alphas(alpha_out, list(alphas.values()))
    errors = reconstruction_errors(moments, alphas)
    ctx.write(errors_out, RECONSTRUCTION_COLUMNS,
              [[e.layer, e.mse_hadamard, e.mse_skip, e.n_samples] for e in errors])
    return alphas


def cmd_run(model: DecoderModel, prompt: TokenStream, plan: LayerExecPlan, steps: int,
            out) -> str:
    result = model.generate(prompt, plan, steps)
    logger.info("[Run] %d tokens generated, %d mul-adds", steps, result.total_mul_adds())
    return save_run_output(out, result.logits, result.tokens)


def cmd_flops(spec: CostSpec, out, ctx: ReportContext,
              baseline: Optional[CostSpec] = None) -> CostReport:
    report = cost_report(spec)
    reference = cost_report(baseline) if baseline is not None else None
    ctx.write(out, FLOPS_COLUMNS, report.rows(), summary=report.summary(reference))
    return report


def vanilla_spec(spec: CostSpec) -> CostSpec:
    return CostSpec(spec.d_model, spec.d_ff, spec.n_layers, spec.n_heads, spec.n_img,
                    spec.n_txt)


def cmd_diverge(model: DecoderModel, prompt: TokenStream, plans: Dict[str, LayerExecPlan],
                steps: int, out, ctx: ReportContext) -> List[DivergenceTrace]:
    reference = reference_run(model, prompt, steps)
    traces = [trace_divergence(model, plan, prompt, steps, label, reference)
              for label, plan in plans.items()]
    ctx.write(out, TRACE_COLUMNS, [row for trace in traces for row in trace.rows()],
              summary=[f"{t.label}.mean={t.mean:.6f}" for t in traces])
    return traces


def cmd_sweep(model: DecoderModel, prompt: TokenStream, steps: int, policies: Sequence[str],
              keep_ratios: Sequence[float], prune_layer: int, out, ctx: ReportContext,
              base_plan: Optional[LayerExecPlan] = None) -> List[SweepPoint]:
    points = ratio_sweep(model, prompt, steps, policies, keep_ratios, prune_layer, base_plan)
    ctx.write(out, SWEEP_COLUMNS, [p.row() for p in points])
    return points


def cmd_sink_report(model: DecoderModel, prompt: TokenStream, layer: int, tau: float,
                    c_split, out, ctx: ReportContext) -> List[SinkRecord]:
    trace = model.forward(prompt, None, ProbeRequest.at(layer))
    records = sink_report(trace, layer, model.weights, tau, c_split)
    ctx.write(out, SINK_COLUMNS, [r.row() for r in records])
    return records


def cmd_contribution_trace(model: DecoderModel, prompt: TokenStream, steps: int, out,
                           ctx: ReportContext, plan: Optional[LayerExecPlan] = None):
    trajectory = contribution_trace(model, prompt, steps, plan)
    ctx.write(out, CONTRIBUTION_COLUMNS, trajectory.rows())
    return trajectory


# ----------------------------------------------------------------------
# Pipeline
# ----------------------------------------------------------------------

@dataclass
class PipelineOutputs:
    output_dir: Path
    files: Dict[str, Path] = field(default_factory=dict)
    selected: List[int] = field(default_factory=list)
    report: Optional[CostReport] = None
    baseline: Optional[CostReport] = None


def _inputs(manifest: RunManifest, model: DecoderModel):
    pipe, cfg = manifest.pipeline, model.config
    if manifest.calib_path:
        _, calib = load_streams(manifest.calib_path)
        calib = take_calibration(calib, pipe.calibration.calib_samples)
    else:
        calib = generate_streams(pipe.calibration.calib_samples, pipe.data.calib_seed,
                                 pipe.data.n_img, pipe.data.n_txt, cfg.vocab_size)
    if manifest.prompt_path:
        prompt = load_prompt(manifest.prompt_path)
    else:
        prompt = generate_streams(1, pipe.divergence.prompt_seed, pipe.data.n_img,
                                  pipe.data.n_txt, cfg.vocab_size)[0]
    return calib, prompt


def approximation_stages(manifest: RunManifest, model: DecoderModel,
                         calib: Sequence[TokenStream], ctx: ReportContext,
                         outputs: PipelineOutputs) -> Dict[int, AlphaVector]:
    """profile -> select -> calibrate; returns the alphas of the selected layers"""
    pipe, out_dir = manifest.pipeline, outputs.output_dir
    chunk = pipe.calibration.chunk_size
    if pipe.approximated_layers is not None:
        selected = sorted(pipe.approximated_layers)
    else:
        with stage("profile"):
            outputs.files["profile"] = out_dir / "profile.csv"
            profile = cmd_profile(model, calib, outputs.files["profile"], ctx, chunk)
        with stage("select"):
            outputs.files["selection"] = out_dir / "selection.csv"
            protected = pipe.profile.protected_layers(model.config.n_layers)
            selection = cmd_select(profile, pipe.profile.eta, sorted(protected),
                                   pipe.profile.basis, outputs.files["selection"], ctx)
            selected = list(selection)
    outputs.selected = selected
    if not selected or pipe.ffn_mode != "hadamard":
        return {}
    with stage("calibrate"):
        outputs.files["alphas"] = Path(manifest.alpha_path or out_dir / "alphas.capt")
        outputs.files["reconstruction"] = out_dir / "reconstruction.csv"
        return cmd_calibrate(model, calib, selected, pipe.calibration.scope,
                             pipe.calibration.epsilon, outputs.files["alphas"],
                             outputs.files["reconstruction"], ctx, chunk)


def run_pipeline(manifest: RunManifest) -> PipelineOutputs:
    """
    profile -> select -> calibrate -> run, then cost, divergence and sink reports

    Raises:
        ConfigurationError: invalid manifest or plan
        StageError: any other failure, tagged with the stage that raised it
    """
    manifest.check_paths()
    pipe = manifest.pipeline
    out_dir = Path(manifest.output_dir)
    outputs = PipelineOutputs(out_dir)
    with stage("load"):
        model = load_model(manifest.config_path, manifest.weights_path)
        calib, prompt = _inputs(manifest, model)
    ctx = ReportContext.of(model.config, manifest.seed)

    alphas: Dict[int, AlphaVector] = {}
    if pipe.approximate:
        alphas = approximation_stages(manifest, model, calib, ctx, outputs)
    plan = build_plan(model.config, outputs.selected, pipe.ffn_mode, pipe.calibration.scope,
                      alphas, pipe.pruning)

    with stage("run"):
        outputs.files["run"] = out_dir / "run.capt"
        cmd_run(model, prompt, plan, pipe.divergence.steps, outputs.files["run"])
    with stage("flops"):
        outputs.files["flops"] = out_dir / "flops.csv"
        spec = CostSpec.from_plan(model.config, plan, prompt.n_visual, prompt.n_text)
        outputs.report = cmd_flops(spec, outputs.files["flops"], ctx, vanilla_spec(spec))
        outputs.baseline = pipeline_report(model.config,
                                           LayerExecPlan.vanilla(model.config.n_layers),
                                           prompt)
    if pipe.emit_divergence:
        with stage("diverge"):
            pruning = pipe.pruning or PruningConfig()
            plans = {}
            for name in pipe.divergence.policies:
                variant = PruningConfig(name, pruning.keep_ratio, pruning.prune_layer,
                                        pruning.prune_stage, pruning.prune_step)
                plans[name] = build_plan(model.config, outputs.selected, pipe.ffn_mode,
                                         pipe.calibration.scope, alphas, variant)
            outputs.files["divergence"] = out_dir / "divergence.csv"
            cmd_diverge(model, prompt, plans, pipe.divergence.steps,
                        outputs.files["divergence"], ctx)
    if pipe.emit_sinks:
        with stage("sinks"):
            outputs.files["sinks"] = out_dir / "sinks.csv"
            cmd_sink_report(model, prompt, pipe.sinks.layer, pipe.sinks.tau,
                            pipe.sinks.c_split, outputs.files["sinks"], ctx)
    logger.info("[Pipeline] done: %s", ", ".join(sorted(outputs.files)))
    return outputs


ABLATION_VARIANTS = (
    ("vanilla+skip", False, "skip"),
    ("vanilla+hadamard", False, "hadamard"),
    ("capa+skip", True, "skip"),
    ("capa+hadamard", True, "hadamard"),
)


def run_ablation(manifest: RunManifest, out=None) -> List[list]:
    """
    Skip vs Hadamard approximation, with and without contribution pruning

    Rows: variant, mean Hellinger against vanilla, analytical FLOPs, reduction.
    """
    manifest.check_paths()
    pipe = manifest.pipeline
    out_dir = Path(manifest.output_dir)
    outputs = PipelineOutputs(out_dir)
    with stage("load"):
        model = load_model(manifest.config_path, manifest.weights_path)
        calib, prompt = _inputs(manifest, model)
    ctx = ReportContext.of(model.config, manifest.seed)
    alphas = approximation_stages(manifest, model, calib, ctx, outputs)
    if outputs.selected and not alphas:
        with stage("calibrate"):
            moments = collect_moments(model, outputs.selected, calib, pipe.calibration.scope,
                                      pipe.calibration.chunk_size)
            alphas = {layer: solve_alpha(m, pipe.calibration.epsilon)
                      for layer, m in moments.items()}
    pruning = pipe.pruning or PruningConfig()
    capa = PruningConfig("contribution", pruning.keep_ratio, pruning.prune_layer,
                         pruning.prune_stage, pruning.prune_step)

    rows = []
    with stage("ablation"):
        steps = pipe.divergence.steps
        reference = reference_run(model, prompt, steps)
        vanilla = pipeline_report(model.config, LayerExecPlan.vanilla(model.config.n_layers),
                                  prompt)
        for label, pruned, mode in ABLATION_VARIANTS:
            plan = build_plan(model.config, outputs.selected, mode, pipe.calibration.scope,
                              alphas, capa if pruned else None)
            trace = trace_divergence(model, plan, prompt, steps, label, reference)
            report = pipeline_report(model.config, plan, prompt)
            rows.append([label, trace.mean, report.total_flops, report.reduction_vs(vanilla)])
    ctx.write(out or out_dir / "ablation.csv", ABLATION_COLUMNS, rows)
    return rows
