"""
Command-line front end

    capa gen --out-dir model/
    capa gen-calib --n 64 --out calib.jsonl
    capa pipeline --manifest scenarios/pipeline/toy_capa.yaml

Exit codes: 0 success, 2 configuration / format / argument errors, 3 stage failures.
Logs go to stderr; stdout only carries hashes, paths and summaries.
"""

import argparse
import logging
import sys
from dataclasses import replace
from typing import List, Optional, Sequence

from analyzer.flops import PRESETS, CostSpec, cost_formulas, cost_report
from config import (
    ModelConfig,
    PruningConfig,
    load_manifest,
    load_model_config,
    parse_protected,
)
from engine.core.tokens import TokenStream
from engine.errors import CapaError, ConfigurationError, FormatError, StageError

from . import commands
from .artifacts import generate_streams, load_alphas, load_model, load_prompt, load_streams

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _str_list(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _c_split(text: str):
    if text == "median":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--c-split takes 'median' or a number, got {text!r}")


def _print_hash(sha: str, path) -> None:
    print(f"{sha}  {path}")


# ----------------------------------------------------------------------
# Shared argument groups
# ----------------------------------------------------------------------

def _add_model_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="model config text file")
    parser.add_argument("--weights", required=True, help="CAPT weight container")


def _add_prompt_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--prompt", help="JSON Lines prompt file (first stream is used)")
    parser.add_argument("--prompt-seed", type=int, default=7,
                        help="seed of a synthetic prompt when --prompt is not given")
    parser.add_argument("--n-img", type=int, default=48)
    parser.add_argument("--n-txt", type=int, default=16)


def _add_plan_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--policy", default="contribution",
                        choices=("contribution", "attention", "uniform"))
    parser.add_argument("--keep-ratio", type=float, default=0.25)
    parser.add_argument("--prune-layer", type=int, default=2)
    parser.add_argument("--prune-stage", default="prefill", choices=("prefill", "decode"))
    parser.add_argument("--prune-step", type=int, default=0)
    parser.add_argument("--alphas", help="calibrated alpha container")
    parser.add_argument("--approximated", type=_int_list,
                        help="approximated layers (default: every layer in --alphas)")
    parser.add_argument("--ffn-mode", default="hadamard", choices=("hadamard", "skip", "dense"))
    parser.add_argument("--scope", default="visual", choices=("visual", "all"))


def _prompt(args, model) -> TokenStream:
    if args.prompt:
        return load_prompt(args.prompt)
    return generate_streams(1, args.prompt_seed, args.n_img, args.n_txt,
                            model.config.vocab_size)[0]


def _pruning(args, policy: Optional[str] = None) -> PruningConfig:
    return PruningConfig(policy or args.policy, args.keep_ratio, args.prune_layer, args.prune_stage,
                         args.prune_step)


def _approximation(args):
    """(approximated layers, alphas) from --alphas / --approximated"""
    alphas = load_alphas(args.alphas) if args.alphas else {}
    layers = args.approximated if args.approximated is not None else sorted(alphas)
    return layers, alphas


# ----------------------------------------------------------------------
# Handlers
# ----------------------------------------------------------------------

def _cmd_gen(args) -> int:
    config = ModelConfig(
        n_layers=args.layers, d_model=args.d_model, d_ff=args.d_ff, n_heads=args.heads,
        vocab_size=args.vocab, max_seq=args.max_seq, seed=args.seed,
    )
    for path, sha in commands.cmd_gen(config, args.out_dir).items():
        _print_hash(sha, path)
    return EXIT_OK


def _cmd_gen_calib(args) -> int:
    sha = commands.cmd_gen_calib(args.n, args.seed, args.n_img, args.n_txt, args.vocab,
                                 args.out)
    _print_hash(sha, args.out)
    return EXIT_OK


def _cmd_profile(args) -> int:
    model = load_model(args.config, args.weights)
    _, calib = load_streams(args.calib)
    ctx = commands.ReportContext.of(model.config)
    with commands.stage("profile"):
        commands.cmd_profile(model, calib, args.out, ctx, args.chunk_size)
    print(args.out)
    return EXIT_OK


def _cmd_select(args) -> int:
    profile = commands.load_profile(args.profile)
    protected = sorted(parse_protected(args.protect, profile.n_layers))
    ctx = commands.ReportContext(args.seed, args.config_hash)
    with commands.stage("select"):
        selection = commands.cmd_select(profile, args.eta, protected, args.basis, args.out, ctx)
    print(",".join(str(layer) for layer in selection))
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    model = load_model(args.config, args.weights)
    _, calib = load_streams(args.calib)
    calib = commands.take_calibration(calib, args.calib_samples)
    if args.layers is not None:
        layers = args.layers
    elif args.selection:
        layers = commands.load_selection(args.selection)
    else:
        raise ConfigurationError("calibrate needs --selection or --layers")
    ctx = commands.ReportContext.of(model.config)
    with commands.stage("calibrate"):
        commands.cmd_calibrate(model, calib, layers, args.scope, args.epsilon, args.out,
                               args.errors_out, ctx, args.chunk_size)
    print(args.out)
    return EXIT_OK


def _cmd_run(args) -> int:
    model = load_model(args.config, args.weights)
    prompt = _prompt(args, model)
    if args.mode == "vanilla":
        plan = commands.build_plan(model.config)
    else:
        layers, alphas = _approximation(args)
        plan = commands.build_plan(model.config, layers, args.ffn_mode, args.scope, alphas,
                                   _pruning(args))
    with commands.stage("run"):
        sha = commands.cmd_run(model, prompt, plan, args.steps, args.out)
    _print_hash(sha, args.out)
    return EXIT_OK


def _cmd_flops(args) -> int:
    if args.formulas:
        for component, expr in cost_formulas().items():
            print(f"{component} = {expr}")
        return EXIT_OK
    if args.preset:
        spec = PRESETS[args.preset](rho=args.rho)
        ctx = commands.ReportContext(0, args.preset)
    elif args.config:
        config = load_model_config(args.config)
        pruning = _pruning(args) if args.keep_ratio is not None else None
        layers = args.approximated or []
        modes = tuple(args.ffn_mode if i in set(layers) else "dense"
                      for i in range(config.n_layers))
        points = ((pruning.prune_layer, pruning.keep_ratio),) if pruning else ()
        spec = CostSpec(config.d_model, config.d_ff, config.n_layers, config.n_heads,
                        args.n_img, args.n_txt, modes, args.scope, points)
        ctx = commands.ReportContext.of(config)
    else:
        raise ConfigurationError("flops needs --paper-config or --config")
    baseline = commands.vanilla_spec(spec)
    with commands.stage("flops"):
        if args.out:
            report = commands.cmd_flops(spec, args.out, ctx, baseline)
        else:
            report = cost_report(spec)
        lines = report.summary(cost_report(baseline))
    for line in lines:
        print(line)
    return EXIT_OK


def _cmd_diverge(args) -> int:
    model = load_model(args.config, args.weights)
    prompt = _prompt(args, model)
    layers, alphas = _approximation(args)
    ctx = commands.ReportContext.of(model.config)
    with commands.stage("diverge"):
        if args.sweep:
            base = commands.build_plan(model.config, layers, args.ffn_mode, args.scope, alphas)
            points = commands.cmd_sweep(model, prompt, args.steps, args.policies,
                                        args.keep_ratios, args.prune_layer, args.out, ctx, base)
            for point in points:
                print(f"{point.policy} {point.keep_ratio} {point.mean_hellinger:.6f}")
            return EXIT_OK
        plans = {}
        for name in args.policies:
            plans[name] = commands.build_plan(model.config, layers, args.ffn_mode, args.scope,
                                              alphas, _pruning(args, name))
        traces = commands.cmd_diverge(model, prompt, plans, args.steps, args.out, ctx)
    for trace in traces:
        print(f"{trace.label} mean={trace.mean:.6f} max={trace.max:.6f}")
    return EXIT_OK


def _cmd_sink_report(args) -> int:
    model = load_model(args.config, args.weights)
    prompt = _prompt(args, model)
    ctx = commands.ReportContext.of(model.config)
    with commands.stage("sinks"):
        commands.cmd_sink_report(model, prompt, args.layer, args.tau, args.c_split, args.out,
                                 ctx)
    print(args.out)
    return EXIT_OK


def _cmd_contribution_trace(args) -> int:
    model = load_model(args.config, args.weights)
    prompt = _prompt(args, model)
    ctx = commands.ReportContext.of(model.config)
    with commands.stage("contribution-trace"):
        commands.cmd_contribution_trace(model, prompt, args.steps, args.out, ctx)
    print(args.out)
    return EXIT_OK


def _manifest(args):
    manifest = load_manifest(args.manifest)
    if args.calib_samples is not None:
        pipe = manifest.pipeline
        pipe.calibration = replace(pipe.calibration, calib_samples=args.calib_samples)
    return manifest


def _cmd_pipeline(args) -> int:
    outputs = commands.run_pipeline(_manifest(args))
    for name in sorted(outputs.files):
        print(f"{name}: {outputs.files[name]}")
    return EXIT_OK


def _cmd_ablation(args) -> int:
    rows = commands.run_ablation(_manifest(args), args.out)
    for variant, mean, flops, reduction in rows:
        print(f"{variant} mean_hellinger={mean:.6f} flops={flops} reduction={reduction:.4f}")
    return EXIT_OK


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capa",
        description="Toy decoder with contribution-based token pruning and Hadamard FFNs",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a seeded toy model")
    p.add_argument("--layers", type=int, default=8)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--d-ff", type=int, default=256)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--vocab", type=int, default=256)
    p.add_argument("--max-seq", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("gen-calib", help="write a seeded calibration set")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--n-img", type=int, default=48)
    p.add_argument("--n-txt", type=int, default=16)
    p.add_argument("--vocab", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_calib)

    p = sub.add_parser("profile-ffn", help="FFN linearity profile")
    _add_model_args(p)
    p.add_argument("--calib", required=True)
    p.add_argument("--chunk-size", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_profile)

    p = sub.add_parser("select-layers", help="choose approximated layers from a profile")
    p.add_argument("--profile", required=True)
    p.add_argument("--eta", type=float, default=0.96)
    p.add_argument("--protect", default="first:2,last:1")
    p.add_argument("--basis", default="visual", choices=("visual", "text", "joint"))
    p.add_argument("--seed", type=int, default=0, help="seed echoed in the report header")
    p.add_argument("--config-hash", default="", help="hash echoed in the report header")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("calibrate", help="fit Hadamard alphas")
    _add_model_args(p)
    p.add_argument("--calib", required=True)
    p.add_argument("--selection", help="selection report")
    p.add_argument("--layers", type=_int_list, help="layers to calibrate")
    p.add_argument("--scope", default="visual", choices=("visual", "all"))
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--calib-samples", type=int, default=64,
                   help="calibration streams used, taken from the start of the file")
    p.add_argument("--chunk-size", type=int, default=8)
    p.add_argument("--out", required=True)
    p.add_argument("--errors-out", required=True)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("run", help="greedy generation under a plan")
    _add_model_args(p)
    _add_prompt_args(p)
    _add_plan_args(p)
    p.add_argument("--mode", default="vanilla", choices=("vanilla", "capa"))
    p.add_argument("--steps", type=int, default=32)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("flops", help="analytical cost report")
    p.add_argument("--paper-config", "--preset", dest="preset", choices=sorted(PRESETS),
                   help="published model constants")
    p.add_argument("--rho", type=float, default=0.75, help="pruning ratio of a paper config")
    p.add_argument("--config", help="model config text file")
    p.add_argument("--n-img", type=int, default=48)
    p.add_argument("--n-txt", type=int, default=16)
    p.add_argument("--keep-ratio", type=float, default=None)
    p.add_argument("--prune-layer", type=int, default=2)
    p.add_argument("--approximated", type=_int_list)
    p.add_argument("--ffn-mode", default="hadamard", choices=("hadamard", "skip", "dense"))
    p.add_argument("--scope", default="visual", choices=("visual", "all"))
    p.add_argument("--formulas", action="store_true", help="print the symbolic formulas")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_flops, policy="contribution", prune_stage="prefill",
                   prune_step=0)

    p = sub.add_parser("diverge", help="Hellinger trace against the vanilla model")
    _add_model_args(p)
    _add_prompt_args(p)
    _add_plan_args(p)
    p.add_argument("--steps", type=int, default=32)
    p.add_argument("--policies", type=_str_list, default=["contribution", "attention"])
    p.add_argument("--sweep", action="store_true", help="keep-ratio robustness sweep")
    p.add_argument("--keep-ratios", type=_float_list, default=[0.125, 0.25, 0.5, 0.75, 1.0])
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_diverge)

    p = sub.add_parser("sink-report", help="sink taxonomy of the visual tokens")
    _add_model_args(p)
    _add_prompt_args(p)
    p.add_argument("--layer", type=int, default=2)
    p.add_argument("--tau", type=float, default=20.0)
    p.add_argument("--c-split", type=_c_split, default="median")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sink_report)

    p = sub.add_parser("contribution-trace", help="per-layer mean contribution by modality")
    _add_model_args(p)
    _add_prompt_args(p)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_contribution_trace)

    p = sub.add_parser("pipeline", help="profile, select, calibrate and run from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--calib-samples", type=int, help="overrides calibration.calib_samples")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("ablation", help="skip vs hadamard with and without pruning")
    p.add_argument("--manifest", required=True)
    p.add_argument("--calib-samples", type=int, help="overrides calibration.calib_samples")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_ablation)
    return parser


def setup_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, force=True,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    setup_logging(args.verbose, args.quiet)
    try:
        return args.func(args)
    except (ConfigurationError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except CapaError as exc:
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == '__main__':
    sys.exit(main())
