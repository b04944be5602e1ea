"""
Pipeline Configuration

Run manifest of the command-line harness: where the model artifacts live, and how the
profile -> select -> calibrate -> run pipeline is parameterized.
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Union

from engine.errors import ConfigurationError

POLICIES = ("contribution", "attention", "uniform")
STAGES = ("prefill", "decode")
SELECTION_BASES = ("visual", "text", "joint")
SCOPES = ("visual", "all")
FFN_MODES = ("hadamard", "skip", "dense")


def parse_protected(spec: str, n_layers: int) -> Set[int]:
    """
    Parse a protected-layer spec such as "first:2,last:1" or "0,1,7"

    Raises:
        ConfigurationError: malformed entry
    """
    protected: Set[int] = set()
    for raw in (part.strip() for part in str(spec).split(",")):
        if not raw or raw == "none":
            continue
        kind, _, count = raw.partition(":")
        try:
            if kind == "first":
                protected.update(range(min(int(count), n_layers)))
            elif kind == "last":
                protected.update(range(max(n_layers - int(count), 0), n_layers))
            else:
                protected.add(int(raw))
        except ValueError:
            raise ConfigurationError(f"bad protected-layer entry: {raw!r}") from None
    return {layer for layer in protected if 0 <= layer < n_layers}


@dataclass
class DataConfig:
    """Synthetic calibration and prompt data"""
    n_img: int = 48
    n_txt: int = 16
    calib_seed: int = 1

    def __post_init__(self):
        if self.n_img < 1:
            raise ConfigurationError("n_img must be at least 1")
        if self.n_txt < 1:
            raise ConfigurationError("n_txt must be at least 1 (the query token is text)")


@dataclass
class ProfileConfig:
    """FFN linearity profile and layer selection"""
    eta: float = 0.96
    protect: str = "first:2,last:1"
    basis: str = "visual"

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ConfigurationError(f"eta must be in (0, 1], got {self.eta}")
        if self.basis not in SELECTION_BASES:
            raise ConfigurationError(f"basis must be one of {SELECTION_BASES}")
        parse_protected(self.protect, 1)

    def protected_layers(self, n_layers: int) -> Set[int]:
        return parse_protected(self.protect, n_layers)


@dataclass
class CalibrationConfig:
    """Hadamard calibration"""
    scope: str = "visual"
    calib_samples: int = 64
    epsilon: float = 1e-8
    chunk_size: int = 8  # samples per worker task; fixed so results do not depend on threads

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise ConfigurationError(f"scope must be one of {SCOPES}")
        if self.calib_samples < 1:
            raise ConfigurationError("calib_samples must be at least 1")
        if self.epsilon <= 0:
            raise ConfigurationError("epsilon must be positive")
        if self.chunk_size < 1:
            raise ConfigurationError("chunk_size must be at least 1")


@dataclass
class PruningConfig:
    """Visual-token pruning at one prune point"""
    policy: str = "contribution"
    keep_ratio: float = 0.25
    prune_layer: int = 2
    prune_stage: str = "prefill"
    prune_step: int = 0

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ConfigurationError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if not 0.0 < self.keep_ratio <= 1.0:
            raise ConfigurationError(f"keep_ratio must be in (0, 1], got {self.keep_ratio}")
        if self.prune_layer < 0:
            raise ConfigurationError("prune_layer cannot be negative")
        if self.prune_stage not in STAGES:
            raise ConfigurationError(f"prune_stage must be one of {STAGES}")
        if self.prune_stage == "decode" and self.prune_step < 1:
            raise ConfigurationError("decode-stage pruning needs prune_step >= 1")
        if self.prune_stage == "prefill" and self.prune_step != 0:
            raise ConfigurationError("prefill pruning takes prune_step 0")


@dataclass
class DivergenceConfig:
    """Hellinger divergence traces"""
    steps: int = 32
    prompt_seed: int = 7
    policies: List[str] = field(default_factory=lambda: ["contribution", "attention"])
    keep_ratios: List[float] = field(default_factory=lambda: [0.125, 0.25, 0.5, 0.75, 1.0])

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigurationError("steps must be at least 1")
        unknown = [p for p in self.policies if p not in POLICIES]
        if unknown:
            raise ConfigurationError(f"unknown divergence policies: {unknown}")
        if any(not 0.0 < r <= 1.0 for r in self.keep_ratios):
            raise ConfigurationError("sweep keep ratios must be in (0, 1]")


@dataclass
class SinkConfig:
    """Sink taxonomy report"""
    tau: float = 20.0
    c_split: Union[str, float] = "median"
    layer: int = 2

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigurationError("tau must be positive")
        if self.c_split != "median":
            try:
                self.c_split = float(self.c_split)
            except (TypeError, ValueError):
                raise ConfigurationError(
                    f"c_split must be 'median' or a number, got {self.c_split!r}"
                ) from None
            if self.c_split <= 0:
                raise ConfigurationError("c_split must be positive")
        if self.layer < 0:
            raise ConfigurationError("sink layer cannot be negative")


@dataclass
class PipelineConfig:
    """
    Pipeline parameters

    pruning None runs without pruning; approximate False keeps every FFN dense.
    approximated_layers overrides the profiled selection when given.
    """
    data: DataConfig = field(default_factory=DataConfig)
    profile: ProfileConfig = field(default_factory=ProfileConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    pruning: Optional[PruningConfig] = None
    divergence: DivergenceConfig = field(default_factory=DivergenceConfig)
    sinks: SinkConfig = field(default_factory=SinkConfig)
    approximate: bool = False
    ffn_mode: str = "hadamard"
    approximated_layers: Optional[List[int]] = None
    emit_divergence: bool = False
    emit_sinks: bool = False

    def __post_init__(self):
        if self.ffn_mode not in FFN_MODES:
            raise ConfigurationError(f"ffn_mode must be one of {FFN_MODES}")

    @property
    def is_vanilla(self) -> bool:
        return self.pruning is None and not self.approximate

    @classmethod
    def from_dict(cls, data: dict) -> 'PipelineConfig':
        """Create PipelineConfig from dictionary"""
        pipe = data.get('pipeline', data) or {}
        pruning_data = pipe.get('pruning')
        return cls(
            data=DataConfig(**pipe.get('data', {})),
            profile=ProfileConfig(**pipe.get('profile', {})),
            calibration=CalibrationConfig(**pipe.get('calibration', {})),
            pruning=PruningConfig(**pruning_data) if pruning_data else None,
            divergence=DivergenceConfig(**pipe.get('divergence', {})),
            sinks=SinkConfig(**pipe.get('sinks', {})),
            approximate=pipe.get('approximate', False),
            ffn_mode=pipe.get('ffn_mode', 'hadamard'),
            approximated_layers=pipe.get('approximated_layers'),
            emit_divergence=pipe.get('emit_divergence', False),
            emit_sinks=pipe.get('emit_sinks', False),
        )

    def to_dict(self) -> dict:
        """Convert to dictionary for serialization"""
        return {
            'data': asdict(self.data),
            'profile': asdict(self.profile),
            'calibration': asdict(self.calibration),
            'pruning': asdict(self.pruning) if self.pruning else None,
            'divergence': asdict(self.divergence),
            'sinks': asdict(self.sinks),
            'approximate': self.approximate,
            'ffn_mode': self.ffn_mode,
            'approximated_layers': self.approximated_layers,
            'emit_divergence': self.emit_divergence,
            'emit_sinks': self.emit_sinks,
        }


@dataclass
class RunManifest:
    """
    Complete run description

    Paths are taken as given (relative to the invoking directory when relative).
    """
    config_path: str
    weights_path: str
    output_dir: str
    calib_path: Optional[str] = None
    prompt_path: Optional[str] = None
    alpha_path: Optional[str] = None  # where calibrate writes; never read back
    seed: int = 0
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self):
        if not self.config_path or not self.weights_path or not self.output_dir:
            raise ConfigurationError("manifest needs config_path, weights_path and output_dir")

    def check_paths(self) -> None:
        """
        Raises:
            ConfigurationError: a referenced input file does not exist
        """
        inputs = {
            'config_path': self.config_path,
            'weights_path': self.weights_path,
            'calib_path': self.calib_path,
            'prompt_path': self.prompt_path,
        }
        missing = [f"{key}={value}" for key, value in inputs.items()
                   if value is not None and not Path(value).exists()]
        if missing:
            raise ConfigurationError(f"manifest references missing files: {', '.join(missing)}")

    @classmethod
    def from_dict(cls, data: dict) -> 'RunManifest':
        """Create RunManifest from dictionary"""
        run = data.get('run', data)
        known = {'config_path', 'weights_path', 'output_dir', 'calib_path', 'prompt_path',
                 'alpha_path', 'seed', 'pipeline'}
        unknown = set(run) - known
        if unknown:
            raise ConfigurationError(f"unknown manifest keys: {sorted(unknown)}")
        try:
            return cls(
                config_path=run['config_path'],
                weights_path=run['weights_path'],
                output_dir=run['output_dir'],
                calib_path=run.get('calib_path'),
                prompt_path=run.get('prompt_path'),
                alpha_path=run.get('alpha_path'),
                seed=run.get('seed', 0),
                pipeline=PipelineConfig.from_dict(run.get('pipeline') or {}),
            )
        except KeyError as exc:
            raise ConfigurationError(f"manifest lacks {exc.args[0]!r}") from None
        except TypeError as exc:
            raise ConfigurationError(f"invalid manifest section: {exc}") from None

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for serialization"""
        return {
            'run': {
                'config_path': self.config_path,
                'weights_path': self.weights_path,
                'output_dir': self.output_dir,
                'calib_path': self.calib_path,
                'prompt_path': self.prompt_path,
                'alpha_path': self.alpha_path,
                'seed': self.seed,
                'pipeline': self.pipeline.to_dict(),
            }
        }
