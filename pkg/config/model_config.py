"""
Model Configuration

Architecture hyperparameters of the toy decoder. Serialized as structured text,
one `key = value` per line in declaration order.
"""

import hashlib
from dataclasses import dataclass, fields
from typing import Any, Dict

from engine.errors import ConfigurationError

MAX_SEED = 2 ** 64


@dataclass
class ModelConfig:
    """
    Decoder architecture

    Toy defaults: d=64, d_ff=256, 8 layers, 4 heads, vocabulary of 256.
    """
    n_layers: int = 8
    d_model: int = 64
    d_ff: int = 256
    n_heads: int = 4
    vocab_size: int = 256
    max_seq: int = 256
    seed: int = 0
    norm_eps: float = 1e-6

    def __post_init__(self):
        for name in ("n_layers", "d_model", "d_ff", "n_heads", "vocab_size", "max_seq"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigurationError(f"{name} must be an integer >= 1, got {value!r}")
        if self.d_model % self.n_heads != 0:
            raise ConfigurationError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )
        if not (0 <= self.seed < MAX_SEED):
            raise ConfigurationError(f"seed must fit in 64 bits, got {self.seed}")
        if self.norm_eps <= 0:
            raise ConfigurationError("norm_eps must be positive")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    @classmethod
    def from_dict(cls, data: dict) -> 'ModelConfig':
        """Create ModelConfig from dictionary"""
        model_data = data.get('model', data)
        known = {f.name for f in fields(cls)}
        unknown = set(model_data) - known
        if unknown:
            raise ConfigurationError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**model_data)

    def to_dict(self) -> dict:
        """Convert to dictionary for serialization"""
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_text(self) -> str:
        return "".join(f"{key} = {_format_value(value)}\n" for key, value in self.to_dict().items())

    @classmethod
    def from_text(cls, text: str) -> 'ModelConfig':
        types = {f.name: f.type for f in fields(cls)}
        data: Dict[str, Any] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
            data[key] = _parse_value(value, types[key], key)
        return cls(**data)

    def config_hash(self) -> str:
        """SHA-256 of the text form"""
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(text: str, type_name: Any, key: str) -> Any:
    type_name = getattr(type_name, "__name__", type_name)
    try:
        if type_name == "int":
            return int(text)
        if type_name == "float":
            return float(text)
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {text!r} as {type_name}") from None
    return text
