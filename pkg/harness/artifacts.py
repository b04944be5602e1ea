"""
Artifact I/O

Files the harness reads and writes:
- model: ModelConfig text file plus a CAPT weight container
- token streams (calibration sets, prompts): JSON Lines, first line a metadata record
- alphas: CAPT container with `alpha.layer.<L>` and `alpha_fallback.layer.<L>` tensors
- run output: CAPT container with `logits` (steps x vocab) and `tokens`
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import ModelConfig, load_model_config, save_model_config
from engine.core.model import DecoderModel
from engine.core.tokens import TokenStream, synthetic_stream
from engine.core.weights import ModelWeights, init_weights
from engine.errors import ConfigurationError, FormatError
from engine.implementations.hadamard import AlphaVector
from engine.infrastructure import read_tensors, write_tensors

logger = logging.getLogger(__name__)

STREAM_FORMAT_VERSION = "1.0"
ALPHA_PREFIX = "alpha.layer."
FALLBACK_PREFIX = "alpha_fallback.layer."

PathLike = Union[str, Path]


def file_sha256(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ----------------------------------------------------------------------
# Model
# ----------------------------------------------------------------------

def save_model(config: ModelConfig, out_dir: PathLike) -> Dict[str, str]:
    """
    Write config.txt and weights.capt for a seeded model

    Returns:
        file path -> SHA-256
    """
    out_dir = Path(out_dir)
    config_path = out_dir / "config.txt"
    weights_path = out_dir / "weights.capt"
    save_model_config(config, config_path)
    weights = init_weights(config)
    hashes = {
        str(config_path): file_sha256(config_path),
        str(weights_path): write_tensors(weights_path, weights.to_tensors()),
    }
    logger.info("[Artifacts] model with %d layers written to %s", config.n_layers, out_dir)
    return hashes


def load_model(config_path: PathLike, weights_path: PathLike) -> DecoderModel:
    config = load_model_config(config_path)
    weights = ModelWeights.from_tensors(config, read_tensors(weights_path))
    return DecoderModel(weights)


# ----------------------------------------------------------------------
# Token streams
# ----------------------------------------------------------------------

def generate_streams(n: int, seed: int, n_img: int, n_txt: int,
                     vocab_size: int) -> List[TokenStream]:
    """n seeded streams of n_img visual then n_txt text tokens"""
    if n < 1:
        raise ConfigurationError(f"need at least one stream, got n={n}")
    rng = np.random.default_rng(seed)
    return [synthetic_stream(rng, n_img, n_txt, vocab_size) for _ in range(n)]


def save_streams(path: PathLike, streams: Sequence[TokenStream],
                 metadata: Optional[dict] = None) -> str:
    """Write streams as JSON Lines; returns the SHA-256 of the file"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"format_version": STREAM_FORMAT_VERSION, "n_streams": len(streams)}
    header.update(metadata or {})
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(json.dumps({"type": "metadata", "data": header}, sort_keys=True) + '\n')
        for stream in streams:
            f.write(json.dumps({"type": "stream", "data": stream.to_dict()},
                               sort_keys=True) + '\n')
    logger.info("[Artifacts] %d streams written to %s", len(streams), path)
    return file_sha256(path)


def load_streams(path: PathLike) -> Tuple[dict, List[TokenStream]]:
    """
    Returns:
        (metadata, streams)

    Raises:
        FileNotFoundError: missing file
        FormatError: malformed record
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Token stream file not found: {path}")
    metadata: dict = {}
    streams: List[TokenStream] = []
    with open(path, 'r', encoding='utf-8') as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                kind, data = record["type"], record["data"]
                if kind == "metadata":
                    metadata = data
                elif kind == "stream":
                    streams.append(TokenStream.from_dict(data))
                else:
                    raise FormatError(f"{path}:{lineno}: unknown record type {kind!r}")
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(f"{path}:{lineno}: malformed record ({exc})") from None
    return metadata, streams


def load_prompt(path: PathLike, index: int = 0) -> TokenStream:
    _, streams = load_streams(path)
    if not streams:
        raise ConfigurationError(f"{path} holds no prompt")
    if not 0 <= index < len(streams):
        raise ConfigurationError(f"prompt index {index} outside [0, {len(streams)})")
    return streams[index]


# ----------------------------------------------------------------------
# Alphas and run outputs
# ----------------------------------------------------------------------

def save_alphas(path: PathLike, alphas: Sequence[AlphaVector]) -> str:
    tensors = {}
    for alpha in sorted(alphas, key=lambda a: a.layer):
        tensors[f"{ALPHA_PREFIX}{alpha.layer}"] = alpha.alpha
        tensors[f"{FALLBACK_PREFIX}{alpha.layer}"] = alpha.fallback_mask.astype(np.float32)
    return write_tensors(path, tensors)


def load_alphas(path: PathLike) -> Dict[int, AlphaVector]:
    tensors = read_tensors(path)
    alphas = {}
    for name, tensor in tensors.items():
        if not name.startswith(ALPHA_PREFIX):
            continue
        try:
            layer = int(name[len(ALPHA_PREFIX):])
        except ValueError:
            raise FormatError(f"bad alpha tensor name {name!r}") from None
        fallback = tensors.get(f"{FALLBACK_PREFIX}{layer}")
        mask = fallback > 0.5 if fallback is not None else None
        alphas[layer] = AlphaVector(layer, tensor, fallback_mask=mask)
    return alphas


def save_run_output(path: PathLike, logits: Sequence[np.ndarray], tokens: Sequence[int]) -> str:
    return write_tensors(path, {
        "logits": np.stack([np.asarray(row, dtype=np.float32) for row in logits]),
        "tokens": np.asarray(tokens, dtype=np.float32),
    })


def load_run_output(path: PathLike) -> Tuple[np.ndarray, List[int]]:
    tensors = read_tensors(path)
    if "logits" not in tensors or "tokens" not in tensors:
        raise FormatError(f"{path} is not a run output")
    return tensors["logits"], [int(t) for t in tensors["tokens"]]
