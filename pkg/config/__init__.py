"""
Configuration management package

Provides the model architecture config and the run manifest of the harness.
"""

from .model_config import ModelConfig

from .pipeline import (
    RunManifest,
    PipelineConfig,
    DataConfig,
    ProfileConfig,
    CalibrationConfig,
    PruningConfig,
    DivergenceConfig,
    SinkConfig,
    parse_protected,
)

from .config_loader import (
    ConfigLoader,
    load_model_config,
    save_model_config,
    load_manifest,
    save_manifest,
)

__all__ = [
    # Model
    'ModelConfig',

    # Pipeline
    'RunManifest',
    'PipelineConfig',
    'DataConfig',
    'ProfileConfig',
    'CalibrationConfig',
    'PruningConfig',
    'DivergenceConfig',
    'SinkConfig',
    'parse_protected',

    # Loader
    'ConfigLoader',
    'load_model_config',
    'save_model_config',
    'load_manifest',
    'save_manifest',
]
