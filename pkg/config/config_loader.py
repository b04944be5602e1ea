"""
Configuration loader utility

Loads ModelConfig from structured text files and RunManifest from YAML files.
"""

import yaml
from pathlib import Path
from typing import Union

from engine.errors import ConfigurationError

from .model_config import ModelConfig
from .pipeline import RunManifest


class ConfigLoader:
    """Utility class for loading configuration files"""

    @staticmethod
    def load_model_config(file_path: Union[str, Path]) -> ModelConfig:
        """
        Load ModelConfig from a `key = value` text file

        Raises:
            FileNotFoundError: If file doesn't exist
            ConfigurationError: If parsing or validation fails
        """
        file_path = Path(file_path)

        if not file_path.exists():
            raise FileNotFoundError(f"Config file not found: {file_path}")

        with open(file_path, 'r', encoding='utf-8') as f:
            return ModelConfig.from_text(f.read())

    @staticmethod
    def save_model_config(config: ModelConfig, file_path: Union[str, Path]):
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)

        with open(file_path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(config.to_text())

    @staticmethod
    def load_manifest(file_path: Union[str, Path]) -> RunManifest:
        """
        Load RunManifest from YAML file

        Raises:
            FileNotFoundError: If file doesn't exist
            ConfigurationError: If the YAML is malformed or validation fails
        """
        file_path = Path(file_path)

        if not file_path.exists():
            raise FileNotFoundError(f"Manifest not found: {file_path}")

        with open(file_path, 'r', encoding='utf-8') as f:
            try:
                data = yaml.safe_load(f)
            except yaml.YAMLError as exc:
                raise ConfigurationError(f"{file_path}: invalid YAML: {exc}") from None

        if not isinstance(data, dict):
            raise ConfigurationError(f"{file_path}: manifest must be a mapping")

        return RunManifest.from_dict(data)

    @staticmethod
    def save_manifest(manifest: RunManifest, file_path: Union[str, Path]):
        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)

        data = manifest.to_dict()

        with open(file_path, 'w', encoding='utf-8', newline='\n') as f:
            yaml.dump(data, f, default_flow_style=False, sort_keys=False, allow_unicode=True)


# Convenience functions
def load_model_config(file_path: Union[str, Path]) -> ModelConfig:
    """Load ModelConfig from text file"""
    return ConfigLoader.load_model_config(file_path)


def save_model_config(config: ModelConfig, file_path: Union[str, Path]):
    """Save ModelConfig to text file"""
    ConfigLoader.save_model_config(config, file_path)


def load_manifest(file_path: Union[str, Path]) -> RunManifest:
    """Load RunManifest from YAML file"""
    return ConfigLoader.load_manifest(file_path)


def save_manifest(manifest: RunManifest, file_path: Union[str, Path]):
    """Save RunManifest to YAML file"""
    ConfigLoader.save_manifest(manifest, file_path)
