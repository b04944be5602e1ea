"""
Model config text form and the YAML run manifest
"""

from pathlib import Path

import pytest

from config import (
    ConfigLoader,
    PipelineConfig,
    PruningConfig,
    RunManifest,
    SinkConfig,
    load_manifest,
    load_model_config,
    parse_protected,
    save_manifest,
    save_model_config,
)
from config.model_config import ModelConfig
from engine.errors import ConfigurationError


class TestModelConfig:

    def test_text_form(self):
        text = ModelConfig(n_layers=2, seed=5).to_text()
        assert text.splitlines()[:2] == ["n_layers = 2", "d_model = 64"]
        assert "norm_eps = 1e-06" in text
        assert ModelConfig.from_text(text) == ModelConfig(n_layers=2, seed=5)

    def test_hash_follows_content(self):
        assert ModelConfig(seed=1).config_hash() == ModelConfig(seed=1).config_hash()
        assert ModelConfig(seed=1).config_hash() != ModelConfig(seed=2).config_hash()
        assert len(ModelConfig().config_hash()) == 64

    def test_comments_and_blank_lines(self):
        config = ModelConfig.from_text("# toy\n\nn_layers = 3\nnorm_eps = 1e-5\n")
        assert config.n_layers == 3
        assert config.norm_eps == 1e-5

    @pytest.mark.parametrize("text", [
        "n_layers 3",
        "depth = 3",
        "n_layers = three",
        "reindex_positions = false",
        "norm_eps = tiny",
        "d_model = 63\nn_heads = 4",
        "n_layers = 0",
    ])
    def test_rejected_text(self, text):
        with pytest.raises(ConfigurationError):
            ModelConfig.from_text(text)

    def test_seed_range(self):
        with pytest.raises(ConfigurationError):
            ModelConfig(seed=-1)

    def test_file_round_trip(self, tmp_path):
        config = ModelConfig(n_layers=3, d_model=32, n_heads=2)
        save_model_config(config, tmp_path / "cfg" / "config.txt")
        assert load_model_config(tmp_path / "cfg" / "config.txt") == config

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ConfigLoader.load_model_config(tmp_path / "absent.txt")


class TestParseProtected:

    @pytest.mark.parametrize("spec,expected", [
        ("first:2,last:1", {0, 1, 7}),
        ("0,3", {0, 3}),
        ("none", set()),
        ("first:20", set(range(8))),
        ("9", set()),
    ])
    def test_known_values(self, spec, expected):
        assert parse_protected(spec, 8) == expected

    def test_bad_entry(self):
        with pytest.raises(ConfigurationError):
            parse_protected("first:x", 8)


class TestPipelineConfig:

    def test_decode_pruning_needs_step(self):
        with pytest.raises(ConfigurationError):
            PruningConfig(prune_stage="decode", prune_step=0)

    def test_prefill_pruning_takes_step_zero(self):
        with pytest.raises(ConfigurationError):
            PruningConfig(prune_step=3)

    def test_keep_ratio_range(self):
        with pytest.raises(ConfigurationError):
            PruningConfig(keep_ratio=0.0)

    def test_sink_split(self):
        assert SinkConfig(c_split="0.5").c_split == 0.5
        with pytest.raises(ConfigurationError):
            SinkConfig(c_split="mean")

    def test_vanilla_default(self):
        assert PipelineConfig().is_vanilla
        assert not PipelineConfig(pruning=PruningConfig()).is_vanilla

    def test_dict_form(self):
        pipeline = PipelineConfig(pruning=PruningConfig(keep_ratio=0.5), approximate=True,
                                  approximated_layers=[2, 3])
        rebuilt = PipelineConfig.from_dict(pipeline.to_dict())
        assert rebuilt == pipeline


class TestManifest:

    def test_yaml_round_trip(self, tmp_path):
        manifest = RunManifest("m/config.txt", "m/weights.capt", "out", seed=4,
                               pipeline=PipelineConfig(pruning=PruningConfig(prune_layer=1)))
        save_manifest(manifest, tmp_path / "run.yaml")
        assert load_manifest(tmp_path / "run.yaml") == manifest

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError, match="unknown manifest keys"):
            RunManifest.from_dict({"run": {"config_path": "a", "weights_path": "b",
                                           "output_dir": "c", "colour": "red"}})

    def test_missing_key(self):
        with pytest.raises(ConfigurationError):
            RunManifest.from_dict({"run": {"config_path": "a", "weights_path": "b"}})

    def test_bad_section(self):
        with pytest.raises(ConfigurationError):
            RunManifest.from_dict({"run": {"config_path": "a", "weights_path": "b",
                                           "output_dir": "c",
                                           "pipeline": {"pruning": {"ratio": 0.5}}}})

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigurationError):
            load_manifest(path)

    def test_check_paths(self, tmp_path):
        manifest = RunManifest(str(tmp_path / "none.txt"), str(tmp_path / "none.capt"), "out")
        with pytest.raises(ConfigurationError, match="config_path"):
            manifest.check_paths()

    def test_shipped_scenarios_load(self):
        root = Path(__file__).resolve().parents[2] / "scenarios" / "pipeline"
        manifests = sorted(root.glob("*.yaml"))
        assert manifests
        for path in manifests:
            assert isinstance(load_manifest(path), RunManifest)
