"""Run-config parsing, validation, and key overrides."""

import json

import pytest

from gatdst.config import GraphConfig, apply_override, config_from_obj, load_config
from gatdst.errors import ConfigError


class TestGraphConfig:
    def test_nograph_forces_zero_dims(self):
        with pytest.raises(ConfigError, match="NoGraph"):
            GraphConfig(graph_type="NoGraph", layers=1, heads=1, hops=1).validate()

    def test_graph_types_require_positive_dims(self):
        with pytest.raises(ConfigError, match="DSVGraph"):
            GraphConfig(graph_type="DSVGraph", layers=1, heads=0, hops=2).validate()

    def test_unknown_graph_type(self):
        with pytest.raises(ConfigError, match="graph_type"):
            GraphConfig(graph_type="HyperGraph").validate()

    def test_config_name_derivation(self):
        g = GraphConfig(graph_type="DSGraph", layers=4, heads=4, hops=2)
        assert g.name == "L4P4K2-DSGraph"
        assert GraphConfig().name == "L0P0K0-NoGraph"


class TestConfigParsing:
    def test_defaults_validate(self):
        config = config_from_obj({})
        assert config.graph.name == "L0P0K0-NoGraph"
        assert config.training.regime == "full"

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="sections"):
            config_from_obj({"modle": {}})

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="hidden_sizes"):
            config_from_obj({"model": {"hidden_sizes": 32}})

    def test_bad_regime_rejected(self):
        with pytest.raises(ConfigError, match="regime"):
            config_from_obj({"training": {"regime": "weekly"}})

    def test_synth_pools_from_json_lists(self):
        config = config_from_obj(
            {"synth": {"shared_pools": {"pricerange": ["cheap", "expensive"]},
                       "correlated_types": ["pricerange"],
                       "slots_per_domain": 2}}
        )
        assert config.synth.shared_pools["pricerange"] == ("cheap", "expensive")
        assert config.synth.slot_types() == ("pricerange", "name")


class TestOverrides:
    def test_json_value_parsing(self):
        obj = apply_override({}, "training.epochs=12")
        assert obj["training"]["epochs"] == 12
        obj = apply_override(obj, "graph.graph_type=DSGraph")
        assert obj["graph"]["graph_type"] == "DSGraph"

    def test_bad_override_shapes(self):
        with pytest.raises(ConfigError):
            apply_override({}, "no-equals-sign")
        with pytest.raises(ConfigError):
            apply_override({}, "toodeep.key.sub=1")
        with pytest.raises(ConfigError):
            apply_override({}, "nosection.key=1")

    def test_override_does_not_mutate_input(self):
        base = {"training": {"epochs": 1}}
        apply_override(base, "training.epochs=9")
        assert base["training"]["epochs"] == 1

    def test_load_with_overrides(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"training": {"epochs": 2}}))
        config = load_config(path, ["training.epochs=7", "training.seed=3"])
        assert config.training.epochs == 7
        assert config.training.seed == 3
