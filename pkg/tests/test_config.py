import pytest

from hetero_esn.config import (
    ExperimentConfig,
    parse_config_text,
    parse_override,
    parse_value,
    read_config_file,
    split_config,
)
from hetero_esn.errors import ConfigError


def test_parse_values():
    assert parse_value("3") == 3
    assert parse_value("1e-4") == 1e-4
    assert parse_value("[1, 3, 5]") == [1, 3, 5]
    assert parse_value("true") is True
    assert parse_value("hetero_deep") == "hetero_deep"
    assert parse_value("none") is None


def test_parse_text_and_comments():
    flat = parse_config_text("# header\nmodel.variant = deep  # trailing\n\nmodel.layers = 3\n")
    assert flat == {"model.variant": "deep", "model.layers": 3}


@pytest.mark.parametrize("text", ["novalue =", "= 3", "justtext", "a = 1\na = 2"])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_read_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "nope.cfg")


def test_override():
    assert parse_override("layer.size=2000") == ("layer.size", 2000)
    with pytest.raises(ConfigError):
        parse_override("layer.size")


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.variant == "shallow" and cfg.size == 500
    assert cfg.spectral_radius == 0.3 and cfg.leak_rate == 0.5
    assert cfg.context_width == 14 and cfg.center == 7
    assert cfg.n_inputs() == 252
    assert cfg.effective_bias_scale == 0.0
    assert ExperimentConfig(variant="deep", n_layers=3).effective_bias_scale == 0.1


def test_hetero_defaults():
    assert ExperimentConfig(variant="hetero_shallow").effective_delays == (1, 3, 5)
    assert ExperimentConfig(variant="hetero_deep", n_layers=3).effective_delays == (1, 3, 5)
    p = ExperimentConfig(variant="hetero_shallow", size=500).partition()
    assert p.group_sizes == (167, 167, 166)


@pytest.mark.parametrize("kwargs", [
    dict(variant="nope"), dict(n_seeds=0), dict(n_classes=1), dict(variant="shallow", n_layers=2),
    dict(variant="hetero_deep", n_layers=2, delays=(1, 2, 3)), dict(group_sizes=(100, 100)),
    dict(leak_rate=0.0), dict(spectral_radius=-1.0), dict(context_width=0), dict(gamma=-1.0),
    dict(frame_ms=10.0, overlap_ms=12.5),
])
def test_invalid(kwargs):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kwargs)


def test_with_keys_and_split():
    flat = {"model.variant": "hetero_deep", "model.layers": 3, "model.delays": [1, 3, 5],
            "layer.size": 100, "data.train_n": 70, "grid.layer.rho": [0.3, 0.5]}
    cfg, data, grid = split_config(flat)
    assert cfg.variant == "hetero_deep" and cfg.delays == (1, 3, 5) and cfg.size == 100
    assert data == {"data.train_n": 70}
    assert grid == {"layer.rho": [0.3, 0.5]}
    with pytest.raises(ConfigError):
        ExperimentConfig().with_keys({"layer.bogus": 1})
    with pytest.raises(ConfigError):
        ExperimentConfig().with_keys({"layer.size": "big"})
    with pytest.raises(ConfigError):
        split_config({"grid.nope": [1]})


def test_flat_roundtrip():
    cfg = ExperimentConfig(variant="hetero_shallow", delays=(0, 2, 4), size=30)
    flat = cfg.to_flat()
    assert flat["model.delays"] == "0;2;4"
    assert flat["layer.size"] == 30


def test_build_reservoir_deterministic():
    cfg = ExperimentConfig(variant="deep", n_layers=2, size=20)
    a, b = cfg.build_reservoir(3, n_in=4), cfg.build_reservoir(3, n_in=4)
    for la, lb in zip(a.layers, b.layers):
        assert (la.weights.W != lb.weights.W).nnz == 0
    c = cfg.build_reservoir(4, n_in=4)
    assert (a.layers[0].weights.W != c.layers[0].weights.W).nnz > 0
