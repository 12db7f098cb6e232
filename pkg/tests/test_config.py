import json
import os
import tempfile

import pytest
from hypothesis import given, strategies as st

from geomech import config
from geomech.config import ConfigError, RunConfig


def base(**kw):
    d = {"system": "central_force"}
    d.update(kw)
    return d


def test_defaults_filled_in():
    cfg = config.from_dict(base(), "simulate")
    assert cfg.integration.dt == 1e-3 and cfg.tolerances.noether == 1e-6
    assert cfg.mode == "simulate" and cfg.label == "central_force"


@pytest.mark.parametrize("data, match", [
    (base(foo=1), "unknown top-level"),
    (base(integration={"dt": 0.0}), "positive"),
    (base(integration={"dt": -1}), "positive"),
    (base(integration={"t0": 1.0, "t1": 1.0}), "must exceed"),
    (base(integration={"step": 1}), "unknown keys"),
    (base(system="pendulum"), "unknown builtin"),
    (base(system="aks_sl2"), "mode 'aks'"),
    (base(ic={"q": [1.0]}), "both q and v"),
    ({"system": {"dim": 2, "lagrangian": "v1^2"}}, "initial condition"),
    ({"system": {"dim": 2, "lagrangian": "v1^2", "force": ["0"]}, "ic": {"q": [0, 0], "v": [0, 0]}}, "force"),
    ({"system": {"dim": 2, "lagrangian": "v1^2"}, "ic": {"q": [0], "v": [0, 0]}}, "ic.q"),
    ({"system": {"dim": 0, "lagrangian": "1"}}, "dim"),
    (base(outputs={"diagnostics": ["entropy"]}), "diagnostic"),
    (base(symmetry={"group_indices": [2], "mu": [1, 2]}), "differ in length"),
    (base(symmetry={"mu": ["a"]}), "finite number"),
    (base(tolerances={"noether": 0}), "positive"),
    (base(samples=0), "samples"),
    (base(seed=1.5), "seed"),
    (base(aks={"gauge": "other"}), "gauge"),
    ([], "JSON object"),
])
def test_validation_errors(data, match):
    with pytest.raises(ConfigError, match=match):
        config.from_dict(data, "simulate")


def test_mode_conflict():
    with pytest.raises(ConfigError, match="conflicts"):
        config.from_dict(base(mode="reduce"), "simulate")
    assert config.from_dict(base(mode="reduce")).mode == "reduce"


def test_expression_reduce_needs_symmetry():
    data = {"system": {"dim": 2, "lagrangian": "v1^2"}, "ic": {"q": [0, 0], "v": [0, 0]}}
    with pytest.raises(ConfigError, match="group_indices"):
        config.from_dict(data, "reduce")


def test_effective_overrides():
    cfg = config.from_dict(base(), "check")
    eff = config.effective(cfg, dt=0.01, env={config.SEED_ENV: "42"})
    assert eff.integration.dt == 0.01 and eff.seed == 42
    assert config.effective(cfg, env={}) == cfg
    with pytest.raises(ConfigError):
        config.effective(cfg, env={config.SEED_ENV: "x"})
    with pytest.raises(ConfigError):
        config.effective(cfg, dt=-1.0, env={})


def test_load_single_and_sweep(tmp_path):
    one = tmp_path / "one.json"
    one.write_text(json.dumps(base()))
    assert len(config.load(str(one), "simulate")) == 1
    many = tmp_path / "many.json"
    many.write_text(json.dumps([base(), base(system="harmonic")]))
    assert [c.system for c in config.load(str(many), "simulate")] == ["central_force", "harmonic"]
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        config.load(str(bad))
    with pytest.raises(ConfigError, match="cannot read"):
        config.load(str(tmp_path / "missing.json"))


finite = st.floats(-10, 10, allow_nan=False)
positive = st.floats(1e-6, 1.0)


@st.composite
def configs(draw):
    expr = draw(st.booleans())
    if expr:
        system = {"dim": 2, "lagrangian": "0.5*(v1^2+v2^2) - k*q1^2", "params": {"k": draw(finite)}}
        data = {"system": system, "ic": {"q": draw(st.lists(finite, min_size=2, max_size=2)),
                                          "v": draw(st.lists(finite, min_size=2, max_size=2))},
                "symmetry": {"group_indices": [2], "mu": [draw(finite)]}}
    else:
        data = {"system": draw(st.sampled_from(["central_force", "magnetic_kk", "harmonic"]))}
    t0 = draw(finite)
    data["integration"] = {"t0": t0, "t1": t0 + draw(st.floats(0.1, 5)), "dt": draw(positive)}
    data["tolerances"] = {"noether": draw(positive)}
    data["seed"] = draw(st.integers(0, 1000))
    data["outputs"] = {"diagnostics": draw(st.lists(st.sampled_from(["energy", "J"]), unique=True))}
    return config.from_dict(data, draw(st.sampled_from(["simulate", "check", "compare"])))


@given(configs())
def test_roundtrip(cfg):
    again = config.from_dict(json.loads(json.dumps(config.to_dict(cfg))), cfg.mode)
    assert again == cfg
    assert isinstance(again, RunConfig)


@given(configs())
def test_dump_and_load(cfg):
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "c.json")
        config.dump(cfg, path)
        assert config.load(path, cfg.mode) == [cfg]
