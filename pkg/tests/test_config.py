import json

import numpy as np
import pytest

from multidefault import config as cfgmod
from multidefault.errors import ModelError
from multidefault.fixtures import FIXTURES, fixture_config


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_fixture_configs_round_trip_through_json(name, tmp_path):
    cfg = fixture_config(name)
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    loaded, model, scheme = cfgmod.load(str(path))
    assert cfgmod.config_hash(loaded) == cfgmod.config_hash(cfg)
    _, direct, _ = cfgmod.load(name)
    if model.is_grid:
        np.testing.assert_array_equal(model.eta, direct.eta)
    else:
        pts = np.linspace(0.1, 5.0, 2 * direct.dim).reshape(2, direct.dim)
        np.testing.assert_array_equal(model.alpha_at(0, pts), direct.alpha_at(0, pts))
    assert scheme is not None and model.n == direct.n


def test_hash_ignores_key_order():
    a = {"n": 1, "alpha": {"family": "x"}}
    b = {"alpha": {"family": "x"}, "n": 1}
    assert cfgmod.config_hash(a) == cfgmod.config_hash(b)
    assert cfgmod.config_hash(a) != cfgmod.config_hash({**a, "n": 2})
    assert len(cfgmod.config_hash(a)) == 64


def test_fixture_hash_is_stable():
    assert cfgmod.config_hash(fixture_config("fixtureC")) == cfgmod.config_hash(fixture_config("fixtureC"))


def test_missing_file_and_bad_json(tmp_path):
    with pytest.raises(ModelError, match="not found"):
        cfgmod.load_config(str(tmp_path / "absent.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ModelError, match="cannot parse"):
        cfgmod.load_config(str(bad))
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]")
    with pytest.raises(ModelError, match="object"):
        cfgmod.load_config(str(arr))


def test_bad_sections():
    base = fixture_config("fixtureA")
    with pytest.raises(ModelError, match="missing config field"):
        cfgmod.build_model({k: v for k, v in base.items() if k != "alpha"})
    with pytest.raises(ModelError, match="reference kind"):
        cfgmod.build_model({**base, "reference": {"kind": "sphere"}})
    with pytest.raises(ModelError, match="unknown reference fields"):
        cfgmod.build_model({**base, "reference": {**base["reference"], "colour": 1}})
    with pytest.raises(ModelError, match="unknown alpha family"):
        cfgmod.build_model({**base, "alpha": {"family": "nope"}})
    with pytest.raises(ModelError, match="tree kind"):
        cfgmod.build_model({**base, "tree": {"kind": "forest"}})


def test_scheme_forms():
    assert cfgmod.build_scheme("initial").kind == "initial"
    s = cfgmod.build_scheme({"kind": "insider", "t0": 1.5})
    assert s.kind == "insider" and s.t0 == 1.5
