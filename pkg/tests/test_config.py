import numpy as np
import pytest
import yaml

from masecure.config import DEFAULTS, dbm_to_watt, default_config, load_config, watt_to_dbm
from masecure.exceptions import ConfigError
from masecure.geometry import wavelength


def _write(tmp_path, name, tree):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(tree))
    return p


def test_defaults():
    cfg, geo = default_config()
    assert geo.frequency == pytest.approx(15e9)
    assert (cfg.K, cfg.M, cfg.N, cfg.N_a, cfg.N_k, cfg.N_e) == (2, 625, 600, 50, 4, 4)
    assert cfg.P0 == pytest.approx(1.0) and cfg.P_ris == pytest.approx(0.01)
    assert cfg.sigma2_bob == pytest.approx(1e-9) and cfg.sigma2_ris == pytest.approx(1e-10)
    assert cfg.d_min == pytest.approx(wavelength(15e9) / 2) and cfg.d == cfg.d_min
    assert cfg.eps_bob_direct == cfg.eps_bob and cfg.eps_eve_direct == cfg.eps_eve
    assert cfg.xi2 == 1.0 and cfg.tol == 1e-3 and cfg.max_iter == 50


def test_dbm_conversion():
    assert dbm_to_watt(30) == pytest.approx(1.0)
    assert dbm_to_watt(0) == pytest.approx(1e-3)
    assert dbm_to_watt(-60) == pytest.approx(1e-9)
    for x in (-70.0, 10.0, 42.5):
        assert watt_to_dbm(dbm_to_watt(x)) == pytest.approx(x)


def test_missing_keys_fall_back(tmp_path):
    cfg, _ = load_config(_write(tmp_path, "a.yaml", {"system": {"N_a": 8}}))
    assert cfg.N_a == 8 and cfg.xi2 == 1.0 and cfg.n0 == DEFAULTS["system"]["n0"]


def test_base_include_and_overrides(tmp_path):
    _write(tmp_path, "base.yaml", {"system": {"N_a": 8, "P0_dBm": 20},
                                   "geometry": {"grid_dims": [4, 6], "ris_dims": [4, 4],
                                                "min_ris_aperture": 0}})
    child = _write(tmp_path, "child.yaml", {"base": "base.yaml", "system": {"N_a": 6}})
    cfg, geo = load_config(child)
    assert cfg.N_a == 6 and cfg.P0 == pytest.approx(0.1) and geo.grid_dims == (4, 6)
    cfg, _ = load_config(child, {"system": {"mu_t": 0.0}})
    assert cfg.mu_t == 0.0 and cfg.N_a == 6


def test_include_cycle(tmp_path):
    _write(tmp_path, "a.yaml", {"base": "b.yaml"})
    _write(tmp_path, "b.yaml", {"base": "a.yaml"})
    with pytest.raises(ConfigError, match="cycle"):
        load_config(tmp_path / "a.yaml")


@pytest.mark.parametrize("tree, path", [
    ({"system": {"bogus": 1}}, "system.bogus"),
    ({"extra": {}}, "extra"),
    ({"system": {"N_a": "many"}}, "system.N_a"),
    ({"system": {"N_a": 1}}, "N_a"),
    ({"system": {"N_a": 10_000}}, "N_a"),
    ({"system": {"ris_mode": "magic"}}, "ris_mode"),
    ({"system": {"mu_t": -0.1}}, "mu_t"),
    ({"system": {"d": 1e-4}}, "d"),
    ({"geometry": {"grid_dims": [0, 5]}}, "geometry.grid_dims"),
    ({"geometry": {"eve_position": [1, 2]}}, "geometry.eve_position"),
    ({"geometry": {"frequency_GHz": -1}}, "geometry.frequency_GHz"),
])
def test_schema_violations_name_the_field(tmp_path, tree, path):
    with pytest.raises(ConfigError) as exc:
        load_config(_write(tmp_path, "bad.yaml", tree))
    assert exc.value.path == path and str(exc.value).startswith(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


def test_infinite_tolerance(tmp_path):
    cfg, _ = load_config(_write(tmp_path, "a.yaml", {"system": {"tol": ".inf", "N_a": 8}}))
    assert np.isinf(cfg.tol)


def test_shipped_scenarios_load():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1] / "scenarios"
    for p in sorted(root.glob("*.yaml")):
        cfg, geo = load_config(p)
        assert cfg.N == geo.N and cfg.M == geo.M
