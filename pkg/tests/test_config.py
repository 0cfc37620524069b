import math

import pytest
from hypothesis import given, settings, strategies as st

from chaoslab.config import DEFAULTS, ExperimentConfig, dump_config, load_config, parse_config
from chaoslab.errors import ConfigError
from chaoslab.kernels import KernelSpec


def test_minimal_config_fills_defaults_and_round_trips():
    cfg = parse_config('beta = 2.0\n[kernel]\nfamily = "log"\n')
    assert cfg.beta == 2.0
    assert cfg["grid"] == DEFAULTS["grid"]
    again = parse_config(dump_config(cfg))
    assert again.data == cfg.data
    assert dump_config(again) == dump_config(cfg)


def test_empty_config_is_all_defaults():
    assert parse_config("").data == DEFAULTS


def test_riesz_exponent_precondition():
    with pytest.raises(ConfigError) as info:
        parse_config('[kernel]\nfamily = "riesz"\ns = 1.5\nd = 1\n')
    assert any(e.startswith("kernel.s") for e in info.value.errors)


def test_beta_zero_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config("beta = 0.0\n")
    assert info.value.errors[0].startswith("beta")


def test_all_errors_reported_together():
    text = 'beta = -1.0\nbogus = 3\n[dynamics]\ndt = "fast"\n[grid]\nn_cells = 2\n'
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    paths = {e.split(":")[0] for e in info.value.errors}
    assert {"beta", "bogus", "dynamics.dt", "grid.n_cells"} <= paths
    assert info.value.exit_code == 2


def test_type_errors_are_not_reported_twice():
    with pytest.raises(ConfigError) as info:
        parse_config('[dynamics]\ndt = "fast"\n')
    assert [e.split(":")[0] for e in info.value.errors] == ["dynamics.dt"]


def test_snapshot_cadence_must_be_multiple_of_dt():
    with pytest.raises(ConfigError):
        parse_config("[dynamics]\ndt = 0.03\nsnapshot_dt = 0.1\n")


def test_malformed_toml_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config("beta = = 1")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


def test_accessors():
    cfg = parse_config('[kernel]\nfamily = "smooth"\ntable = "cosine"\nscale = 2.0\n')
    assert cfg.kernel == KernelSpec.smooth("cosine", 1.0, 2.0)
    assert cfg.grid.n_cells == DEFAULTS["grid"]["n_cells"]
    assert cfg.with_seed(17)["ensemble"]["master_seed"] == 17
    assert cfg["ensemble"]["master_seed"] == 0


@pytest.mark.parametrize("name", ["equilibrium", "meanfield", "particles", "diagnose", "liouville", "chaos_report"])
def test_shipped_configs_parse(name):
    from pathlib import Path

    cfg = load_config(Path(__file__).parent.parent / "configs" / f"{name}.toml")
    assert math.isfinite(cfg.beta)


@settings(max_examples=50, deadline=None)
@given(beta=st.floats(1e-3, 1e3), n=st.integers(8, 4096), dt=st.floats(1e-4, 1.0), seed=st.integers(0, 2**63))
def test_round_trip_property(beta, n, dt, seed):
    text = f"beta = {beta!r}\n[grid]\nn_cells = {n}\n[dynamics]\ndt = {dt!r}\nsnapshot_dt = {dt!r}\n[ensemble]\nmaster_seed = {seed}\n"
    cfg = parse_config(text)
    assert parse_config(cfg.to_toml()).data == cfg.data
