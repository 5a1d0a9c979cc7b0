import json
import shutil
from pathlib import Path

import pytest
import yaml
from hypothesis import given, settings, strategies as st

from rankdiff import cli, config
from rankdiff.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
ATLAS3 = CONFIGS / "atlas3.yaml"
LINEAR2 = CONFIGS / "linear2.yaml"

# small runs so the whole command matrix finishes in seconds
FAST = {
    "simulate": ["simulation.t_end=2", "simulation.record_every=0.5"],
    "stability": [],
    "pde": ["grid.nx=400", "grid.t_end=0.5"],
    "wave": ["grid.nx=400", "wave.horizon=1", "wave.table_points=21"],
    "capital": ["simulation.n=200", "simulation.t_end=2", "simulation.record_every=0.5"],
}


def test_defaults_and_round_trip():
    cfg = config.load(LINEAR2)
    assert cfg["simulation"]["dt"] == 1e-3 and isinstance(cfg["simulation"]["dt"], float)
    assert cfg["grid"]["theta"] == "auto"
    assert config.parse(config.dump(cfg)) == cfg


@given(
    st.integers(0, 2**63),
    st.floats(1e-5, 1e-1),
    st.integers(2, 5000),
    st.sampled_from(["sorted", "quantiles"]),
)
@settings(max_examples=50, deadline=None)
def test_round_trip_property(seed, dt, nx, snap):
    raw = {
        "schema_version": 1,
        "seed": seed,
        "profile": {"kind": "linear", "kappa": "1.5"},
        "simulation": {"dt": dt, "snapshot": snap},
        "grid": {"nx": nx},
    }
    cfg = config.resolve(raw)
    assert config.parse(config.dump(cfg)) == cfg


@pytest.mark.parametrize(
    "raw,path",
    [
        ({"schema_version": 1, "profile": {"kind": "atlas", "n": 3}, "simulaton": {}}, "simulaton"),
        ({"schema_version": 1, "profile": {"kind": "atlas", "n": 3}, "grid": {"nx": 10, "dx": 1}}, "grid.dx"),
        ({"schema_version": 1, "profile": {"kind": "atlas", "n": 0}}, "profile.n"),
        ({"schema_version": 1, "profile": {"kind": "atlas"}, "simulation": {"dt": -1}}, "simulation.dt"),
        ({"profile": {"kind": "atlas", "n": 3}}, "schema_version"),
        ({"schema_version": 2, "profile": {"kind": "atlas", "n": 3}}, "schema_version"),
    ],
)
def test_validation_names_key_path(raw, path):
    with pytest.raises(ConfigError) as info:
        config.resolve(raw)
    assert info.value.key_path == path


def test_overrides_and_seed():
    cfg = config.load(ATLAS3, ["grid.nx=4000", "simulation.dt=5e-4", "profile.gamma=2"], seed=7)
    assert cfg["grid"]["nx"] == 4000 and cfg["simulation"]["dt"] == 5e-4
    assert cfg["profile"]["gamma"] == 2 and cfg["seed"] == 7
    with pytest.raises(ConfigError):
        config.load(ATLAS3, ["grid.nx"])
    with pytest.raises(ConfigError) as info:
        config.load(ATLAS3, ["grid.nx=many"])
    assert info.value.key_path == "grid.nx"


def test_schema_is_valid_json():
    s = json.loads(config.schema_json())
    assert s["additionalProperties"] is False


def test_stability_command(tmp_path):
    paths = cli.run("stability", ATLAS3, tmp_path)
    head, *rest = paths["stability.jsonl"].read_text().splitlines()
    head = json.loads(head)
    assert head["globally_stable"] is True
    assert head["margins"] == [2.0, 1.0]
    assert head["gap_rates"] == [4.0, 2.0]
    assert head["gap_means"] == [0.25, 0.5]
    assert rest


def test_capital_command(tmp_path):
    paths = cli.run("capital", LINEAR2, tmp_path, ["capital.simulate=false"])
    text = paths["phase.txt"].read_text()
    assert "label=Dilute" in text and "theoretical_slope=-0.5" in text
    rows = paths["stationary_density.csv"].read_text().splitlines()
    assert rows[0].split(",") == ["v", "density"] and len(rows) == 100


def test_capital_command_other_phases(tmp_path):
    agg = cli.run("capital", LINEAR2, tmp_path / "a", ["capital.simulate=false", "profile.drift=0.5"])
    assert "label=Aggregated" in agg["phase.txt"].read_text()
    crit = cli.run(
        "capital", LINEAR2, tmp_path / "c", ["capital.simulate=false", "profile.kind=linear", "profile.kappa=1"]
    )
    assert "label=Critical" in crit["phase.txt"].read_text()
    assert "critical_diagnostic.csv" in crit


@pytest.mark.parametrize("command", list(FAST))
def test_commands_are_deterministic_and_replayable(tmp_path, command):
    src = ATLAS3 if command in ("simulate", "stability") else LINEAR2
    a = cli.run(command, src, tmp_path / "a", FAST[command])
    b = cli.run(command, src, tmp_path / "b", FAST[command])
    assert sorted(a) == sorted(b)
    for name in a:
        assert a[name].read_bytes() == b[name].read_bytes(), name
    # the provenance sidecar alone regenerates everything
    prov = tmp_path / "prov.yaml"
    shutil.copy(a["provenance.yaml"], prov)
    c = cli.run(command, prov, tmp_path / "c")
    for name in a:
        assert a[name].read_bytes() == c[name].read_bytes(), name
    assert yaml.safe_load(a["provenance.yaml"].read_text())["command"] == command


def test_seed_changes_simulation(tmp_path):
    a = cli.run("simulate", ATLAS3, tmp_path / "a", FAST["simulate"], seed=1)
    b = cli.run("simulate", ATLAS3, tmp_path / "b", FAST["simulate"], seed=2)
    assert a["snapshots.csv"].read_bytes() != b["snapshots.csv"].read_bytes()
    assert yaml.safe_load(b["provenance.yaml"].read_text())["seed"] == 2


def test_main_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("schema_version: 1\nprofile: {kind: atlas, n: 3}\ngrid: {bogus: 1}\n")
    assert cli.main(["stability", "--config", str(bad), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "grid.bogus" in capsys.readouterr().err
    # a Gaussian on [-1, 1] leaks through the boundary
    code = cli.main(
        ["pde", "--config", str(LINEAR2), "--out", str(tmp_path), "--set", "grid.nx=100", "--set", "grid.x_min=-1",
         "--set", "grid.x_max=1"]
    )
    assert code == cli.EXIT_NUMERIC
    assert "Error" in capsys.readouterr().err
    assert cli.main(["stability", "--config", str(ATLAS3), "--out", str(tmp_path / "ok")]) == 0


def test_command_mismatch_rejected(tmp_path):
    prov = cli.run("stability", ATLAS3, tmp_path)["provenance.yaml"]
    with pytest.raises(ConfigError) as info:
        cli.run("simulate", prov, tmp_path / "x")
    assert info.value.key_path == "command"
