"""Command-line entry point.

    python -m rankdiff <command> --config FILE [--seed N] [--out DIR] [--set key=value ...]

Commands: simulate, stability, pde, wave, capital. Every run writes its
tables atomically into ``--out`` together with ``provenance.yaml``, the fully
resolved configuration, which can be passed back as ``--config``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .capital import (
    CURVE_HEADER,
    classify_phase,
    critical_diagnostic,
    loglog_slope,
    mean_capital_curve,
    stationary_capital_density,
)
from .coefficients import (
    CoefficientProfile,
    MeanFieldProfile,
    _as_number,
    discretize_meanfield,
    make_atlas,
    smoothed_atlas_profile,
)
from .errors import ConfigError, RankDiffError
from .io import atomic_write_text, fmt, format_table
from .laws import Gaussian, Law, Mixture, PointMass, Shifted, Uniform
from .meanfield_pde import evolve, grid_mean, init_grid
from .simulator import SimConfig, empirical_quantile, exponential_sup_distance, gap_samples, simulate
from .stability import check_global_stability, classify_long_time, stationary_gap_law
from .waves import check_oleinik, stability_experiment, wave_profile

COMMANDS = ("simulate", "stability", "pde", "wave", "capital")
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
_DISCRETE = ("atlas", "discrete")
SNAPSHOT_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def _times(t_end: float, every: float) -> list:
    k = int(math.floor(t_end / every + 1e-9))
    out = [j * every for j in range(k + 1)]
    if t_end - out[-1] > 1e-9 * max(1.0, t_end):
        out.append(t_end)
    return out


def meanfield_profile(cfg: dict) -> MeanFieldProfile:
    p = cfg["profile"]
    kind = p["kind"]
    try:
        if kind == "meanfield":
            if "drift" not in p:
                raise ConfigError("required key is missing", "profile.drift")
            return MeanFieldProfile.from_knots(p["drift"], p.get("sigma2", 1))
        if kind == "linear":
            if "kappa" not in p:
                raise ConfigError("required key is missing", "profile.kappa")
            return MeanFieldProfile.linear_decreasing(_as_number(p["kappa"]), _as_number(p.get("sigma2", 1)))
        if kind == "smoothed_atlas":
            for key in ("gamma", "width"):
                if key not in p:
                    raise ConfigError("required key is missing", f"profile.{key}")
            return smoothed_atlas_profile(float(_as_number(p["gamma"])), p["width"], float(_as_number(p.get("sigma2", 1))))
    except (ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), "profile") from None
    raise ConfigError(f"command needs a mean-field profile, not {kind!r}", "profile.kind")


def coefficient_profile(cfg: dict) -> CoefficientProfile:
    p = cfg["profile"]
    n_sim = cfg["simulation"]["n"]
    try:
        if p["kind"] == "atlas":
            if "n" not in p or "gamma" not in p:
                raise ConfigError("required key is missing", "profile.n" if "n" not in p else "profile.gamma")
            c = make_atlas(p["n"], _as_number(p["gamma"]))
        elif p["kind"] == "discrete":
            if "drifts" not in p:
                raise ConfigError("required key is missing", "profile.drifts")
            diff = p.get("diffusions", [1] * len(p["drifts"]))
            c = CoefficientProfile(tuple(p["drifts"]), tuple(diff))
        else:
            if n_sim is None:
                raise ConfigError("a mean-field profile needs the particle number", "simulation.n")
            return discretize_meanfield(meanfield_profile(cfg), n_sim)
    except (ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), "profile") from None
    if n_sim is not None and n_sim != c.n:
        raise ConfigError(f"profile has n={c.n}", "simulation.n")
    return c


def build_law(law_cfg: dict, cfg: dict, key: str) -> Law:
    kind = law_cfg["kind"]
    if kind == "point":
        return PointMass(law_cfg.get("at", 0.0))
    if kind == "uniform":
        return Uniform(law_cfg.get("low", 0.0), law_cfg.get("high", 1.0))
    if kind == "gaussian":
        return Gaussian(law_cfg.get("mean", 0.0), law_cfg.get("variance", 1.0))
    if cfg["profile"]["kind"] in _DISCRETE:
        raise ConfigError("wave laws need a mean-field profile", f"{key}.kind")
    w = wave_profile(meanfield_profile(cfg), law_cfg.get("mean", 0.0))
    if kind == "wave":
        return w
    shifts = law_cfg.get("shifts", [-1.0, 1.0])
    return Mixture(tuple(Shifted(w, s) for s in shifts), (1.0,) * len(shifts))


# commands: each returns {file name: text}


def run_simulate(cfg: dict) -> dict:
    s = cfg["simulation"]
    c = coefficient_profile(cfg)
    law = build_law(s["initial"], cfg, "simulation.initial")
    times = _times(s["t_end"], s["record_every"])
    sc = SimConfig(c.n, s["dt"], s["t_end"], cfg["seed"], law, tuple(times), s["burn_in"])
    traj = simulate(sc, c)
    com = traj.center_of_mass()
    ranked = traj.sorted_positions()
    if s["snapshot"] == "sorted":
        header = ["t", "center_of_mass"] + [f"x({k})" for k in range(1, c.n + 1)]
        cols = ranked
    else:
        levels = SNAPSHOT_QUANTILES
        header = ["t", "center_of_mass"] + [f"q{v:g}" for v in levels]
        cols = np.array([empirical_quantile(row, levels) for row in ranked])
    rows = [[t, m, *r] for t, m, r in zip(traj.times.tolist(), com.tolist(), cols.tolist())]
    out = {"snapshots.csv": format_table(header, rows)}
    if c.n > 1:
        gaps = gap_samples(traj, s["burn_in"] * s["t_end"])
        rows = []
        for k in range(c.n - 1):
            g = gaps[:, k]
            sup = exponential_sup_distance(g) if len(g) > 1 and np.mean(g) > 0 else float("nan")
            rows.append([k + 1, float(np.mean(g)), sup])
        out["gaps.csv"] = format_table(["gap", "mean", "sup_distance_exponential"], rows)
    return out


def run_stability(cfg: dict) -> dict:
    c = coefficient_profile(cfg)
    rep = check_global_stability(c)
    head = {"globally_stable": rep.globally_stable, "margins": [float(a) for a in rep.margins]}
    if rep.globally_stable:
        try:
            law = stationary_gap_law(c)
            head.update(gap_law=law.kind, gap_rates=list(law.rates), gap_means=list(law.means))
        except RankDiffError as exc:
            head.update(gap_law=None, gap_law_note=str(exc))
    text = json.dumps(head) + "\n" + classify_long_time(c).to_text()
    return {"stability.jsonl": text}


def run_pde(cfg: dict) -> dict:
    g_cfg = cfg["grid"]
    mf = meanfield_profile(cfg)
    law = build_law(g_cfg["initial"], cfg, "grid.initial")
    g = init_grid(law, g_cfg["x_min"], g_cfg["x_max"], g_cfg["nx"])
    rows, means = [], []
    for t in _times(g_cfg["t_end"], g_cfg["record_every"]) if g_cfg["t_end"] > 0 else [0.0]:
        g = evolve(g, mf, t, theta=g_cfg["theta"])
        rows += [[t, x, u] for x, u in zip(g.x.tolist(), g.values.tolist())]
        means.append([t, grid_mean(g)])
    return {"pde.csv": format_table(["t", "x", "u"], rows), "pde_mean.csv": format_table(["t", "mean"], means)}


def run_wave(cfg: dict) -> dict:
    w_cfg, g_cfg = cfg["wave"], cfg["grid"]
    mf = meanfield_profile(cfg)
    ol = check_oleinik(mf)
    out = {
        "oleinik.txt": f"holds={ol.holds}\nmin_margin={fmt(ol.min_margin)}\nargmin={fmt(ol.argmin)}\n",
    }
    w = wave_profile(mf, w_cfg["target_mean"])
    x = np.linspace(w_cfg["table_x_min"], w_cfg["table_x_max"], w_cfg["table_points"])
    out["wave.csv"] = format_table(["x", "phi"], w.table(x).tolist())
    shifts = w_cfg["perturbation_shifts"]
    m = Mixture(tuple(Shifted(w, s) for s in shifts), (1.0,) * len(shifts))
    if abs(m.mean - w.mean) > 1e-6:
        raise ConfigError("perturbation shifts must average to zero so that means match", "wave.perturbation_shifts")
    if w_cfg["horizon"] > 0:
        times = _times(w_cfg["horizon"], w_cfg["record_every"])
        series = stability_experiment(
            mf, m, w_cfg["horizon"], g_cfg["x_min"], g_cfg["x_max"], g_cfg["nx"], times, w, g_cfg["theta"]
        )
        out["wave_stability.csv"] = format_table(["t", "l1_distance"], series.rows())
    return out


def run_capital(cfg: dict) -> dict:
    c_cfg = cfg["capital"]
    mf = meanfield_profile(cfg)
    phase = classify_phase(mf)
    out = {}
    text = phase.to_text()
    if phase.label == "Dilute":
        v = np.arange(1, c_cfg["v_points"] + 1) / (c_cfg["v_points"] + 1)
        st = stationary_capital_density(mf, v)
        out["stationary_density.csv"] = format_table(["v", "density"], zip(st.v.tolist(), st.density.tolist()))
    elif phase.label == "Aggregated":
        text += "stationary_limit=dirac_at_0\n"
    else:
        diag = critical_diagnostic(mf)
        text += "stationary_limit=undetermined\n"
        out["critical_diagnostic.csv"] = diag.to_text()
    if c_cfg["simulate"]:
        s = cfg["simulation"]
        c = coefficient_profile(cfg)
        law = build_law(s["initial"], cfg, "simulation.initial")
        times = [t for t in _times(s["t_end"], s["record_every"]) if t >= s["burn_in"] * s["t_end"] - 1e-12]
        traj = simulate(SimConfig(c.n, s["dt"], s["t_end"], cfg["seed"], law, tuple(times), s["burn_in"]), c)
        curve = mean_capital_curve(traj.positions)
        out["capital_curve.csv"] = format_table(CURVE_HEADER, curve.rows())
        fit = loglog_slope(curve, c_cfg["top_fraction"])
        text += f"fitted_slope={fmt(fit.slope)}\nfitted_slope_stderr={fmt(fit.stderr)}\nfit_points={fit.n_points}\n"
    out["phase.txt"] = text
    return out


RUNNERS = {
    "simulate": run_simulate,
    "stability": run_stability,
    "pde": run_pde,
    "wave": run_wave,
    "capital": run_capital,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rankdiff", description="Rank-based diffusion experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", required=True, type=Path, help="YAML configuration file")
        sp.add_argument("--seed", type=int, default=None, help="override the configured seed")
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
        sp.add_argument(
            "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
            help="override a key by dotted path, e.g. grid.nx=4000",
        )
    return ap


def run(command: str, config_path, out_dir, overrides=(), seed=None) -> dict:
    """Resolve the configuration, run ``command`` and write its outputs; returns the written paths."""
    cfg = cfgmod.load(config_path, overrides, seed)
    if cfg.get("command", command) != command:
        raise ConfigError(f"configuration was written for {cfg['command']!r}", "command")
    cfg["command"] = command
    out_dir = Path(out_dir).resolve()
    files = RUNNERS[command](cfg)
    files["provenance.yaml"] = cfgmod.dump(cfg)
    written = {}
    for name, text in sorted(files.items()):
        atomic_write_text(out_dir / name, text)
        written[name] = out_dir / name
    return written


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        written = run(args.command, args.config, args.out, args.overrides, args.seed)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RankDiffError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for name, path in written.items():
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
