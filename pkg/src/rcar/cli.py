"""Config-driven pipeline runner.

    rcar <pipeline> <config.json> --out DIR [--seed U64] [--workers N]
         [--override key=value ...]

Exit codes: 0 success, 1 runtime failure, 2 config error, 3 violated
precondition (the hypothesis is named on stderr).
"""

from __future__ import annotations

import argparse
import contextlib
import copy
import hashlib
import json
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .diagnostics import atom_test, check_hypotheses, convergence_check
from .dist import law_from_dict, law_to_dict
from .errors import ConfigError, PreconditionError, RcarError
from .estimate import (BANDWIDTH_CONSTANT, bandwidth_default, default_x_probe, joint_cf_from_transition,
                       recover_eps_cf, recover_rho_cf, transition_cdf_ladder)
from .io import (dumps, write_cf_csv, write_csv, write_json, write_trajectory_binary,
                 write_trajectory_csv, write_transition_csv)
from .process import (DEFAULT_N_MAX, DEFAULT_N_MIN, DEFAULT_TOL_PROD, EnsembleSpec, chain_stream, map_chains, run_ensemble,
                      sample_stationary_batch, simulate)
from .regen import decompose, geometric_diagnostics, harris_check, regeneration_value_check

SCHEMA_VERSION = 1

# Every tunable default lives here so the manifest records the full run.
DEFAULTS = {
    "simulate": {"n": 1000, "x0": 0.0, "retain_driving": True, "n_chains": 1,
                 "binary": False},
    "regen-stats": {"n": 1_000_000, "x0": 0.0, "alpha": None, "replications": 1,
                    "min_cycles": 100, "level": 0.01},
    "harris-check": {"interval": [-0.5, 0.5], "x0_list": [0.0, 10.0, 100.0], "n_max": 200,
                     "trials": 10_000, "delta": 0.05, "theta_trials": 4000, "n_cap": 1000,
                     "n_stationary": 100_000},
    "estimate-cdf": {"n": 1_000_000, "x0": 0.0, "x_list": [0.0], "h": "auto",
                     "ladder_levels": 1, "y_grid": {"lo": -4.0, "hi": 4.0, "num": 201}},
    "recover-cf": {"n": 1_000_000, "x0": 0.0, "h": "auto", "x_probe": 1.0, "floor": 0.05,
                   "t_grid": {"lo": -3.0, "hi": 3.0, "num": 61},
                   "rho_t_grid": {"lo": -2.0, "hi": 2.0, "num": 41}},
    "joint-cf": {"n": 1_000_000, "x0": 0.0, "h": "auto", "points": [[1.0, 1.0]],
                 "mc_draws": 1_000_000},
    "diagnose": {"stationary_samples": 100_000, "atom_levels": 21,
                 "convergence_n_list": [5, 20, 100], "convergence_m": 10_000, "x0": 0.0,
                 "tol_prod": DEFAULT_TOL_PROD, "n_min": DEFAULT_N_MIN, "n_max": DEFAULT_N_MAX},
}
for _name in ("estimate-cdf", "recover-cf", "joint-cf"):
    DEFAULTS[_name]["h_constant"] = BANDWIDTH_CONSTANT
PIPELINES = tuple(DEFAULTS)
COMMON = {"schema_version", "seed", "law", "pipeline"}


# --------------------------------------------------------------------------
# Config handling
# --------------------------------------------------------------------------


def _set_dotted(cfg, key, value):
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key}: '{p}' is not an object")
    node[parts[-1]] = value


def parse_override(text):
    if "=" not in text:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def grid(spec, name):
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    if isinstance(spec, dict) and set(spec) == {"lo", "hi", "num"}:
        if int(spec["num"]) < 1:
            raise ConfigError(f"{name}.num must be positive")
        return np.linspace(float(spec["lo"]), float(spec["hi"]), int(spec["num"]))
    raise ConfigError(f"{name}: expected a list or {{lo, hi, num}}")


def resolve_config(pipeline, raw, seed=None, overrides=()):
    """Merge defaults, file contents and overrides; validate the result."""
    if pipeline not in DEFAULTS:
        raise ConfigError(f"unknown pipeline '{pipeline}'")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    cfg = copy.deepcopy(DEFAULTS[pipeline])
    cfg.update(copy.deepcopy(raw))
    for key, value in overrides:
        _set_dotted(cfg, key, value)
    if seed is not None:
        cfg["seed"] = seed
    cfg.setdefault("schema_version", SCHEMA_VERSION)
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {cfg['schema_version']!r}")
    if cfg.get("pipeline", pipeline) != pipeline:
        raise ConfigError(f"config is for pipeline '{cfg['pipeline']}', not '{pipeline}'")
    cfg["pipeline"] = pipeline
    for req in ("law", "seed"):
        if req not in cfg:
            raise ConfigError(f"missing required field '{req}'")
    unknown = set(cfg) - set(DEFAULTS[pipeline]) - COMMON
    if unknown:
        raise ConfigError(f"unknown field(s) for {pipeline}: {sorted(unknown)}")
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool) or not (
            0 <= cfg["seed"] < 2 ** 64):
        raise ConfigError("field 'seed' must be an unsigned 64-bit integer")
    law = law_from_dict(cfg["law"])
    cfg["law"] = law_to_dict(law)
    return cfg, law


def config_hash(cfg) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _int(cfg, key, lo=1):
    v = cfg[key]
    if not isinstance(v, int) or isinstance(v, bool) or v < lo:
        raise ConfigError(f"field '{key}' must be an integer >= {lo}")
    return v


def _bandwidth(cfg, traj):
    h = cfg["h"]
    if h == "auto":
        return bandwidth_default(traj, float(cfg["h_constant"]))
    if not isinstance(h, (int, float)) or h <= 0:
        raise ConfigError("field 'h' must be 'auto' or a positive number")
    return float(h)


# --------------------------------------------------------------------------
# Pipelines
# --------------------------------------------------------------------------


@contextlib.contextmanager
def stage(pipeline, name):
    """Prefix errors raised inside with ``pipeline/name``."""
    try:
        yield
    except RcarError as exc:
        if exc.args:
            exc.args = (f"{pipeline}/{name}: {exc.args[0]}",) + exc.args[1:]
        raise


def _path_stream(cfg):
    return chain_stream(cfg["seed"], 0)


def run_simulate(cfg, law, out, workers):
    n_chains = _int(cfg, "n_chains")
    spec = EnsembleSpec(n_chains, _int(cfg, "n"), float(cfg["x0"]),
                        bool(cfg["retain_driving"]), "simulate")
    with stage("simulate", "ensemble"):
        trajs = run_ensemble(law, spec, cfg["seed"], workers)
    names = ["trajectory"] if n_chains == 1 else [f"trajectory_{k:05d}" for k in range(n_chains)]
    for name, traj in zip(names, trajs):
        write_trajectory_csv(traj, out / f"{name}.csv")
        if cfg["binary"]:
            write_trajectory_binary(traj, out / f"{name}.rcar")
    summary = {"n_chains": n_chains, "files": [f"{n}.csv" for n in names],
               "terminal_values": [t.states[-1] for t in trajs]}
    write_json(summary, out / "simulate.json")
    return summary


def _regen_replication(rng, k, law, n, x0, alpha, min_cycles, with_values):
    traj = simulate(law, x0, n, True, rng)
    decomp = decompose(traj)
    geo = geometric_diagnostics(decomp, alpha, min_cycles)
    values = regeneration_value_check(decomp, traj, law, min_cycles) if with_values else None
    return geo, values, len(decomp.tau)


def run_regen_stats(cfg, law, out, workers):
    alpha = cfg["alpha"] if cfg["alpha"] is not None else law.prob_rho_zero()
    if not alpha > 0:
        raise PreconditionError("P(rho = 0) = 0: no regeneration times at zeros of rho",
                                hypothesis="P(rho = 0) > 0")
    reps = _int(cfg, "replications")
    with stage("regen-stats", "replications"):
        results = map_chains(_regen_replication, cfg["seed"], reps, workers,
                             (law, _int(cfg, "n"), float(cfg["x0"]), float(alpha),
                              _int(cfg, "min_cycles"), True))
    level = float(cfg["level"])
    rows = []
    for k, (geo, val, n_reg) in enumerate(results):
        rows.append([k, n_reg, geo.n_cycles, geo.mean_length, geo.mean_standard_error,
                     geo.chi2_statistic, geo.chi2_dof, geo.chi2_pvalue, geo.ks_pvalue,
                     "" if val.ks_pvalue is None else val.ks_pvalue])
    write_csv(out / "replications.csv",
              ["replication", "n_regenerations", "n_cycles", "mean_length", "mean_se",
               "chi2_statistic", "chi2_dof", "chi2_pvalue", "halves_ks_pvalue",
               "value_ks_pvalue"], rows)
    geo0, val0, _ = results[0]
    write_csv(out / "cycle_cells.csv", ["lo", "hi", "observed", "expected"],
              [[c["lo"], "inf" if c["hi"] is None else str(c["hi"]), c["observed"],
                c["expected"]] for c in geo0.cells])
    summary = {"alpha": alpha, "replications": reps,
               "mean_cycle_length": geo0.mean_length, "expected_mean": geo0.expected_mean,
               "mean_z": geo0.mean_z, "chi2_pvalue": geo0.chi2_pvalue,
               "halves_ks_pvalue": geo0.ks_pvalue, "regeneration_values": val0,
               "chi2_pass_count": sum(g.chi2_pvalue > level for g, _, _ in results),
               "identity_holds_all": all(v.identity_holds for _, v, _ in results)}
    write_json(summary, out / "regen_stats.json")
    return summary


def run_harris_check(cfg, law, out, workers):
    rng = _path_stream(cfg)
    with stage("harris-check", "check"):
        report = harris_check(law, tuple(cfg["interval"]), [float(x) for x in cfg["x0_list"]],
                              _int(cfg, "n_max"), _int(cfg, "trials"), float(cfg["delta"]),
                              rng, theta_trials=_int(cfg, "theta_trials"), n_cap=_int(cfg, "n_cap"),
                              n_stationary=_int(cfg, "n_stationary"))
    write_json(report, out / "harris_report.json")
    write_csv(out / "hitting.csv", ["x0", "probability", "standard_error", "n_x"],
              [[x, report.hitting_prob_estimates[x], report.hitting_standard_errors[x],
                "" if report.n_x_table.get(x) is None else report.n_x_table[x]]
               for x in sorted(report.hitting_prob_estimates)])
    print(report.table())
    return report


def _oracle_cdf_error(law, est):
    if est.empty_bin:
        return None
    g = [law.transition_cdf(est.x, y) for y in est.y_grid]
    if any(v is None for v in g):
        return None
    return float(np.max(np.abs(est.values - np.asarray(g))))


def run_estimate_cdf(cfg, law, out, workers):
    with stage(cfg["pipeline"], "simulate"):
        traj = simulate(law, float(cfg["x0"]), _int(cfg, "n"), False, _path_stream(cfg))
    with stage(cfg["pipeline"], "bandwidth"):
        h = _bandwidth(cfg, traj)
    ys = grid(cfg["y_grid"], "y_grid")
    ests = []
    for x in cfg["x_list"]:
        ests.extend(transition_cdf_ladder(traj, float(x), h, _int(cfg, "ladder_levels"), ys))
    write_transition_csv(ests, out / "transition_cdf.csv")
    summary = {"h": h, "estimates": [
        {"x": e.x, "h": e.h, "bin_count": e.bin_count, "empty": e.empty_bin,
         "max_abs_error_vs_oracle": _oracle_cdf_error(law, e)} for e in ests]}
    write_json(summary, out / "estimate_cdf.json")
    return summary


def _cf_error(est, oracle):
    if oracle is None or not est.valid.any():
        return None
    return float(np.max(np.abs(est.values[est.valid] - oracle[est.valid])))


def run_recover_cf(cfg, law, out, workers):
    with stage(cfg["pipeline"], "simulate"):
        traj = simulate(law, float(cfg["x0"]), _int(cfg, "n"), False, _path_stream(cfg))
    with stage(cfg["pipeline"], "bandwidth"):
        h = _bandwidth(cfg, traj)
    ts = grid(cfg["t_grid"], "t_grid")
    rts = grid(cfg["rho_t_grid"], "rho_t_grid")
    with stage("recover-cf", "x_probe"):
        x_probe = (default_x_probe(traj, h) if cfg["x_probe"] == "auto"
                   else float(cfg["x_probe"]))
    with stage("recover-cf", "recover"):
        eps_est = recover_eps_cf(traj, h, ts)
        rho_est = recover_rho_cf(traj, h, x_probe, rts, float(cfg["floor"]))
    write_cf_csv([eps_est], out / "eps_cf.csv")
    write_cf_csv([rho_est], out / "rho_cf.csv")
    summary = {"h": h, "x_probe": x_probe, "eps_bin_count": eps_est.bin_count,
               "rho_bin_count": rho_est.bin_count,
               "rho_valid_fraction": float(rho_est.valid.mean()),
               "eps_max_abs_error_vs_oracle": _cf_error(eps_est, law.eps_cf(ts)),
               "rho_max_abs_error_vs_oracle": _cf_error(rho_est, law.rho_cf(rts))}
    write_json(summary, out / "recover_cf.json")
    return summary


def run_joint_cf(cfg, law, out, workers):
    with stage(cfg["pipeline"], "simulate"):
        traj = simulate(law, float(cfg["x0"]), _int(cfg, "n"), False, _path_stream(cfg))
    with stage(cfg["pipeline"], "bandwidth"):
        h = _bandwidth(cfg, traj)
    rho, eps = law.sample(chain_stream(cfg["seed"], 1), _int(cfg, "mc_draws"))
    rows, details = [], []
    for t1, t2 in cfg["points"]:
        est = joint_cf_from_transition(traj, h, float(t1), float(t2))
        mc = complex(np.mean(np.exp(1j * (t1 * rho + t2 * eps))))
        oracle = law.joint_cf(float(t1), float(t2))
        rows.append([est.t1, est.t2, est.x, est.h, est.value.real, est.value.imag,
                     not est.empty_bin, est.bin_count])
        details.append({"t1": est.t1, "t2": est.t2, "estimate": est.value, "direct_mc": mc,
                        "abs_diff_vs_mc": abs(est.value - mc),
                        "oracle": None if oracle is None else complex(oracle)})
    write_csv(out / "joint_cf.csv", ["t1", "t2", "x", "h", "re", "im", "valid", "bin_count"],
              rows)
    summary = {"h": h, "points": details}
    write_json(summary, out / "joint_cf.json")
    return summary


def run_diagnose(cfg, law, out, workers):
    rep = check_hypotheses(law)
    summary = {"hypotheses": rep}
    for msg in rep.messages:
        print(msg)
    if rep.stationary_limit:
        rng = _path_stream(cfg)
        with stage("diagnose", "stationary"):
            xs = sample_stationary_batch(law, _int(cfg, "stationary_samples"),
                                         float(cfg["tol_prod"]), _int(cfg, "n_min"),
                                         _int(cfg, "n_max"), rng=rng).values
        atoms = atom_test(xs, levels=_int(cfg, "atom_levels"))
        write_csv(out / "atom_curve.csv",
                  ["delta", "max_fraction", "max_count", "threshold", "atomic"], atoms.rows())
        with stage("diagnose", "convergence"):
            conv = convergence_check(law, cfg["convergence_n_list"],
                                     _int(cfg, "convergence_m"), rng, float(cfg["x0"]))
        write_csv(out / "convergence.csv", ["n", "ks_distance", "ks_pvalue", "critical"],
                  conv.rows())
        summary["atom_verdict"] = atoms.verdict
        summary["atom_kappa"] = atoms.kappa
        summary["convergence_passed"] = conv.passed
    write_json(summary, out / "diagnose.json")
    return summary


RUNNERS = {
    "simulate": run_simulate,
    "regen-stats": run_regen_stats,
    "harris-check": run_harris_check,
    "estimate-cdf": run_estimate_cdf,
    "recover-cf": run_recover_cf,
    "joint-cf": run_joint_cf,
    "diagnose": run_diagnose,
}


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------


def run(pipeline, config_path, output_dir, seed=None, workers=1, overrides=()):
    """Run one pipeline and write its artifacts plus ``manifest.json``."""
    try:
        raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    cfg, law = resolve_config(pipeline, raw, seed, [parse_override(o) for o in overrides])
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    result = RUNNERS[pipeline](cfg, law, out, workers)
    manifest = {
        "pipeline": pipeline,
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "versions": {"rcar": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "runtime": {"timestamp": datetime.now(timezone.utc).isoformat(),
                    "wall_time_s": time.perf_counter() - started, "workers": workers},
    }
    write_json(manifest, out / "manifest.json")
    return result


def build_parser():
    p = argparse.ArgumentParser(prog="rcar", description=__doc__.split("\n\n")[0])
    p.add_argument("pipeline", choices=PIPELINES)
    p.add_argument("config", help="JSON config file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="root seed (overrides the config)")
    p.add_argument("--workers", type=int, default=1, help="worker processes for chain ensembles")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="set a (dotted) config key; VALUE is parsed as JSON when possible")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run(args.pipeline, args.config, args.out, args.seed, max(1, args.workers),
            args.override)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PreconditionError as exc:
        name = f" [{exc.hypothesis}]" if exc.hypothesis else ""
        print(f"precondition failed{name}: {exc}", file=sys.stderr)
        return 3
    except RcarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
