"""Command-line orchestration: parameter sweeps, ensembles and report emission.

Each command has a ``run_*`` function that returns its report rows (and the
list of threshold breaches) without touching the filesystem; :func:`main`
wraps them with config loading, file output and exit codes.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 threshold breach.
"""
from __future__ import annotations

import argparse
import io as _io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .config import Config
from .errors import ConfigError, NumericalError, ParameterError, SizeError, StructureError
from .fou import (drift_distance, fou_second_moment, ito_stokes_drift_ergodic,
                  ito_stokes_drift_mc, ito_stokes_drift_spectral, limit_variance,
                  mean_convergence_gap)
from .io import save_field, write_csv
from .limits import effective_drift, solve_drift_limit, solve_transport_limit
from .noise import (CHOLESKY_CAP, FouParams, sample_fast_ou_field, sample_fou_ensemble,
                    sample_q_fwiener)
from .rough import (build_y_path, level2_variation, lift_canonical, lift_distance,
                    max_chen_defect, p_variation)
from .slowfast import DIAGNOSTIC_COLUMNS, SlowFastParams, default_initial, energy_report, simulate

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_BREACH = 0, 2, 3, 4

FOU_COLUMNS = ("lambda", "sigma", "H", "t", "second_moment", "limit_variance", "gap")
FOU_MC_COLUMNS = ("mc_second_moment", "mc_stderr", "mc_z")
LIFT_COLUMNS = ("epsilon", "d1", "d2", "chen_max", "pvar_level1", "pvar_level2",
                "pvar_level1_ratio", "pvar_level2_ratio")
COMPARE_COLUMNS = ("epsilon", "L2_distance_at_T", "energy_sum", "sup_energy")
SIMULATE_COLUMNS = ("epsilon", "energy_sum", "sup_energy", "bound_lhs", "scheme_error",
                    "div_defect_max")
CHEN_TOL = 1e-10
DIV_TOL = 1e-10
SCALING_TOL = 0.03
FOU_MC_MIN_STEPS = 16


def _pmap(fn, items, threads=1):
    """Ordered map, optionally over a thread pool."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _grid(T, dt):
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ParameterError(f"T={T} is not a positive multiple of dt={dt}")
    return np.linspace(0.0, steps * dt, steps + 1)


def replica_seed(seed, r):
    """Seed of replica ``r``; replicas share it across the epsilon sweep."""
    return int(seed) + int(r)


def _strictly_decreasing(values):
    return all(b < a for a, b in zip(values[:-1], values[1:]))


# --------------------------------------------------------------------------
# fou-stats


def _fou_mc(params, t, samples, seed, row, dt):
    if t == 0:
        return params.x0**2, 0.0
    steps = max(FOU_MC_MIN_STEPS, int(math.ceil(t / dt)))
    if steps + 1 > CHOLESKY_CAP:
        raise SizeError(f"t={t} needs {steps + 1} grid points (cap {CHOLESKY_CAP}); raise dt")
    grid = np.linspace(0.0, t, steps + 1)
    X = sample_fou_ensemble(params, grid, seed, samples, tag=row)[:, -1]
    sq = X**2
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(samples))


def run_fou_stats(cfg: Config):
    """Rows of :data:`FOU_COLUMNS` (plus MC columns when ``samples > 0``)."""
    samples = cfg["samples"]
    rows, breaches = [], []
    for idx, entry in enumerate(cfg["fou_table"]):
        params = FouParams(entry["lambda"], entry["sigma"], entry["hurst"], entry.get("x0", 0.0))
        t = float(entry["t"])
        row = [float(params.lam), float(params.sigma), float(params.hurst), t, fou_second_moment(params, t),
               limit_variance(params), mean_convergence_gap(params, t)]
        if samples > 1:
            mean, se = _fou_mc(params, t, samples, cfg["seed"], idx, cfg["dt"])
            z = abs(mean - row[4]) / se if se > 0 else 0.0
            row += [mean, se, z]
            if z > cfg["sigma_multiple"]:
                breaches.append(f"fou row {idx}: MC differs by {z:.2f} standard errors")
        rows.append(row)
    header = list(FOU_COLUMNS) + (list(FOU_MC_COLUMNS) if samples > 1 else [])
    return header, rows, breaches


# --------------------------------------------------------------------------
# drift


def run_drift(cfg: Config):
    """The three drift estimators and their pairwise distances."""
    spec = cfg.noise_spec()
    samples = cfg["samples"] or 100_000
    erg = cfg["ergodic"]
    results = {
        "spectral": ito_stokes_drift_spectral(spec),
        "monte_carlo": ito_stokes_drift_mc(spec, samples, cfg["seed"]),
        "ergodic": ito_stokes_drift_ergodic(spec, erg["T"], erg["dt"], cfg["seed"],
                                            batches=erg["batches"]),
    }
    names = list(results)
    pairs, breaches = [], []
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            dist, se = drift_distance(results[names[a]], results[names[b]])
            z = dist / se if se > 0 else (0.0 if dist <= 1e-12 else math.inf)
            pairs.append({"a": names[a], "b": names[b], "distance": dist, "stderr": se,
                          "z": z})
            if z > cfg["sigma_multiple"]:
                breaches.append(f"drift {names[a]} vs {names[b]}: {z:.2f} standard errors")
    report = {
        "methods": {k: v.to_dict(spec) for k, v in results.items()},
        "distances": pairs,
        "sigma_multiple": cfg["sigma_multiple"],
        "agree": not breaches,
    }
    return report, breaches


# --------------------------------------------------------------------------
# lift


def _lift_row(cfg, spec, alpha, grid, eps):
    w, W = sample_fast_ou_field(spec, eps, grid, cfg["seed"], return_noise=True)
    p = cfg["p"]
    L = lift_canonical(build_y_path(w, eps, alpha), p=p)
    if math.isclose(alpha, 1.0):
        ref = lift_canonical(W.neg_c_inverse(), p=L.p)
        base = L
    else:
        # the limit of y is the zero path in this regime
        ref = L.scaled(0.0)
        base = lift_canonical(build_y_path(w, eps, 1.0), p=L.p)
    d1, d2 = lift_distance(L, ref)
    pv1, pv2 = p_variation(L.level1, L.p), level2_variation(L)
    bv1, bv2 = p_variation(base.level1, L.p), level2_variation(base)
    chen = max_chen_defect(L, max(1, len(L) // 50))
    return [eps, d1, d2, chen, pv1, pv2,
            pv1 / bv1 if bv1 > 0 else math.nan, pv2 / bv2 if bv2 > 0 else math.nan]


def run_lift(cfg: Config, threads=1):
    """Rows of :data:`LIFT_COLUMNS` over the epsilon list.

    The ratio columns divide by the variation of the ``alpha = 1`` lift of the
    same fast path, which isolates the ``eps^{1/2 - H}`` rescaling.
    """
    spec = cfg.noise_spec()
    alpha = cfg.alpha
    grid = _grid(cfg["T"], cfg["dt"])
    rows = _pmap(lambda e: _lift_row(cfg, spec, alpha, grid, e), cfg["epsilon_list"], threads)
    breaches = [f"lift eps={r[0]}: Chen defect {r[3]:.3g}" for r in rows if r[3] > CHEN_TOL]
    order = sorted(rows, key=lambda r: -r[0])
    if len(order) > 1:
        if math.isclose(alpha, 1.0):
            if not _strictly_decreasing([r[1] for r in order]):
                breaches.append("lift: d1 is not strictly decreasing as eps decreases")
        else:
            target = 0.5 - cfg["hurst"]
            logs = np.log([r[0] for r in order])
            for col, factor in ((6, 1.0), (7, 2.0)):
                slope = float(np.polyfit(logs, np.log([r[col] for r in order]), 1)[0])
                if abs(slope - factor * target) > SCALING_TOL:
                    breaches.append(f"lift: {LIFT_COLUMNS[col]} slope {slope:.4f}, "
                                    f"expected {factor * target:.4f}")
    return list(LIFT_COLUMNS), rows, breaches


# --------------------------------------------------------------------------
# simulate / compare


def _params(cfg, spec, eps):
    return SlowFastParams(eps, cfg["nu"], spec, alpha=cfg["alpha"])


def _regime(cfg):
    alpha, H = cfg.alpha, cfg["hurst"]
    if math.isclose(alpha, 1.0):
        return "transport"
    if alpha < 1:
        return "drift"
    raise ConfigError(f"no limit equation for alpha={alpha} at H={H}; use alpha='auto'")


def run_simulate(cfg: Config, threads=1, snapshot_dir=None):
    """Coupled runs for every epsilon (seed of replica 0).

    With ``snapshot_dir`` each run writes ``eps_<i>/diagnostics.csv`` and
    binary ``u``/``r`` snapshots every ``output_every`` steps.
    """
    spec = cfg.noise_spec()
    u0 = default_initial(cfg["grid_n"])
    eps_list = cfg["epsilon_list"]

    def one(item):
        i, eps = item
        traj, _ = simulate(_params(cfg, spec, eps), cfg["T"], cfg["dt"], replica_seed(cfg["seed"], 0),
                           u0=u0, output_every=cfg["output_every"])
        if snapshot_dir is not None:
            _write_snapshots(os.path.join(snapshot_dir, f"eps_{i}"), traj)
        rep = energy_report(traj)
        div = max(row[4] for row in traj.diagnostics)
        return [eps, float(rep.energy_sum[-1]), rep.sup_energy, rep.bound_lhs,
                rep.scheme_error, div], rep.satisfies_bound()

    out = _pmap(one, list(enumerate(eps_list)), threads)
    rows = [r for r, _ in out]
    breaches = [f"simulate eps={r[0]}: energy bound violated" for r, ok in out if not ok]
    breaches += [f"simulate eps={r[0]}: divergence defect {r[5]:.3g}" for r in rows
                 if r[5] > DIV_TOL]
    return list(SIMULATE_COLUMNS), rows, breaches


def _write_snapshots(path, traj):
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "diagnostics.csv"), "w", newline="") as fh:
        write_csv(fh, DIAGNOSTIC_COLUMNS, traj.diagnostics)
    for k, (_, u, _, r) in enumerate(traj.snapshots):
        save_field(os.path.join(path, f"u_{k:05d}.sfld"), u)
        save_field(os.path.join(path, f"r_{k:05d}.sfld"), r)


def limit_solution(cfg: Config, spec, u0, noise=None):
    """Limit equation selected by ``(H, alpha)``; ``noise`` (``W^H``) is needed in the transport regime."""
    regime = _regime(cfg)
    if regime == "drift":
        rbar = effective_drift(ito_stokes_drift_spectral(spec))
        return solve_drift_limit(u0, rbar, cfg["nu"], cfg["T"], cfg["dt"])
    lift = lift_canonical(noise.neg_c_inverse(), p=cfg["p"])
    return solve_transport_limit(u0, lift, spec, cfg["nu"])


def run_compare(cfg: Config, threads=1):
    """Pathwise distance between the coupled system and its limit at time ``T``.

    Replica ``r`` uses seed ``seed + r`` for every epsilon.  The distance
    column is the root mean square over replicas; ``energy_sum`` is the
    replica mean of the final energy ledger and ``sup_energy`` the maximum.
    """
    spec = cfg.noise_spec()
    u0 = default_initial(cfg["grid_n"])
    grid = _grid(cfg["T"], cfg["dt"])
    eps_list = cfg["epsilon_list"]
    reps = range(cfg["replicas"])
    regime = _regime(cfg)

    noises = [sample_q_fwiener(spec, grid, replica_seed(cfg["seed"], r)) for r in reps]
    if regime == "drift":
        shared = limit_solution(cfg, spec, u0)
        limits = [shared for _ in reps]
    else:
        limits = _pmap(lambda r: limit_solution(cfg, spec, u0, noises[r]), reps, threads)

    def one(item):
        i, r = item
        traj, _ = simulate(_params(cfg, spec, eps_list[i]), cfg["T"], cfg["dt"], None, u0=u0,
                           output_every=len(grid), noise=noises[r])
        rep = energy_report(traj)
        dist = (traj.final.u - limits[r].u_final).norm()
        return dist, float(rep.energy_sum[-1]), rep.sup_energy, rep.satisfies_bound()

    jobs = [(i, r) for i in range(len(eps_list)) for r in reps]
    res = dict(zip(jobs, _pmap(one, jobs, threads)))
    rows, breaches = [], []
    for i, eps in enumerate(eps_list):
        vals = [res[(i, r)] for r in reps]
        rms = math.sqrt(sum(v[0] ** 2 for v in vals) / len(vals))
        rows.append([eps, rms, float(np.mean([v[1] for v in vals])), max(v[2] for v in vals)])
        if not all(v[3] for v in vals):
            breaches.append(f"compare eps={eps}: energy bound violated")
    order = sorted(rows, key=lambda r: -r[0])
    if len(order) > 1 and not _strictly_decreasing([r[1] for r in order]):
        breaches.append("compare: distance is not decreasing as eps decreases")
    return list(COMPARE_COLUMNS), rows, breaches


# --------------------------------------------------------------------------
# entry point


def seed_plan(cfg: Config, command):
    plan = {"seed": cfg["seed"]}
    if command in ("simulate", "compare", "lift"):
        plan["fbm_streams"] = "substream(seed_r, FBM, mode_index)"
    if command == "compare":
        plan["replica_seeds"] = [replica_seed(cfg["seed"], r) for r in range(cfg["replicas"])]
    if command == "simulate":
        plan["replica_seeds"] = [replica_seed(cfg["seed"], 0)]
    if command == "fou-stats":
        plan["ensemble_streams"] = "substream(seed, ENSEMBLE, row_index, replica)"
    if command == "drift":
        plan["monte_carlo_stream"] = "substream(seed, GAUSS)"
        plan["ergodic_streams"] = "substream(seed, FBM, mode_index)"
    return plan


def manifest(cfg: Config, command, outputs):
    return {
        "command": command,
        "config_hash": cfg.digest(),
        "config": cfg.to_dict(),
        "seed_plan": seed_plan(cfg, command),
        "version": f"fbm_slowfast {__version__}",
        "outputs": sorted(outputs),
    }


def _csv_text(header, rows):
    buf = _io.StringIO()
    write_csv(buf, header, rows)
    return buf.getvalue()


def _write(path, text):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)


def build_parser():
    parser = argparse.ArgumentParser(prog="fbm-slowfast", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=["fou-stats", "drift", "lift", "simulate", "compare"])
    parser.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    parser.add_argument("--out", metavar="DIR", help="override the output directory")
    parser.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    parser.add_argument("--strict", action="store_true",
                        help="treat threshold breaches as errors (exit 4)")
    return parser


def execute(args):
    """Run one command; returns ``(exit_code, breaches)``."""
    cfg = Config.load(args.config) if args.config else Config.from_dict({})
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    cfg = cfg.with_overrides(**overrides)
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    name = args.command.replace("-", "_")
    outputs = []

    if args.command == "fou-stats":
        header, rows, breaches = run_fou_stats(cfg)
        _write(os.path.join(out, f"{name}.csv"), _csv_text(header, rows))
        outputs.append(f"{name}.csv")
    elif args.command == "drift":
        report, breaches = run_drift(cfg)
        _write(os.path.join(out, "drift.json"), json.dumps(report, indent=2, sort_keys=True) + "\n")
        outputs.append("drift.json")
    elif args.command == "lift":
        header, rows, breaches = run_lift(cfg, args.threads)
        _write(os.path.join(out, "lift.csv"), _csv_text(header, rows))
        outputs.append("lift.csv")
    elif args.command == "simulate":
        header, rows, breaches = run_simulate(cfg, args.threads, os.path.join(out, "simulate"))
        _write(os.path.join(out, "simulate.csv"), _csv_text(header, rows))
        outputs += ["simulate.csv", "simulate/"]
    else:
        header, rows, breaches = run_compare(cfg, args.threads)
        _write(os.path.join(out, "compare.csv"), _csv_text(header, rows))
        outputs.append("compare.csv")

    _write(os.path.join(out, f"{name}.manifest.json"),
           json.dumps(manifest(cfg, args.command, outputs), indent=2, sort_keys=True) + "\n")
    for b in breaches:
        print(f"threshold breach: {b}", file=sys.stderr)
    # cross-method disagreement of the drift estimators always fails the run
    fatal = args.strict or args.command == "drift"
    return (EXIT_BREACH if breaches and fatal else EXIT_OK), breaches


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        code, _ = execute(args)
    except (ConfigError, ParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, SizeError, StructureError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return code


if __name__ == "__main__":
    sys.exit(main())
