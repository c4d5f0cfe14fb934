"""Desk-scale experiment runs. Each writes CSVs, SVG figures and a manifest.

Every run is a pure function of its configuration: seeds are expanded into
independent streams with :func:`oee.rng.child_seed`, so rerunning a config
reproduces every CSV byte for byte. ``OEE_THREADS`` > 1 spreads independent
seeds over worker processes; results do not depend on it.
"""
from __future__ import annotations

import csv
import os
import platform
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

import oee
from oee.bounds import BoundInputs, BoundReport, bound_report
from oee.core import (DiscountSpec, EvaluationReport, Policy, collect_dataset, delta_mixture,
                      monte_carlo_return, uniform_policy)
from oee.envs.archery import Archery, ArcherySpec
from oee.envs.cartpole import Cartpole, CartpoleSpec
from oee.envs.gaussian import GaussianPairSpec, gaussian_pair_sample, true_gaussian_ratio
from oee.envs.gridworld import Gridworld, GridworldSpec
from oee.harness.cem import CemConfig, cem_train_expert
from oee.harness.config import ExperimentConfig
from oee.harness.svg import FigureSpec, Series, emit_svg_lineplot
from oee.ratio import SaturationWarning, TrainConfig, train_ratio, train_zeta_pair
from oee.rng import child_seed, stream
from oee.zeta import (ZetaEstimator, gridworld_oracle, is_ope_baseline, mle_baseline, reweighted_return,
                      simulator_rollouts)

REPORT_COLUMNS = "estimator,delta,mean,stderr,ess,n,T,gamma,seed"


@dataclass
class RunResult:
    out: Path
    files: list[Path] = field(default_factory=list)
    data: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)


# --------------------------------------------------------------------------- plumbing


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("OEE_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items: list) -> list:
    n = min(_workers(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def write_csv(path: Path, header: str, rows: list[list]) -> Path:
    def fmt(v):
        if v is None:
            return "NA"
        if isinstance(v, float):
            return f"{v:.17g}"
        return str(v)

    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header.split(","))
        w.writerows([fmt(v) for v in row] for row in rows)
    return path


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_manifest(out: Path, cfg: ExperimentConfig, extra: dict[str, str] | None = None) -> Path:
    lines = [
        f"kind = {cfg.kind}",
        f"config_sha256 = {cfg.digest}",
        f"seeds = {','.join(map(str, cfg.seeds))}",
        f"oee_version = {oee.__version__}",
        f"numpy_version = {np.__version__}",
        f"python_version = {platform.python_version()}",
    ]
    lines += [f"{k} = {v}" for k, v in (extra or {}).items()]
    lines += ["", "# config (canonical form)", *("  " + ln for ln in cfg.canonical().splitlines())]
    path = out / "manifest.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def _report_row(prefix: list, rep: EvaluationReport) -> list:
    return prefix + [rep.estimator, rep.delta, rep.mean, rep.stderr, rep.ess, rep.n, rep.horizon, rep.gamma,
                     rep.seed]


def train_config(cfg: ExperimentConfig, defaults: dict) -> dict:
    sec = cfg.section("train", defaults)
    sec["hidden"] = tuple(int(h) for h in sec["hidden"])
    return sec


def _tc(train: dict, seed: int) -> TrainConfig:
    return TrainConfig(seed=seed, **train)


TRAIN_KEYS = dict(function_class="mlp", batch_size=256, iterations=3000, lr=0.05, lam=1e-4, nu=0.1, mu=10.0,
                  eval_every=500, hidden=(64, 64, 64), standardize=True, start_at_one=False)


def _summary(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(np.mean(v)), float(np.std(v, ddof=1)) if len(v) > 1 else 0.0


# --------------------------------------------------------------------------- gridworld


GRID_DEFAULTS = dict(sizes=(10,), eps_train=0.3, eps_test=0.1, sample_exponents=(3.0, 3.5, 4.0, 4.5, 5.0, 5.5),
                     deltas=(0.1, 0.5, 0.9), delta_collect=0.5, horizon=200, gamma=0.99, rollouts=1000,
                     sweep=True, baseline_is=True)
GRID_TRAIN = dict(TRAIN_KEYS, function_class="tabular", batch_size=0, iterations=100, lr=1.0, lam=0.0)


def zeta_support(env_tr: Gridworld) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All nonterminal ``(s, a, s')`` with ``P_tr(s'|s,a) > 0``."""
    s, a, sn = [], [], []
    for i in env_tr.nonterminal_states():
        for act in range(4):
            for j in sorted(env_tr.row(i, act)):
                s.append(env_tr.cell(i))
                a.append(act)
                sn.append(env_tr.cell(j))
    return np.array(s), np.array(a), np.array(sn)


def zeta_l1_error(est: ZetaEstimator, env_tr: Gridworld, env_te: Gridworld) -> float:
    s, a, sn = zeta_support(env_tr)
    truth = gridworld_oracle(env_tr, env_te).values(s, a, sn)
    return float(np.mean(np.abs(est.values(s, a, sn) - truth)))


def _grid_seed(job) -> dict:
    size, seed, p, train = job
    env_tr = Gridworld(GridworldSpec(size, p["eps_train"]))
    env_te = Gridworld(GridworldSpec(size, p["eps_test"]))
    expert = env_tr.expert_policy()
    behavior = delta_mixture(expert, p["delta_collect"])
    ns = [int(round(10**e)) for e in p["sample_exponents"]]
    n_max = max(ns)
    dte = collect_dataset(env_te, behavior, n_max, child_seed(seed, 1), "test", p["horizon"])
    dtr = collect_dataset(env_tr, behavior, n_max, child_seed(seed, 2), "train", p["horizon"])
    s, a, sn = zeta_support(env_tr)
    truth = gridworld_oracle(env_tr, env_te).values(s, a, sn)
    errors, est = [], None
    for k, n in enumerate(ns):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SaturationWarning)  # small samples saturate by design
            m_sas, m_sa, fm = train_zeta_pair(dte.subset(n), dtr.subset(n), _tc(train, child_seed(seed, 3, k)))
        est = ZetaEstimator.learned(m_sas, m_sa, fm)
        errors.append(float(np.mean(np.abs(est.values(s, a, sn) - truth))))
    reports = []
    if p["sweep"]:
        oracle = gridworld_oracle(env_tr, env_te)
        for i, delta in enumerate(p["deltas"]):
            pol = delta_mixture(expert, delta)
            spec = DiscountSpec(p["gamma"], p["horizon"], p["rollouts"])
            sim_seed, tv_seed = child_seed(seed, 4, i), child_seed(seed, 5, i)
            trajs = simulator_rollouts(env_tr, pol, spec, sim_seed)
            reps = [monte_carlo_return(env_te, pol, spec, tv_seed, estimator="TrueValue"),
                    reweighted_return(trajs, est, spec, sim_seed, "OEE"),
                    reweighted_return(trajs, oracle, spec, sim_seed, "Oracle"),
                    reweighted_return(trajs, ZetaEstimator.unit(), spec, sim_seed, "Simulated")]
            if p["baseline_is"]:
                reps.append(is_ope_baseline(dte, pol, behavior, spec))
            for r in reps:
                r.delta = delta
            reports.append(reps)
    return dict(size=size, seed=seed, ns=ns, errors=errors, reports=reports)


def run_gridworld_experiment(cfg: ExperimentConfig, out: str | Path | None = None) -> RunResult:
    p = cfg.section("gridworld", GRID_DEFAULTS)
    train = train_config(cfg, GRID_TRAIN)
    res = RunResult(Path(out or cfg.out))
    jobs = [(size, seed, p, train) for size in p["sizes"] for seed in cfg.seeds]
    runs = _map(_grid_seed, jobs)

    err_rows, sweep_rows = [], []
    for r in runs:
        for n, e in zip(r["ns"], r["errors"]):
            err_rows.append([r["size"], n, r["seed"], e])
        for reps in r["reports"]:
            for rep in reps:
                sweep_rows.append(_report_row([r["size"], r["seed"]], rep))
    res.files.append(write_csv(res.out / "zeta_error.csv", "size,n,seed,error", err_rows))

    series, summary = [], []
    for size in p["sizes"]:
        mine = [r for r in runs if r["size"] == size]
        ns = mine[0]["ns"]
        stats = [_summary([r["errors"][k] for r in mine]) for k in range(len(ns))]
        summary += [[size, n, m, sd] for n, (m, sd) in zip(ns, stats)]
        series.append(Series(f"{size}x{size}", ns, [m for m, _ in stats], [sd for _, sd in stats]))
    res.files.append(write_csv(res.out / "zeta_error_summary.csv", "size,n,mean,std", summary))
    res.files.append(emit_svg_lineplot(FigureSpec("Transition-ratio error", "samples", "mean |zeta_hat - zeta|",
                                                  series, res.out / "zeta_error.svg", log_x=True)))
    res.data["errors"] = {(r["size"], r["seed"]): r["errors"] for r in runs}
    res.data["ns"] = runs[0]["ns"]

    if p["sweep"]:
        res.files.append(write_csv(res.out / "sweep.csv", "size,run_seed," + REPORT_COLUMNS, sweep_rows))
        table = _sweep_table(runs)
        res.data["sweep"] = table
        rows = []
        for size in p["sizes"]:
            names = sorted({k[2] for k in table if k[0] == size}, key=_estimator_order)
            figs = []
            for name in names:
                means = [np.median(table[(size, d, name)]) for d in p["deltas"]]
                spread = [float(np.std(table[(size, d, name)])) for d in p["deltas"]]
                rows += [[size, d, name, m, s] for d, m, s in zip(p["deltas"], means, spread)]
                figs.append(Series(name, list(p["deltas"]), means, spread, role=_role(name)))
            res.files.append(emit_svg_lineplot(FigureSpec(f"Policy sweep, {size}x{size}", "delta",
                                                          "average return", figs, res.out / f"sweep_{size}.svg")))
        res.files.append(write_csv(res.out / "sweep_summary.csv", "size,delta,estimator,median_mean,std_mean", rows))
    res.files.append(write_manifest(res.out, cfg))
    return res


def _sweep_table(runs) -> dict:
    table: dict = {}
    for r in runs:
        for reps in r["reports"]:
            for rep in reps:
                table.setdefault((r["size"], rep.delta, rep.estimator), []).append(rep.mean)
    return table


_ORDER = ["TrueValue", "OEE", "Oracle", "Simulated", "IS", "MLE"]


def _estimator_order(name: str) -> int:
    return _ORDER.index(name) if name in _ORDER else len(_ORDER)


def _role(name: str) -> str:
    return {"TrueValue": "truth", "OEE": "oee", "Simulated": "simulated", "IS": "is", "MLE": "mle",
            "Oracle": "oracle"}.get(name, "")


# --------------------------------------------------------------------------- gaussian


GAUSS_DEFAULTS = dict(p_means=(2.0, 3.0, 4.0), p_std=1.0, q_mean=4.0, q_std=2.0, sizes=(500, 2000, 8000),
                      grid_low=2.0, grid_high=6.0, grid_points=81, control=True, control_n=4000,
                      control_low=3.0, control_high=5.0)
GAUSS_TRAIN = dict(TRAIN_KEYS, iterations=3000, lr=0.05, hidden=(32, 32, 32))


def gaussian_mae(spec: GaussianPairSpec, train: dict, seed: int, grid: np.ndarray):
    xp, xq = gaussian_pair_sample(spec, stream(seed, 0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SaturationWarning)
        model = train_ratio(xp, xq, _tc(train, child_seed(seed, 1)))
    est = model(grid[:, None])
    truth = true_gaussian_ratio(spec, grid)
    return float(np.mean(np.abs(est - truth))), est, truth


def _gauss_job(job):
    spec, train, seed, grid = job
    mae, est, truth = gaussian_mae(spec, train, seed, grid)
    return mae, est, truth


def run_gaussian_experiment(cfg: ExperimentConfig, out: str | Path | None = None) -> RunResult:
    p = cfg.section("gaussian", GAUSS_DEFAULTS)
    train = train_config(cfg, GAUSS_TRAIN)
    res = RunResult(Path(out or cfg.out))
    grid = np.linspace(p["grid_low"], p["grid_high"], p["grid_points"])
    pairs = [GaussianPairSpec(m, p["p_std"], p["q_mean"], p["q_std"]) for m in p["p_means"]]
    jobs, keys = [], []
    for k, pair in enumerate(pairs):
        for n in p["sizes"]:
            for seed in cfg.seeds:
                spec = GaussianPairSpec(pair.p_mean, pair.p_std, pair.q_mean, pair.q_std, n)
                jobs.append((spec, train, child_seed(seed, k, n), grid))
                keys.append((_pair_name(pair), n, seed))
    outs = _map(_gauss_job, jobs)
    mae_rows = [[*key, o[0]] for key, o in zip(keys, outs)]
    res.files.append(write_csv(res.out / "mae.csv", "pair,n,seed,mae", mae_rows))
    med = {}
    for pair in pairs:
        name = _pair_name(pair)
        for n in p["sizes"]:
            med[(name, n)] = float(np.median([r[3] for r in mae_rows if r[0] == name and r[1] == n]))
    res.files.append(write_csv(res.out / "mae_summary.csv", "pair,n,median_mae",
                               [[k[0], k[1], v] for k, v in med.items()]))
    res.data["median_mae"] = med

    curve_rows = []
    first = cfg.seeds[0]
    for pair in pairs:
        name = _pair_name(pair)
        series = []
        for n in p["sizes"]:
            est, truth = next(o[1:] for key, o in zip(keys, outs) if key == (name, n, first))
            curve_rows += [[name, n, x, e, t] for x, e, t in zip(grid, est, truth)]
            series.append(Series(f"n={n}", list(grid), list(est)))
        series.append(Series("analytic", list(grid), list(truth), role="truth"))
        fname = f"ratio_{name.replace('(', '').replace(')', '').replace(',', '_')}.svg"
        res.files.append(emit_svg_lineplot(FigureSpec(f"P = {name}, Q = N({p['q_mean']:g},{p['q_std']:g})", "x",
                                                      "ratio", series, res.out / fname)))
    res.files.append(write_csv(res.out / "curves.csv", "pair,n,x,estimate,truth", curve_rows))

    if p["control"]:
        central = grid[(grid >= p["control_low"]) & (grid <= p["control_high"])]
        rows = []
        for seed in cfg.seeds:
            spec = GaussianPairSpec(p["q_mean"], p["q_std"], p["q_mean"], p["q_std"], p["control_n"])
            _, est, _ = gaussian_mae(spec, train, child_seed(seed, 99), central)
            rows.append([seed, float(np.max(np.abs(est - 1.0)))])
        res.files.append(write_csv(res.out / "control.csv", "seed,max_abs_dev", rows))
        res.data["control"] = [r[1] for r in rows]
    res.files.append(write_manifest(res.out, cfg))
    return res


def _pair_name(spec: GaussianPairSpec) -> str:
    return f"N({spec.p_mean:g},{spec.p_std:g})"


# --------------------------------------------------------------------------- archery


ARCH_DEFAULTS = dict(train_wind_mean=4.0, train_wind_std=2.0, test_wind_means=(2.0, 3.0, 4.0),
                     test_wind_stds=(1.0, 1.0, 1.0), thetas=(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0,
                                                              1.1, 1.2, 1.3, 1.4),
                     n_data=10000, rollouts=1000, flag_factor=2.0, flag_window=0.05)
ARCH_TRAIN = dict(TRAIN_KEYS, iterations=3000, lr=0.05, hidden=(32, 32, 32))


def _arch_job(job):
    seed, k, p, train = job
    tr = Archery(ArcherySpec(p["train_wind_mean"], p["train_wind_std"]))
    te = Archery(ArcherySpec(p["test_wind_means"][k], p["test_wind_stds"][k]))
    behavior = uniform_policy(tr.action_spec)
    dte = collect_dataset(te, behavior, p["n_data"], child_seed(seed, k, 1), "test", 1)
    dtr = collect_dataset(tr, behavior, p["n_data"], child_seed(seed, k, 2), "train", 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SaturationWarning)
        m_sas, m_sa, fm = train_zeta_pair(dte, dtr, _tc(train, child_seed(seed, k, 3)))
    est = ZetaEstimator.learned(m_sas, m_sa, fm)
    spec = DiscountSpec(1.0, 1, p["rollouts"])
    reports, counts = [], []
    for i, theta in enumerate(p["thetas"]):
        pol = Policy("constant", tr.action_spec, value=np.array([theta]), state_dim=1)
        sim_seed = child_seed(seed, k, 4, i)
        trajs = simulator_rollouts(tr, pol, spec, sim_seed)
        reps = [monte_carlo_return(te, pol, spec, child_seed(seed, k, 5, i)),
                reweighted_return(trajs, est, spec, sim_seed, "OEE", on_arrival=True),
                reweighted_return(trajs, ZetaEstimator.unit(), spec, sim_seed, "Simulated", on_arrival=True)]
        for r in reps:
            r.delta = theta
        reports.append(reps)
        counts.append(int(np.sum(np.abs(dte.a.reshape(-1) - theta) <= p["flag_window"])))
    return dict(seed=seed, wind=k, reports=reports, counts=counts)


def run_archery_experiment(cfg: ExperimentConfig, out: str | Path | None = None) -> RunResult:
    p = cfg.section("archery", ARCH_DEFAULTS)
    if len(p["test_wind_means"]) != len(p["test_wind_stds"]):
        raise ValueError("test_wind_means and test_wind_stds differ in length")
    train = train_config(cfg, ARCH_TRAIN)
    res = RunResult(Path(out or cfg.out))
    winds = [f"N({m:g},{s:g})" for m, s in zip(p["test_wind_means"], p["test_wind_stds"])]
    runs = _map(_arch_job, [(seed, k, p, train) for k in range(len(winds)) for seed in cfg.seeds])
    rows = [_report_row([winds[r["wind"]], r["seed"]], rep) for r in runs for reps in r["reports"] for rep in reps]
    res.files.append(write_csv(res.out / "archery.csv", "wind,run_seed," + REPORT_COLUMNS.replace("delta", "theta"),
                               rows))
    thetas = list(p["thetas"])
    summary, flags = [], []
    res.data["abs_err"] = {}
    for k, wind in enumerate(winds):
        mine = [r for r in runs if r["wind"] == k]
        by = {name: np.array([[next(x.mean for x in reps if x.estimator == name) for reps in r["reports"]]
                              for r in mine]) for name in ("TrueValue", "OEE", "Simulated")}
        med = {name: np.median(v, axis=0) for name, v in by.items()}
        oee_err = np.median(np.abs(by["OEE"] - by["TrueValue"]), axis=0)
        sim_err = np.median(np.abs(by["Simulated"] - by["TrueValue"]), axis=0)
        res.data["abs_err"][wind] = (oee_err, sim_err)
        summary += [[wind, t, med["TrueValue"][i], med["OEE"][i], med["Simulated"][i], oee_err[i], sim_err[i]]
                    for i, t in enumerate(thetas)]
        cut = p["flag_factor"] * float(np.median(oee_err))
        count = np.median([r["counts"] for r in mine], axis=0)
        for i, t in enumerate(thetas):
            if oee_err[i] > cut:
                flags.append([wind, t, oee_err[i], int(count[i])])
        series = [Series(name, thetas, list(med[name]), role=_role(name)) for name in ("TrueValue", "OEE", "Simulated")]
        res.files.append(emit_svg_lineplot(FigureSpec(f"Archery, test wind {wind}", "theta", "average return",
                                                      series, res.out / f"archery_{k}.svg")))
    res.files.append(write_csv(res.out / "archery_summary.csv",
                               "wind,theta,true,oee,simulated,oee_abs_err,sim_abs_err", summary))
    res.files.append(write_csv(res.out / "flags.csv", "wind,theta,oee_abs_err,local_data_count", flags))
    res.data["flags"] = flags
    for f in flags:
        res.notes.append(f"wind {f[0]}: large OEE deviation {f[2]:.3g} at theta={f[1]:g} "
                         f"({f[3]} test samples within the window)")
    res.files.append(write_manifest(res.out, cfg))
    return res


# --------------------------------------------------------------------------- cartpole


CART_DEFAULTS = dict(gravity_train=10.0, gravities=(7.5, 10.0, 12.5, 15.0), deltas=(0.0, 0.25, 0.5, 0.75, 1.0),
                     delta_collect=0.5, noise_std=1e-3, n_data=20000, horizon=100, gamma=0.99, rollouts=300,
                     baseline_is=True, baseline_mle=True, cem_generations=30)
CART_TRAIN = dict(TRAIN_KEYS, iterations=1000, lr=0.01, lam=0.1, start_at_one=True)


def _cart_job(job):
    seed, k, p, train, expert = job
    g = p["gravities"][k]
    tr = Cartpole(CartpoleSpec(gravity=p["gravity_train"], noise_std=p["noise_std"]))
    te = Cartpole(CartpoleSpec(gravity=g, noise_std=p["noise_std"]))
    behavior = delta_mixture(expert, p["delta_collect"], expert_weight_is_delta=False)
    dte = collect_dataset(te, behavior, p["n_data"], child_seed(seed, k, 1), "test", p["horizon"])
    dtr = collect_dataset(tr, behavior, p["n_data"], child_seed(seed, k, 2), "train", p["horizon"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SaturationWarning)
        m_sas, m_sa, fm = train_zeta_pair(dte, dtr, _tc(train, child_seed(seed, k, 3)))
    est = ZetaEstimator.learned(m_sas, m_sa, fm)
    reports = []
    for i, delta in enumerate(p["deltas"]):
        pol = delta_mixture(expert, delta, expert_weight_is_delta=False)
        spec = DiscountSpec(p["gamma"], p["horizon"], p["rollouts"])
        sim_seed = child_seed(seed, k, 4, i)
        trajs = simulator_rollouts(tr, pol, spec, sim_seed)
        reps = [monte_carlo_return(te, pol, spec, child_seed(seed, k, 5, i)),
                reweighted_return(trajs, est, spec, sim_seed, "OEE"),
                reweighted_return(trajs, ZetaEstimator.unit(), spec, sim_seed, "Simulated")]
        if p["baseline_is"]:
            reps.append(is_ope_baseline(dte, pol, behavior, spec))
        if p["baseline_mle"]:
            reps.append(mle_baseline(dte, te, pol, spec, child_seed(seed, k, 6, i)))
        for r in reps:
            r.delta = delta
        reports.append(reps)
    return dict(seed=seed, gravity=g, reports=reports)


def run_cartpole_experiment(cfg: ExperimentConfig, out: str | Path | None = None,
                            expert: Policy | None = None) -> RunResult:
    p = cfg.section("cartpole", CART_DEFAULTS)
    train = train_config(cfg, CART_TRAIN)
    res = RunResult(Path(out or cfg.out))
    tr = Cartpole(CartpoleSpec(gravity=p["gravity_train"], noise_std=p["noise_std"]))
    if expert is None:
        expert = cem_train_expert(tr, CemConfig(generations=p["cem_generations"], horizon=p["horizon"]),
                                  seed=child_seed(cfg.seeds[0], 99))
    res.data["expert"] = expert
    jobs = [(seed, k, p, train, expert) for k in range(len(p["gravities"])) for seed in cfg.seeds]
    runs = _map(_cart_job, jobs)
    rows = [_report_row([r["gravity"], r["seed"]], rep) for r in runs for reps in r["reports"] for rep in reps]
    res.files.append(write_csv(res.out / "cartpole.csv", "gravity,run_seed," + REPORT_COLUMNS, rows))
    table: dict = {}
    for r in runs:
        for reps in r["reports"]:
            tv = reps[0]
            for rep in reps:
                table.setdefault((r["gravity"], rep.delta, rep.estimator), []).append(
                    (rep.mean, rep.stderr, rep.mean - tv.mean))
    res.data["table"] = table
    summary = []
    for g in p["gravities"]:
        names = sorted({k[2] for k in table if k[0] == g}, key=_estimator_order)
        series = []
        for name in names:
            means = [float(np.median([v[0] for v in table[(g, d, name)]])) for d in p["deltas"]]
            errs = [float(np.median([abs(v[2]) for v in table[(g, d, name)]])) for d in p["deltas"]]
            summary += [[g, d, name, m, e] for d, m, e in zip(p["deltas"], means, errs)]
            series.append(Series(name, list(p["deltas"]), means, role=_role(name)))
        res.files.append(emit_svg_lineplot(FigureSpec(f"Cartpole, gravity {g:g}", "delta", "average return",
                                                      series, res.out / f"cartpole_g{g:g}.svg")))
    res.files.append(write_csv(res.out / "cartpole_summary.csv",
                               "gravity,delta,estimator,median_mean,median_abs_err", summary))
    w = expert.weights.tolist() + [float(expert.bias)]
    res.files.append(write_manifest(res.out, cfg, {"expert_theta": ",".join(f"{v:.17g}" for v in w)}))
    return res


# --------------------------------------------------------------------------- bounds


BOUND_DEFAULTS = dict(nu=0.5, mu=2.0, delta=0.1, K=10.0, dinf=0.2, T=10, gamma=0.99, R=1.0,
                      ns=(100, 1000, 10000, 100000, 1000000), mode="main")


def run_bounds_experiment(cfg: ExperimentConfig, out: str | Path | None = None) -> RunResult:
    p = cfg.section("bounds", BOUND_DEFAULTS)
    res = RunResult(Path(out or cfg.out))
    reports: list[BoundReport] = []
    for n in p["ns"]:
        b = BoundInputs(p["nu"], p["mu"], int(n), p["delta"], p["K"], p["dinf"], p["T"], p["gamma"], p["R"])
        reports.append(bound_report(b, p["mode"]))
    rows = [[int(n), r.mode, r.M, r.zeta_err, r.return_err_sq] for n, r in zip(p["ns"], reports)]
    res.files.append(write_csv(res.out / "bounds.csv", "n," + BoundReport.CSV_HEADER, rows))
    series = [Series("M", list(p["ns"]), [r.M for r in reports]),
              Series("zeta error", list(p["ns"]), [r.zeta_err for r in reports])]
    res.files.append(emit_svg_lineplot(FigureSpec("Bounds versus sample count", "n", "bound", series,
                                                  res.out / "bounds.svg", log_x=True)))
    res.notes += sorted({n for r in reports for n in r.notes})
    res.data["reports"] = reports
    res.files.append(write_manifest(res.out, cfg))
    return res


RUNNERS = {
    "gridworld": run_gridworld_experiment,
    "gaussian": run_gaussian_experiment,
    "archery": run_archery_experiment,
    "cartpole": run_cartpole_experiment,
    "bounds": run_bounds_experiment,
}


def run_experiment(cfg: ExperimentConfig, out: str | Path | None = None) -> RunResult:
    return RUNNERS[cfg.kind](cfg, out)
