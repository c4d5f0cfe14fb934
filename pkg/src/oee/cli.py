"""``oee`` command line.

    oee gen-data    --env gridworld --source test --n 10000 --out d.tsv
    oee train-ratio --test d_te.tsv --train d_tr.tsv --domain sas --out g.model
    oee zeta        --test d_te.tsv --train d_tr.tsv --out zeta_dir
    oee evaluate    --env gridworld --estimator OEE --zeta zeta_dir --delta 0.5
    oee bounds      --nu 0.5 --mu 2 --n 10000 --delta 0.1 --K 10 --dinf 0.2
    oee experiment  gridworld --config grid.cfg

``--seed``, ``--out`` and ``--config`` are accepted before or after the
subcommand. A config file supplies defaults for a subcommand through a section
of the same name (``[gen-data]``, ``[evaluate]``, ...); flags win over it.
Exit status: 0 on success, 2 on a usage error, 1 when the run itself fails.
"""
from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from oee import __version__
from oee.bounds import BoundInputs, BoundReport, bound_report
from oee.core import (DiscountSpec, EvaluationReport, Policy, TransitionDataset, collect_dataset, delta_mixture,
                      monte_carlo_return, uniform_policy)
from oee.envs.archery import Archery, ArcherySpec
from oee.envs.cartpole import Cartpole, CartpoleSpec
from oee.envs.gridworld import Gridworld, GridworldSpec
from oee.harness.config import KINDS, load_config, parse_config
from oee.ratio import FeatureMap, TrainConfig, load_ratio_model, train_ratio, train_zeta_pair
from oee.zeta import ZetaEstimator, gridworld_oracle, oee_return, simulated_baseline

ENVS = ("gridworld", "cartpole", "archery")


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------- argument parsing


def _common(sub: bool) -> argparse.ArgumentParser:
    # after the subcommand the defaults are suppressed so they do not mask values given before it
    d = argparse.SUPPRESS if sub else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=d if sub else 0, help="base seed (default 0)")
    p.add_argument("--out", default=d, help="output file or directory")
    p.add_argument("--config", default=d, help="config file with a section per subcommand")
    return p


def _env_args(p: argparse.ArgumentParser, test: bool = False) -> None:
    p.add_argument("--env", choices=ENVS)
    p.add_argument("--size", type=int, help="gridworld side length")
    p.add_argument("--eps", type=float, help="gridworld slip probability (simulator)")
    p.add_argument("--gravity", type=float, help="cartpole gravity (simulator)")
    p.add_argument("--noise-std", type=float, help="cartpole state noise")
    p.add_argument("--wind-mean", type=float, help="archery wind mean (simulator)")
    p.add_argument("--wind-std", type=float, help="archery wind std (simulator)")
    if test:
        p.add_argument("--test-eps", type=float)
        p.add_argument("--test-gravity", type=float)
        p.add_argument("--test-wind-mean", type=float)
        p.add_argument("--test-wind-std", type=float)


def _train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--class", dest="function_class", choices=("mlp", "tabular"))
    p.add_argument("--iterations", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int, help="0 means full batch")
    p.add_argument("--lam", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--mu", type=float)


def build_parser() -> argparse.ArgumentParser:
    common = _common(sub=True)
    parser = argparse.ArgumentParser(prog="oee", parents=[_common(sub=False)],
                                     description="Off-environment evaluation with learned transition ratios.")
    parser.add_argument("--version", action="version", version=f"oee {__version__}")
    subs = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = subs.add_parser("gen-data", parents=[common], help="collect a transition dataset")
    _env_args(p)
    p.add_argument("--source", choices=("train", "test"))
    p.add_argument("--n", type=int, help="number of transitions")
    p.add_argument("--delta", type=float, help="behavior mixture parameter")
    p.add_argument("--horizon", type=int)

    p = subs.add_parser("train-ratio", parents=[common], help="fit one density-ratio model")
    p.add_argument("--test", help="dataset supplying P (numerator)")
    p.add_argument("--train", help="dataset supplying Q (denominator)")
    p.add_argument("--domain", choices=("sa", "sas"))
    _train_args(p)

    p = subs.add_parser("zeta", parents=[common], help="fit the (s,a,s') and (s,a) ratio pair")
    p.add_argument("--test")
    p.add_argument("--train")
    p.add_argument("--query", action="append", default=[],
                   help="print zeta at 's1,s2;a;s1_next,s2_next' (repeatable)")
    _train_args(p)

    p = subs.add_parser("evaluate", parents=[common], help="estimate a policy's return in the target env")
    _env_args(p, test=True)
    p.add_argument("--estimator", choices=("OEE", "Oracle", "Simulated", "TrueValue"))
    p.add_argument("--zeta", help="directory written by the zeta subcommand")
    p.add_argument("--delta", type=float)
    p.add_argument("--theta", type=float, help="archery launch angle")
    p.add_argument("--horizon", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--rollouts", type=int)
    p.add_argument("--values", help="also write the per-rollout values to this file")

    p = subs.add_parser("bounds", parents=[common], help="evaluate the finite-sample bounds")
    p.add_argument("--nu", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--K", type=float)
    p.add_argument("--dinf", type=float)
    p.add_argument("--T", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--R", type=float)
    p.add_argument("--mode", choices=("main", "supplementary"))
    p.add_argument("--csv", action="store_true", help="print a CSV row instead of text")

    p = subs.add_parser("experiment", parents=[common], help="run a desk-scale experiment")
    p.add_argument("kind", choices=KINDS)
    return parser


# --------------------------------------------------------------------------- settings


DEFAULTS = {
    "gen-data": dict(env="gridworld", size=10, eps=0.3, gravity=10.0, noise_std=1e-3, wind_mean=4.0, wind_std=2.0,
                     source="test", n=10000, delta=0.5, horizon=200),
    "train-ratio": dict(test=None, train=None, domain="sas", function_class="tabular", iterations=100, lr=1.0,
                        batch_size=0, lam=None, nu=0.1, mu=10.0),
    "zeta": dict(test=None, train=None, function_class="tabular", iterations=100, lr=1.0, batch_size=0, lam=None,
                 nu=0.1, mu=10.0),
    "evaluate": dict(env="gridworld", size=10, eps=0.3, gravity=10.0, noise_std=1e-3, wind_mean=4.0, wind_std=2.0,
                     test_eps=0.1, test_gravity=15.0, test_wind_mean=2.0, test_wind_std=1.0, estimator="OEE",
                     zeta=None, delta=0.5, theta=0.7, horizon=200, gamma=0.99, rollouts=1000),
    "bounds": dict(nu=None, mu=None, n=None, delta=None, K=1.0, dinf=0.0, T=1, gamma=0.99, R=1.0, mode="main"),
}


def _settings(args: argparse.Namespace) -> dict:
    """Defaults, then the config section, then explicit flags."""
    out = dict(DEFAULTS.get(args.command, {}))
    if getattr(args, "config", None):
        from configparser import ConfigParser

        cp = ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
        cp.optionxform = str
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise RuntimeError(f"cannot read config {args.config}: {exc.strerror}") from None
        cp.read_string(text)
        if cp.has_section(args.command):
            for key, val in cp[args.command].items():
                key = key.replace("-", "_")
                if key not in out:
                    raise UsageError(f"[{args.command}] has unknown key {key!r}")
                out[key] = _coerce(val, out[key])
    for key in out:
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    return out


def _coerce(text: str, like):
    text = text.strip()
    if isinstance(like, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    if like is None:
        try:
            return float(text)
        except ValueError:
            return text
    return text


def _need(s: dict, *keys: str) -> None:
    missing = [k for k in keys if s.get(k) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


# --------------------------------------------------------------------------- envs


def make_env(s: dict, test: bool = False):
    kind = s["env"]
    if kind == "gridworld":
        return Gridworld(GridworldSpec(s["size"], s["test_eps"] if test else s["eps"]))
    if kind == "cartpole":
        return Cartpole(CartpoleSpec(gravity=s["test_gravity"] if test else s["gravity"], noise_std=s["noise_std"]))
    return Archery(ArcherySpec(s["test_wind_mean"] if test else s["wind_mean"],
                               s["test_wind_std"] if test else s["wind_std"]))


def make_policy(s: dict, seed: int) -> Policy:
    """Target/behavior policy for ``s['env']``: a delta mixture with the simulator's expert."""
    kind = s["env"]
    if kind == "gridworld":
        expert = Gridworld(GridworldSpec(s["size"], s["eps"])).expert_policy()
        return delta_mixture(expert, s["delta"])
    if kind == "cartpole":
        from oee.harness.cem import cem_train_expert

        sim = Cartpole(CartpoleSpec(gravity=s["gravity"], noise_std=s["noise_std"]))
        return delta_mixture(cem_train_expert(sim, seed=seed), s["delta"], expert_weight_is_delta=False)
    env = Archery(ArcherySpec())
    if s.get("theta") is not None and s.get("command") == "evaluate":
        import numpy as np

        return Policy("constant", env.action_spec, value=np.array([s["theta"]]), state_dim=1)
    return uniform_policy(env.action_spec)


# --------------------------------------------------------------------------- commands


def cmd_gen_data(args, s) -> int:
    _need(s, "n")
    if not getattr(args, "out", None):
        raise UsageError("--out is required")
    env_s = dict(s, test_eps=s["eps"], test_gravity=s["gravity"], test_wind_mean=s["wind_mean"],
                 test_wind_std=s["wind_std"])
    env = make_env(env_s)
    horizon = 1 if s["env"] == "archery" else s["horizon"]
    ds = collect_dataset(env, make_policy(s, args.seed), s["n"], args.seed, s["source"], horizon)
    ds.save(args.out)
    print(f"wrote {len(ds)} transitions ({len(ds.trajectories())} trajectories) from {s['env']} "
          f"[{s['source']}] to {args.out}")
    return 0


def _train_cfg(s, seed) -> TrainConfig:
    return TrainConfig(function_class=s["function_class"], batch_size=s["batch_size"], iterations=s["iterations"],
                       lr=s["lr"], lam=s["lam"], nu=s["nu"], mu=s["mu"], seed=seed)


def cmd_train_ratio(args, s) -> int:
    _need(s, "test", "train")
    if not getattr(args, "out", None):
        raise UsageError("--out is required")
    dte, dtr = TransitionDataset.load(s["test"]), TransitionDataset.load(s["train"])
    from oee.ratio import default_features

    fm = default_features(dte, s["function_class"])
    if s["domain"] == "sa":
        xp, xq = fm.sa(dte.s, dte.a), fm.sa(dtr.s, dtr.a)
    else:
        xp, xq = fm.sas(dte.s, dte.a, dte.s_next), fm.sas(dtr.s, dtr.a, dtr.s_next)
    model = train_ratio(xp, xq, _train_cfg(s, args.seed), s["domain"])
    model.save(args.out)
    curve = Path(str(args.out) + ".curve.csv")
    curve.write_text(model.info.curve_csv())
    print(f"trained {s['function_class']} {s['domain']} ratio on {len(xp)} P / {len(xq)} Q samples; "
          f"final loss {model.info.curve[-1][1]:.6g}; wrote {args.out} and {curve}")
    return 0


def cmd_zeta(args, s) -> int:
    _need(s, "test", "train")
    out = Path(getattr(args, "out", None) or "zeta")
    dte, dtr = TransitionDataset.load(s["test"]), TransitionDataset.load(s["train"])
    m_sas, m_sa, fm = train_zeta_pair(dte, dtr, _train_cfg(s, args.seed))
    out.mkdir(parents=True, exist_ok=True)
    m_sas.save(out / "sas.model")
    m_sa.save(out / "sa.model")
    (out / "features.txt").write_text(fm.token() + "\n")
    (out / "sas.curve.csv").write_text(m_sas.info.curve_csv())
    (out / "sa.curve.csv").write_text(m_sa.info.curve_csv())
    print(f"wrote sas.model, sa.model and features.txt to {out}")
    est = ZetaEstimator.learned(m_sas, m_sa, fm)
    for q in args.query:
        from oee.zeta import zeta_value

        try:
            s_txt, a_txt, sn_txt = q.split(";")
            sv = [float(v) for v in s_txt.split(",")]
            snv = [float(v) for v in sn_txt.split(",")]
            a = int(a_txt) if dte.action_spec.discrete else float(a_txt)
        except ValueError:
            raise UsageError(f"cannot parse query {q!r}; expected 's1,s2;a;s1_next,s2_next'") from None
        print(f"zeta({q}) = {zeta_value(est, sv, a, snv):.6g}")
    return 0


def load_zeta(path: str | Path) -> ZetaEstimator:
    path = Path(path)
    fm = FeatureMap.parse((path / "features.txt").read_text().strip())
    return ZetaEstimator.learned(load_ratio_model(path / "sas.model"), load_ratio_model(path / "sa.model"), fm)


def cmd_evaluate(args, s) -> int:
    s = dict(s, command="evaluate")
    env_tr, env_te = make_env(s), make_env(s, test=True)
    horizon = 1 if s["env"] == "archery" else s["horizon"]
    gamma = 1.0 if s["env"] == "archery" else s["gamma"]
    spec = DiscountSpec(gamma, horizon, s["rollouts"])
    pol = make_policy(s, args.seed)
    est = s["estimator"]
    if est == "TrueValue":
        rep = monte_carlo_return(env_te, pol, spec, args.seed)
    elif est == "Simulated":
        rep = simulated_baseline(env_tr, pol, spec, args.seed)
    elif est == "Oracle":
        if s["env"] != "gridworld":
            raise UsageError("the oracle estimator exists for the gridworld only")
        rep = oee_return(env_tr, pol, gridworld_oracle(env_tr, env_te), spec, args.seed, "Oracle")
    else:
        _need(s, "zeta")
        rep = oee_return(env_tr, pol, load_zeta(s["zeta"]), spec, args.seed)
    rep.delta = s["theta"] if s["env"] == "archery" else s["delta"]
    text = EvaluationReport.CSV_HEADER + "\n" + rep.csv_row() + "\n"
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    print(text, end="")
    if args.values:
        Path(args.values).write_text("value\n" + "".join(f"{v:.17g}\n" for v in rep.values))
    for note in rep.notes:
        print(f"note: {note}", file=sys.stderr)
    return 0



def cmd_bounds(args, s) -> int:
    _need(s, "nu", "mu", "n", "delta")
    b = BoundInputs(s["nu"], s["mu"], int(s["n"]), s["delta"], s["K"], s["dinf"], int(s["T"]), s["gamma"], s["R"])
    rep = bound_report(b, s["mode"])
    text = (BoundReport.CSV_HEADER + "\n" + rep.csv_row() + "\n") if args.csv else rep.text() + "\n"
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    print(text, end="")
    return 0


def cmd_experiment(args, s) -> int:
    from oee.harness.experiments import run_experiment

    cfg = load_config(args.config, args.kind) if getattr(args, "config", None) else \
        parse_config(f"[experiment]\nkind = {args.kind}\nseeds = {args.seed}\n")
    res = run_experiment(cfg, getattr(args, "out", None))
    for f in res.files:
        print(f)
    for note in res.notes:
        print(f"note: {note}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-ratio": cmd_train_ratio,
    "zeta": cmd_zeta,
    "evaluate": cmd_evaluate,
    "bounds": cmd_bounds,
    "experiment": cmd_experiment,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    try:
        settings = _settings(args) if args.command != "experiment" else {}
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args, settings)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"oee: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError, OSError, RuntimeError, FloatingPointError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"oee: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
