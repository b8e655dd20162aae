"""Command-line front end.

Every subcommand reads a chain-spec JSON file, prints a JSON summary to
stdout and writes its artifacts into ``--out``. Exit status: 0 on success,
2 when a checked bound is violated, 1 on any error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .chain import fisher_information, relative_entropy
from .chainfile import load_chain_spec
from .errors import ParseError, TICertError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATED = 2


@dataclass
class RunConfig:
    command: str
    chain_path: Path
    out_dir: Path
    seed: int = 0
    budget: Optional[int] = None
    workers: int = 1
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.budget is not None and self.budget <= 0:
            raise ParseError("--budget must be positive")
        if self.workers <= 0:
            raise ParseError("--workers must be positive")


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def _vector(text: str, name: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ParseError(f"{name}: expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ParseError(f"{name}: empty list")
    return np.array(vals)


def _int_list(text: str, name: str) -> List[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ParseError(f"{name}: expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise ParseError(f"{name}: need a nonempty list of positive integers")
    return vals


def _measure(text: Optional[str], chain, name: str, n: int = 1) -> np.ndarray:
    """Parse a measure on E^n: "mu", "uniform" or comma-separated weights."""
    from .spectral import product_stationary

    size = chain.size**n
    if text is None or text == "mu":
        return product_stationary(chain.pi, n)
    if text == "uniform":
        return np.full(size, 1.0 / size)
    v = _vector(text, name)
    if v.size != size:
        raise ParseError(f"{name}: {v.size} weights given, expected {size}")
    if v.min() < 0 or abs(v.sum() - 1.0) > 1e-9:
        raise ParseError(f"{name}: weights must be nonnegative and sum to 1")
    return v / v.sum()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _emit(cfg: RunConfig, name: str, payload: dict) -> None:
    text = dumps(payload)
    _write(cfg.out_dir / f"{name}.json", text)
    sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_info(cfg, chain) -> int:
    sym = chain.symmetrized()
    evals = np.linalg.eigvalsh(sym)
    flux = chain.pi[:, None] * chain.rates
    _emit(cfg, "info", {
        "states": list(chain.space.labels),
        "size": chain.size,
        "mu": chain.pi.tolist(),
        "spectral_gap": float(-evals[-2]) if chain.size > 1 else 0.0,
        "detailed_balance_residual": float(np.abs(flux - flux.T).max()),
        "diameter": float(chain.space.dist.max()),
    })
    return EXIT_OK


def cmd_fisher(cfg, chain) -> int:
    nu = _measure(cfg.options["nu"], chain, "--nu")
    _emit(cfg, "fisher", {"nu": nu.tolist(), "fisher_information": fisher_information(chain, nu)})
    return EXIT_OK


def cmd_entropy(cfg, chain) -> int:
    nu = _measure(cfg.options["nu"], chain, "--nu")
    _emit(cfg, "entropy", {"nu": nu.tolist(), "relative_entropy": relative_entropy(nu, chain.pi)})
    return EXIT_OK


def cmd_wasserstein(cfg, chain) -> int:
    from .transport import kantorovich_dual, wasserstein

    p = cfg.options["p"]
    nu = _measure(cfg.options["nu"], chain, "--nu")
    mu = _measure(cfg.options["mu"], chain, "--mu")
    value, plan = wasserstein(chain.space, p, nu, mu)
    out = {"p": p, "nu": nu.tolist(), "mu": mu.tolist(), "value": value, "duality_gap": plan.duality_gap}
    if p == 1:
        dual, pot = kantorovich_dual(chain.space, nu, mu)
        out["kantorovich_dual"] = dual
        out["potential"] = pot.values.tolist()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    plan.to_csv(cfg.out_dir / "plan.csv")
    _emit(cfg, "wasserstein", out)
    return EXIT_OK


def cmd_fklograte(cfg, chain) -> int:
    from .spectral import EXPM_LIMIT, fk_lograte, fk_lograte_dual, fk_opnorm_expm

    f = _vector(cfg.options["f"], "--f")
    if f.size != chain.size:
        raise ParseError(f"--f: {f.size} values given, expected {chain.size}")
    t = cfg.options["t"]
    value = fk_lograte(chain, f)
    dual, arg = fk_lograte_dual(chain, f, seed=cfg.seed)
    out = {"f": f.tolist(), "t": t, "lograte": value, "dual": dual, "dual_maximizer": arg.weights.tolist()}
    if chain.size <= EXPM_LIMIT:
        out["expm"] = fk_opnorm_expm(chain, f, t)
    _emit(cfg, "fklograte", out)
    return EXIT_OK


def _ledger_csv(path: Path, cert) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["probe", "lambda", "lhs", "rhs", "slack"])
        for r in cert.dual_ledger:
            w.writerow([r.probe, repr(r.lam), repr(r.lhs), repr(r.rhs), repr(r.slack)])


def cmd_certify(cfg, chain) -> int:
    from .certify import SLACK_TOL, best_constant

    o = cfg.options
    cert = best_constant(chain, o["ineq"], o["n"], budget=cfg.budget, mode=o["mode"], seed=cfg.seed,
                         probes=o["probes"])
    payload = cert.to_dict()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _ledger_csv(cfg.out_dir / "certificate_ledger.csv", cert)
    _emit(cfg, "certificate", payload)
    if cert.min_slack is not None and cert.min_slack < -SLACK_TOL:
        sys.stderr.write(f"dual check violated: min slack {cert.min_slack:.3g} at probe {cert.argmin}\n")
        return EXIT_VIOLATED
    return EXIT_OK


def cmd_sweep(cfg, chain) -> int:
    from .certify import dimension_sweep

    o = cfg.options
    try:
        certs = dimension_sweep(chain, o["ineq"], o["n_max"], mode=o["mode"], budget=cfg.budget, seed=cfg.seed,
                                probes=o["probes"])
    except AssertionError as exc:
        sys.stderr.write(f"sweep check failed: {exc}\n")
        return EXIT_VIOLATED
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    with open(cfg.out_dir / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "constant_lower", "constant_estimate", "diverged", "min_slack"])
        for c in certs:
            w.writerow([c.n, repr(c.constant_lower), repr(c.constant_estimate), int(c.diverged), repr(c.min_slack)])
    consts = [_finite(c.constant_estimate) for c in certs]
    _emit(cfg, "sweep", {
        "ineq": o["ineq"].upper(),
        "mode": o["mode"],
        "constants": consts,
        "strictly_increasing": bool(None not in consts and all(b > a for a, b in zip(consts, consts[1:]))),
        "certificates": [c.to_dict() for c in certs],
    })
    return EXIT_OK


def cmd_sanov(cfg, chain) -> int:
    from .sanov import builtin_functional, convergence_experiment

    o = cfg.options
    f = None if o["f"] is None else _vector(o["f"], "--f")
    F = builtin_functional(o["F"], chain, f=f, M=o["M"])
    exp = convergence_experiment(chain, F, o["n_list"], t=o["t"], budget=cfg.budget, rate=o["rate"], seed=cfg.seed)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    exp.to_csv(cfg.out_dir / "sanov.csv", timing=o["timing"])
    ok = exp.lower_trend_ok()
    _emit(cfg, "sanov", {
        "F": F.name,
        "rate": o["rate"],
        "t": o["t"],
        "rhs": exp.rhs,
        "maximizer": exp.maximizer.weights.tolist(),
        "n": list(exp.n_list),
        "gap": exp.gaps.tolist(),
        "lower_trend_ok": ok,
        "gap_shrinks": exp.gap_shrinks(),
    })
    if not ok:
        sys.stderr.write("lower-bound trend violated: rhs - lhs(n) grew along n\n")
        return EXIT_VIOLATED
    return EXIT_OK


def cmd_deviate(cfg, chain) -> int:
    from .mc_sim import default_observable, deviation_table, write_csv

    o = cfg.options
    n = o["n"]
    nu0 = _measure(o["nu0"], chain, "--nu0", n)
    f = default_observable(chain, n) if o["f"] is None else _vector(o["f"], "--f")
    if o["paths"] <= 0:
        raise ParseError("--paths must be positive")
    table = deviation_table(chain, n, nu0, f, o["t"], o["r_list"], o["paths"], o["C"], seed=cfg.seed,
                            workers=cfg.workers, mode=o["mode"], budget=cfg.budget)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(table, cfg.out_dir / "deviation.csv")
    bad = [e for e in table if e.violated]
    _emit(cfg, "deviation", {
        "n": n, "t": o["t"], "C": o["C"], "paths": o["paths"],
        "rows": [{"r": e.r, "p_hat": e.p_hat, "wilson_low": e.wilson_low, "wilson_high": e.wilson_high,
                  "bound": e.bound, "l2_factor": e.l2_factor, "violated": e.violated} for e in table],
    })
    for e in bad:
        sys.stderr.write(f"bound violated at r={e.r!r}, t={e.t!r}: wilson_low {e.wilson_low!r} > bound {e.bound!r}\n")
    return EXIT_VIOLATED if bad else EXIT_OK


COMMANDS = {
    "info": cmd_info,
    "fisher": cmd_fisher,
    "entropy": cmd_entropy,
    "wasserstein": cmd_wasserstein,
    "fklograte": cmd_fklograte,
    "certify": cmd_certify,
    "sweep": cmd_sweep,
    "sanov": cmd_sanov,
    "deviate": cmd_deviate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("chain", help="chain-spec JSON file")
    common.add_argument("--out", default="out", help="artifact directory (default: out)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--budget", type=int, default=None, help="max product states (default: TI_CERT_BUDGET or 60000)")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)

    parser = argparse.ArgumentParser(prog="ticert", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("info", parents=[common], help="chain summary")
    for name in ("fisher", "entropy"):
        p = sub.add_parser(name, parents=[common], help=f"{name} of a measure relative to mu")
        p.add_argument("--nu", required=True, help="comma-separated weights")
    p = sub.add_parser("wasserstein", parents=[common], help="W_p distance, plan and W1 dual")
    p.add_argument("--nu", required=True)
    p.add_argument("--mu", default=None, help="second measure (default: invariant measure)")
    p.add_argument("--p", type=int, choices=(1, 2), default=1)
    p = sub.add_parser("fklograte", parents=[common], help="Feynman-Kac growth rate by three routes")
    p.add_argument("--f", required=True, help="potential, comma-separated")
    p.add_argument("--t", type=float, default=1.0)

    for name in ("certify", "sweep"):
        p = sub.add_parser(name, parents=[common],
                           help="best constant for one n" if name == "certify" else "best W1 constants for n = 1..N")
        p.add_argument("--ineq", choices=("w1i", "w2i", "w1h", "w2h") if name == "certify" else ("w1i", "w1h"),
                       default="w1i")
        if name == "certify":
            p.add_argument("--n", type=int, default=1)
        else:
            p.add_argument("--n-max", type=int, default=3)
        p.add_argument("--mode", choices=("l2", "l1"), default="l2")
        p.add_argument("--probes", type=int, default=200 if name == "certify" else 50)

    p = sub.add_parser("sanov", parents=[common], help="Laplace-principle convergence table")
    p.add_argument("--F", choices=("linear", "quadratic", "clipw2"), default="linear")
    p.add_argument("--n-list", default="1,2,3,4,5,6")
    p.add_argument("--f", default=None, help="coefficients for linear/quadratic (default 0,2,4,...)")
    p.add_argument("--M", type=float, default=1.0, help="clip level for clipw2")
    p.add_argument("--t", type=float, default=1.0, help="recorded only")
    p.add_argument("--rate", choices=("fisher", "entropy"), default="fisher")
    p.add_argument("--timing", action="store_true", help="record wall times (breaks byte-identical reruns)")

    p = sub.add_parser("deviate", parents=[common], help="Monte Carlo deviation probabilities against the bound")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--t", type=float, default=50.0)
    p.add_argument("--r-list", default="0.05,0.1,0.2")
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--C", type=float, required=True, help="W1I constant for the bound")
    p.add_argument("--nu0", default="mu", help="initial law on E^n: mu, uniform, or weights")
    p.add_argument("--f", default=None, help="observable on E^n (default: scaled distance to state 0)")
    p.add_argument("--mode", choices=("l2", "l1"), default="l2")
    return parser


def _options(args) -> dict:
    o = {k: v for k, v in vars(args).items() if k not in ("command", "chain", "out", "seed", "budget", "workers")}
    if "n_list" in o:
        o["n_list"] = _int_list(o["n_list"], "--n-list")
    if "r_list" in o:
        o["r_list"] = [float(x) for x in _vector(o["r_list"], "--r-list")]
    for key in ("n", "n_max"):
        if key in o and o[key] < 1:
            raise ParseError(f"--{key.replace('_', '-')} must be at least 1")
    return o


def run(cfg: RunConfig) -> int:
    chain = load_chain_spec(cfg.chain_path)
    return COMMANDS[cfg.command](cfg, chain)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig(args.command, Path(args.chain), Path(args.out), args.seed, args.budget, args.workers,
                        _options(args))
    except TICertError as exc:
        sys.stderr.write(f"error [{exc.code}]: {exc}\n")
        return EXIT_ERROR
    saved = os.environ.get("TI_CERT_BUDGET")
    try:
        # inner calls that take no budget argument read the environment
        if cfg.budget is not None:
            os.environ["TI_CERT_BUDGET"] = str(cfg.budget)
        return run(cfg)
    except TICertError as exc:
        sys.stderr.write(f"error [{exc.code}]: {exc}\n")
        return EXIT_ERROR
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"error [cli.{type(exc).__name__}]: {exc}\n")
        return EXIT_ERROR
    finally:
        if saved is None:
            os.environ.pop("TI_CERT_BUDGET", None)
        else:
            os.environ["TI_CERT_BUDGET"] = saved


if __name__ == "__main__":
    sys.exit(main())
