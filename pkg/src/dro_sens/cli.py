"""``drosens`` command line: sensitivities, reproduction targets and oracle checks.

Every run writes ``manifest.json`` (the resolved configuration), ``report.json``
and CSV tables into the output directory (``--out``, else ``$DROSENS_OUTPUT_DIR``,
else ``./drosens_out``). Exit codes: 0 success, 1 failed check, 2 invalid
input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .continuous import closed_form_reference, upsilon_hyperbolic, upsilon_mart_parabolic
from .core import CostSpec, LatticeModel, ModelError, WeightedPaths, enumerate_paths, \
    ensure_dir, load_lattice, random_walk, read_ensemble_csv, sample_brownian
from .discrete import upsilon, upsilon_mart
from .malliavin import PayoffError
from .oracle import OracleError, slope_check
from .payoffs import _kv, asian, log_contract, merton, parse_payoff, parse_sigma, \
    parse_utility, quad_var
from .penalty import Penalty, PenaltyError, parse_penalty
from .projection import ProjectionError

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
SIG = 12


class CheckFailed(Exception):
    pass


def _num(x):
    return float(f"{x:.{SIG}g}")


def _round(obj):
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj)) if np.isfinite(obj) else str(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_round(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.{SIG}g}" if isinstance(v, (float, np.floating)) else v for v in row])


# ---------------------------------------------------------------------------
# configuration parsing


def parse_model(spec: str):
    """``walk:N=10,jump=1,p_up=0.5``, ``brownian:T=1,N=64,d=1,M=100000,seed=0``,
    ``lattice:file.json`` or ``ensemble:file.csv``."""
    kind, _, body = spec.partition(":")
    if kind == "walk":
        kv = _kv(body)
        T = kv.get("T")
        return random_walk(int(kv.get("N", 10)), float(kv.get("jump", 1.0)),
                           float(kv.get("p_up", 0.5)), None if T is None else float(T),
                           int(kv.get("d", 1)))
    if kind == "brownian":
        kv = _kv(body)
        return sample_brownian(float(kv.get("T", 1.0)), int(kv.get("N", 64)), int(kv.get("d", 1)),
                               int(kv.get("M", 100000)), int(kv.get("seed", 0)))
    if kind == "lattice":
        return load_lattice(body)
    if kind == "ensemble":
        wp = read_ensemble_csv(body)
        wp.is_martingale = True
        return wp
    raise ModelError(f"unknown model spec {spec!r}")


def _model_T(model):
    if isinstance(model, LatticeModel):
        return float(model.time_grid[-1]) if model.time_grid is not None else float(model.N)
    return model.T


def _per_time_rows(rep, grid):
    return [(n, float(grid[n]), float(c)) for n, c in enumerate(rep.per_time_contribution, 1)]


def _emit(out: Path, manifest: dict, report: dict, tables: dict):
    ensure_dir(out)
    _write_json(out / "manifest.json", manifest)
    _write_json(out / "report.json", report)
    for name, (header, rows) in tables.items():
        _write_csv(out / name, header, rows)
    print(json.dumps(_round(report), indent=2, sort_keys=True))


def _out_dir(args):
    return Path(args.out or os.environ.get("DROSENS_OUTPUT_DIR", "drosens_out"))


def _manifest(args):
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "out")}
    cfg["version"] = __version__
    return cfg


# ---------------------------------------------------------------------------
# commands


def cmd_sens(args) -> int:
    model = parse_model(args.model)
    L = parse_penalty(args.penalty)
    if args.regime == "parabolic":
        if args.p != 2:
            raise ModelError("parabolic scaling is implemented for p = 2 only")
        rep = upsilon_mart_parabolic(model, parse_sigma(args.sigma), parse_utility(args.utility),
                                     L, basis=args.basis, seed=args.seed)
    else:
        f = parse_payoff(args.payoff or "", T=_model_T(model))
        if args.regime == "hyperbolic":
            if args.mart:
                raise ModelError("--mart is not available under hyperbolic scaling")
            rep = upsilon_hyperbolic(model, f, args.p, L, backend=args.backend, basis=args.basis,
                                     seed=args.seed)
        else:
            fn = upsilon_mart if args.mart else upsilon
            rep = fn(model, f, CostSpec(args.p), L, backend=args.backend, basis=args.basis,
                     seed=args.seed)
    wp = enumerate_paths(model) if isinstance(model, LatticeModel) else model
    _emit(_out_dir(args), _manifest(args), rep.to_dict(),
          {"per_time.csv": (["n", "t", "contribution"], _per_time_rows(rep, wp.time_grid))})
    return EXIT_OK


def _strike_grid(wp: WeightedPaths, n_strikes: int):
    avg = wp.paths[:, :, 0].mean(axis=1)
    lo, hi = float(avg.min()), float(avg.max())
    step = (hi - lo) / n_strikes
    strikes = lo + (np.arange(n_strikes) + 0.5) * step
    gap = np.min(np.abs(strikes[:, None] - np.unique(avg)[None, :]))
    if gap <= 1e-9:
        raise CheckFailed("strike grid hits an atom of the average")
    return strikes, float(gap)


def asian_figure(N: int = 10, n_strikes: int = 21):
    """Rows ``(K, upsilon_mart, parametric)`` on the symmetric walk by exact enumeration.

    The parametric sensitivity differentiates the price along jump-size
    scaling and is expressed per unit of adapted transport distance
    (``sqrt(N)`` per unit of scaling for the unit walk, ``p = 2``).
    """
    model = random_walk(N)
    wp = enumerate_paths(model)
    strikes, gap = _strike_grid(wp, n_strikes)
    avg = wp.paths[:, :, 0].mean(axis=1)
    dist = np.sqrt(wp.expect(np.sum(np.diff(wp.paths[:, :, 0], axis=1) ** 2, axis=1)))
    rows = []
    for K in strikes:
        um = upsilon_mart(model, asian(float(K))).upsilon
        raw = float(wp.expect(avg * (avg >= K)))
        rows.append((float(K), um, raw / dist, raw))
    return rows, gap


def _relcheck(name, computed, reference, rtol, extra=None):
    rel = abs(computed - reference) / abs(reference)
    rep = {"target": name, "computed": computed, "closed_form": reference,
           "rel_error": rel, "rtol": rtol, "passed": bool(rel <= rtol)}
    rep.update(extra or {})
    return rep


def cmd_repro(args) -> int:
    out = _out_dir(args)
    tables = {}
    t0 = time.perf_counter()
    if args.target == "asian-figure":
        rows, gap = asian_figure(args.N, args.strikes)
        dominated = [r[1] >= r[2] for r in rows]
        tables["asian_figure.csv"] = (["K", "upsilon_mart", "parametric"], [r[:3] for r in rows])
        report = {"target": "asian-figure", "N": args.N, "n_strikes": len(rows),
                  "atom_gap": gap, "dominance": all(dominated),
                  "parametric_raw": [r[3] for r in rows], "passed": all(dominated)}
    else:
        wp = sample_brownian(args.T, args.N_time, 1, args.M, args.seed)
        if args.target == "merton":
            rep = upsilon_hyperbolic(wp, merton(args.lam, T=args.T), 2.0, Penalty.indicator(1.0))
            report = _relcheck("merton", rep.upsilon,
                               closed_form_reference("merton", lam=args.lam, T=args.T), 0.01)
        elif args.target == "logcontract":
            rep = upsilon_mart_parabolic(wp, parse_sigma(f"const:{args.sigma}"),
                                         parse_utility("quad"), Penalty.indicator(1.0))
            report = _relcheck("logcontract", rep.upsilon,
                               closed_form_reference("logcontract", sigma=args.sigma, T=args.T), 0.02)
        else:
            rep = upsilon_mart_parabolic(wp, parse_sigma("const:1"), parse_utility("quad"),
                                         Penalty.indicator(1.0))
            report = _relcheck("quadvar", rep.upsilon, closed_form_reference("quadvar", T=args.T), 0.01)
        report["report"] = rep.to_dict()
        tables["per_time.csv"] = (["n", "t", "contribution"], _per_time_rows(rep, wp.time_grid))
    report["seconds"] = time.perf_counter() - t0
    manifest = _manifest(args)
    _emit(out, manifest, report, tables)
    if not report["passed"]:
        raise CheckFailed(f"{args.target}: reproduction check failed")
    return EXIT_OK


def cmd_oracle(args) -> int:
    model = parse_model(args.model)
    if not isinstance(model, LatticeModel):
        raise ModelError("the oracle needs a lattice model")
    f = parse_payoff(args.payoff or "", T=_model_T(model))
    deltas = [float(d) for d in args.deltas.split(",") if d]
    if not deltas or min(deltas) <= 0:
        raise ModelError("deltas must be a comma-separated list of positive numbers")
    slope, rep = slope_check(model, f, CostSpec(args.p), parse_penalty(args.penalty), deltas,
                             args.mart, n_starts=args.starts, seed=args.seed)
    rows = [(r["delta"], r["v_hat"], r["gain"], slope, rep["upsilon"], rep["rel_error"],
             "PASS" if rep["passed"] else "FAIL") for r in rep["rows"]]
    _emit(_out_dir(args), _manifest(args), rep,
          {"oracle.csv": (["delta", "v_hat", "gain", "slope", "upsilon", "rel_error", "verdict"], rows)})
    print(f"{'PASS' if rep['passed'] else 'FAIL'} slope={slope:.{SIG}g} "
          f"{rep['kind']}={rep['upsilon']:.{SIG}g}")
    if not rep["passed"]:
        raise CheckFailed("oracle slope does not match the sensitivity")
    return EXIT_OK


def cmd_rerun(args) -> int:
    with open(args.manifest) as fh:
        cfg = json.load(fh)
    cfg.pop("version", None)
    argv = _argv_from_manifest(cfg)
    if args.out:
        argv += ["--out", args.out]
    return main(argv)


def _argv_from_manifest(cfg):
    cmd = cfg.pop("command")
    argv = [cmd]
    if cmd == "sens":
        argv.append(cfg.pop("regime"))
    elif cmd == "repro":
        argv.append(cfg.pop("target"))
    elif cmd == "oracle":
        argv.append(cfg.pop("action"))
    for k, v in cfg.items():
        flag = "--" + k.replace("_", "-")
        if isinstance(v, bool):
            if v:
                argv.append(flag)
        elif v is not None:
            argv += [flag, str(v)]
    return argv


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="drosens", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=0)

    sens = sub.add_parser("sens", help="compute a sensitivity")
    sens.add_argument("regime", choices=["discrete", "hyperbolic", "parabolic"])
    sens.add_argument("--model", default="walk:N=10")
    sens.add_argument("--payoff")
    sens.add_argument("--p", type=float, default=2.0)
    sens.add_argument("--penalty", default="indicator:1")
    sens.add_argument("--mart", action="store_true")
    sens.add_argument("--backend", default="auto", choices=["auto", "analytic", "bump"])
    sens.add_argument("--basis")
    sens.add_argument("--sigma", default="const:0.2")
    sens.add_argument("--utility", default="quad")
    common(sens)
    sens.set_defaults(func=cmd_sens)

    rep = sub.add_parser("repro", help="reproduce a reference example")
    rep.add_argument("target", choices=["asian-figure", "merton", "logcontract", "quadvar"])
    rep.add_argument("--N", type=int, default=10, help="walk length for asian-figure")
    rep.add_argument("--strikes", type=int, default=21)
    rep.add_argument("--T", type=float, default=1.0)
    rep.add_argument("--N-time", type=int, default=64, dest="N_time")
    rep.add_argument("--M", type=int, default=100000)
    rep.add_argument("--lam", type=float, default=0.5)
    rep.add_argument("--sigma", type=float, default=0.2)
    common(rep)
    rep.set_defaults(func=cmd_repro)

    orc = sub.add_parser("oracle", help="brute-force slope check")
    orc.add_argument("action", choices=["check"])
    orc.add_argument("--model", default="walk:N=2")
    orc.add_argument("--payoff")
    orc.add_argument("--p", type=float, default=2.0)
    orc.add_argument("--penalty", default="indicator:1")
    orc.add_argument("--mart", action="store_true")
    orc.add_argument("--deltas", default="0.1,0.05,0.025,0.0125")
    orc.add_argument("--starts", type=int, default=8)
    common(orc)
    orc.set_defaults(func=cmd_oracle)

    rr = sub.add_parser("rerun", help="repeat a run from its manifest.json")
    rr.add_argument("manifest")
    rr.add_argument("--out")
    rr.set_defaults(func=cmd_rerun)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (ModelError, PayoffError, PenaltyError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ProjectionError, OracleError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
