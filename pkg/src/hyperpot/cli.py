"""Command-line entry point: ``hyperpot <command> [options]``.

Every command writes machine-readable output (JSON, or CSV for tables)
with an embedded run manifest. Outputs are byte-identical for identical
flags unless ``--record-time`` adds the wall time to the manifest.

Exit codes: 0 success, 1 a check suite failed, 2 usage or parameter error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .geometry import Ball, Box, cluster_decompose, parse_window
from .kernel import (
    OBSERVABLES,
    dlr_consistency_check,
    point_count,
    premod_swap_check,
)
from .models import (
    BrokenModel,
    HardcoreWRM,
    ModelError,
    PoissonModel,
    PottsGas,
    TimeEvolvedWRM,
    WrmParams,
    widom_rowlinson_potts,
)
from .resum import (
    Variant,
    abs_sum_partial,
    boundary_term,
    hamiltonian_equivalence_check,
    hyperedge_potential_wrm,
    wrm_kappa_inputs,
)
from .sampling import (
    IntensitySpec,
    MarkedConfiguration,
    load_configurations,
    sample_marked_ppp,
)
from .vacuum import VacuumPotential, check_finite_range, phi_n

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _manifest(args: argparse.Namespace, started: float | None) -> dict:
    params = {k: v for k, v in sorted(vars(args).items())
              if k not in ("func", "record_time", "output") and not callable(v)}
    return {
        "command": args.command,
        "parameters": params,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "wall_time": (time.perf_counter() - started) if started is not None else None,
    }


def _emit_json(args, payload: dict, started) -> None:
    payload = {"manifest": _manifest(args, started), **payload}
    _write(args, json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _finite(x: float):
    """JSON has no infinity; report it as a string."""
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _write(args, text: str) -> None:
    if getattr(args, "output", None):
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _read_configs(path: str) -> list[MarkedConfiguration]:
    if path == "-":
        return load_configurations(sys.stdin.read())
    with open(path, encoding="utf-8") as fh:
        return load_configurations(fh.read())


def _window(spec: str, dim: int | None = None):
    try:
        return parse_window(spec, dim)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _wrm_params(args) -> WrmParams:
    try:
        return WrmParams(args.lambda_plus, args.lambda_minus, args.r, args.t)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def build_model(args):
    name = args.model
    if name == "poisson":
        return PoissonModel(IntensitySpec(args.lambda_plus, args.lambda_minus))
    params = _wrm_params(args)
    if name == "twrm":
        return TimeEvolvedWRM(params, absorbed=not getattr(args, "raw", False))
    if name == "hardcore":
        return HardcoreWRM(params)
    if name == "potts":
        return PottsGas(widom_rowlinson_potts(params.r), params.intensities)
    raise UsageError(f"unknown model {name!r}")


def _add_intensity_flags(p, default_plus=2.0, default_minus=1.0):
    p.add_argument("--lambda-plus", type=float, default=default_plus)
    p.add_argument("--lambda-minus", type=float, default=default_minus)


def _add_wrm_flags(p, t_default="1.0"):
    _add_intensity_flags(p)
    p.add_argument("--r", type=float, default=0.5)
    p.add_argument("--t", default=t_default, help="flip time (float or 'inf')")


def _add_common(p, seed_required=False):
    p.add_argument("--seed", type=int, required=seed_required, default=None)
    p.add_argument("--output", help="write to this file instead of stdout")
    p.add_argument("--record-time", action="store_true",
                   help="add the wall time to the manifest (breaks byte-identity)")


# ---------------------------------------------------------------------------
# commands


def cmd_sample(args, started) -> int:
    win = _window(args.window, args.dim)
    try:
        spec = IntensitySpec(args.lambda_plus, args.lambda_minus)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    config = sample_marked_ppp(win, spec, args.seed)
    _emit_json(args, {"configuration": config.to_json(),
                      "counts": {"plus": config.n_plus, "minus": config.n_minus}}, started)
    return EXIT_OK


def cmd_clusters(args, started) -> int:
    configs = _read_configs(args.input)
    out = []
    for config in configs:
        dec = cluster_decompose(config.points, args.r)
        out.append({"n_points": len(config),
                    "clusters": [{"indices": list(b),
                                  "plus": int(np.count_nonzero(config.marks[list(b)] > 0)),
                                  "minus": int(np.count_nonzero(config.marks[list(b)] < 0))}
                                 for b in dec]})
    _emit_json(args, {"r": args.r, "results": out}, started)
    return EXIT_OK


def cmd_vacuum(args, started) -> int:
    model = build_model(args)
    window = _window(args.window) if args.window else None
    phi = VacuumPotential(model, window, cap=args.cap)
    out = []
    for eta in _read_configs(args.input):
        try:
            value = phi(eta)
        except ModelError as exc:
            out.append({"n_points": len(eta), "error": str(exc)})
            continue
        out.append({"n_points": len(eta), "n_plus": eta.n_plus, "n_minus": eta.n_minus,
                    "phi": _finite(value)})
    _emit_json(args, {"model": model.describe(), "results": out}, started)
    return EXIT_OK


def _resum_report(params: WrmParams, variant: str, window, seed: int, dmax: int,
                  n_variants: int = 5) -> dict:
    """Grade one sampled configuration and report cells, partial sums, equivalence."""
    rng = np.random.default_rng(seed)
    psi = hyperedge_potential_wrm(params, variant, dim=window.dim)
    model = psi.phi.model
    config = sample_marked_ppp(window, model.reference_intensities(), rng)
    lam = Box.centered(2.0, window.dim, _centre(window))
    values = psi.evaluate(config)
    cells = [{"anchor": cv.cell.anchor, "m": cv.cell.m, "members": list(cv.cell.members),
              "psi": _finite(cv.value), "terms": cv.n_terms}
             for cv in sorted(values.values(), key=lambda c: (c.cell.anchor, c.cell.m))
             if cv.n_terms]
    deltas = [Box.centered(2.0 + 2 * k, window.dim, _centre(window)) for k in range(dmax)]
    kwargs = wrm_kappa_inputs(params, dim=window.dim) if psi.variant is Variant.TRANSLATION_INVARIANT \
        else {}
    summ = abs_sum_partial(psi, lam, config, deltas, kwargs)
    interiors = [sample_marked_ppp(lam, model.reference_intensities(), rng)
                 for _ in range(n_variants)]
    eq = hamiltonian_equivalence_check(psi.phi, psi, lam, config, interiors)
    ext = config.outside(lam)
    bt = [boundary_term(psi, lam, i.restrict(lam).union(ext)).value for i in interiors]
    return {
        "variant": psi.variant.value,
        "schedule": [psi.schedule.radius(m) for m in range(1, 9)],
        "n_points": len(config),
        "cells": cells,
        "partial_sums": summ.partial_sums,
        "increments": summ.increments,
        "bound_violations": len(summ.bound_violations),
        "density": summ.density,
        "equivalence": {"differences": eq.differences, "spread": eq.spread, "tol": eq.tol,
                        "passed": eq.passed, "boundary_terms": bt},
    }


def _centre(window):
    if isinstance(window, Box):
        return (np.array(window.lo) + np.array(window.hi)) / 2
    if isinstance(window, Ball):
        return np.array(window.center)
    raise UsageError("window must be a box or a ball")


def cmd_resum(args, started) -> int:
    params = _wrm_params(args)
    window = _window(args.window)
    try:
        report = _resum_report(params, args.variant, window, args.seed, args.dmax)
    except ModelError as exc:
        raise UsageError(str(exc)) from exc
    _emit_json(args, report, started)
    return EXIT_OK


def cmd_decay(args, started) -> int:
    if not 0 < args.alpha < 1:
        raise UsageError("alpha must lie in (0, 1)")
    buf = io.StringIO()
    manifest = _manifest(args, started)
    buf.write("# " + json.dumps(manifest, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "phi", "abs_phi_log_n", "tail_bound", "bounded"])
    limit = 2 * math.log(1 / args.alpha) + 1
    for n in args.n:
        value, tail = phi_n(n, args.alpha, tol=args.tol)
        scaled = abs(value) * math.log(n)
        writer.writerow([n, repr(value), repr(scaled), repr(tail), int(scaled <= limit)])
    _write(args, buf.getvalue())
    return EXIT_OK


def cmd_dlr(args, started) -> int:
    model = build_model(args)
    if args.broken:
        model = BrokenModel(model, args.broken)
    lam = _window(args.lam)
    delta = _window(args.delta, lam.dim)
    exterior = _read_configs(args.exterior)[0] if args.exterior else \
        MarkedConfiguration.empty(lam.dim)
    if args.observable not in OBSERVABLES:
        raise UsageError(f"unknown observable {args.observable!r}")
    f = OBSERVABLES[args.observable](lam, args.r)
    report = dlr_consistency_check(model, lam, delta, exterior, f, args.n, args.seed,
                                   n_inner=args.inner)
    _emit_json(args, {"model": model.describe(), "observable": f.name,
                      **report.to_json()}, started)
    return EXIT_OK


# ---------------------------------------------------------------------------
# check suites


def _suite_swap(args, rng) -> dict:
    params = WrmParams(2.0, 1.0, 0.5, 1.0)
    if args.trials == 0:
        return {"passed": True, "note": "no trials"}
    out = {}
    for name, model in (("twrm", TimeEvolvedWRM(params)), ("hardcore", HardcoreWRM(params))):
        rep = premod_swap_check(model, args.trials, seed=rng,
                                intensities=params.intensities.as_dict())
        out[name] = {"max_error": rep.max_error, "structural": rep.structural_failures,
                     "passed": rep.passed()}
    return {"passed": all(v["passed"] for v in out.values()), **out}


def _random_eta(rng, n, spread=1.2, dim=2) -> MarkedConfiguration:
    pts = rng.uniform(0, spread, size=(n, dim))
    marks = rng.choice([1, -1], size=n)
    return MarkedConfiguration(pts, marks, dim=dim)


def _suite_vacuum(args, rng) -> dict:
    if args.trials == 0:
        return {"passed": True, "note": "no trials"}
    phi = VacuumPotential(TimeEvolvedWRM(WrmParams(2.0, 1.0, 0.5, 1.0)))
    near, far = Box((-1.0, -1.0), (2.5, 2.5)), Box((-6.0, -6.0), (8.0, 8.0))
    worst = 0.0
    for _ in range(args.trials):
        eta = _random_eta(rng, int(rng.integers(1, 7)))
        worst = max(worst, abs(phi.in_context(eta, eta, near) - phi.in_context(eta, eta, far)))
        keep = [i for i in range(len(eta)) if rng.uniform() < 0.5]
        if len(keep) < len(eta):
            worst = max(worst, abs(phi.in_context(eta, eta.subset(keep), near)))
    return {"passed": worst < 1e-10, "max_error": worst}


def _suite_range(args, rng) -> dict:
    if args.trials == 0:
        return {"passed": True, "note": "no trials"}
    params = WrmParams(2.0, 1.0, 0.5, 1.0)
    phi = VacuumPotential(PottsGas(widom_rowlinson_potts(params.r), params.intensities))
    etas = []
    while len(etas) < args.trials:
        eta = _random_eta(rng, int(rng.integers(2, 6)), spread=3.0)
        d = np.max(np.linalg.norm(eta.points[:, None] - eta.points[None], axis=2))
        if d > 2 * params.r and np.isfinite(phi(eta)):
            etas.append(eta)
    rep = check_finite_range(phi, 2 * params.r, etas)
    return {"passed": rep.status == "pass", "status": rep.status, "max_abs": rep.max_abs,
            "checked": rep.checked}


def _suite_resum(args, rng) -> dict:
    params = WrmParams(0.3, 0.1, 0.5, 1.0)
    psi = hyperedge_potential_wrm(params, "cyclic")
    lam = Ball((0.0, 0.0), 2.0)
    window = Box.centered(8.0)
    trials = args.trials if args.trials is not None else 5
    if trials == 0:
        return {"passed": True, "note": "no trials"}
    worst_identity = worst_spread = 0.0
    for _ in range(trials):
        ext = sample_marked_ppp(window, params.intensities, rng).outside(lam)
        interiors = [sample_marked_ppp(lam, params.intensities, rng) for _ in range(3)]
        eq = hamiltonian_equivalence_check(psi.phi, psi, lam, ext, interiors)
        worst_spread = max(worst_spread, eq.spread)
        for inner, diff in zip(interiors, eq.differences):
            bt = boundary_term(psi, lam, inner.union(ext)).value
            worst_identity = max(worst_identity, abs(bt - diff))
    return {"passed": worst_identity < 1e-9 and worst_spread < 1e-6,
            "boundary_identity_error": worst_identity, "initial_segment_spread": worst_spread}


def _dlr_setup():
    params = WrmParams(2.0, 1.0, 0.5, 1.0)
    lam, delta = Box.centered(1.0), Box.centered(2.0)
    ext = MarkedConfiguration([[1.5, 0.0], [0.0, -1.4], [-1.6, 0.3]], [1, 1, -1], dim=2)
    return params, lam, delta, ext


def _suite_dlr(args, rng) -> dict:
    params, lam, delta, ext = _dlr_setup()
    n = args.budget
    out = {}
    for name, model in (("poisson", PoissonModel(params.intensities)),
                        ("twrm", TimeEvolvedWRM(params))):
        rep = dlr_consistency_check(model, lam, delta, ext, point_count(lam), n, rng)
        out[name] = {"z": rep.z, "passed": rep.passed}
    return {"passed": all(v["passed"] for v in out.values()), **out}


def _suite_negative(args, rng) -> dict:
    params, lam, delta, ext = _dlr_setup()
    model = BrokenModel(TimeEvolvedWRM(params), 0.1)
    rep = dlr_consistency_check(model, lam, delta, ext, point_count(lam), args.budget, rng)
    return {"passed": not rep.passed, "z": rep.z, "note": "passes when the broken model is detected"}


SUITES = {
    "swap": _suite_swap,
    "vacuum": _suite_vacuum,
    "range": _suite_range,
    "resum": _suite_resum,
    "dlr": _suite_dlr,
    "negative-control": _suite_negative,
}


def cmd_check(args, started) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    results = {}
    for name in names:
        if args.trials is None and name in ("swap", "vacuum", "range"):
            sub = argparse.Namespace(**{**vars(args), "trials": 50})
        else:
            sub = args
        results[name] = SUITES[name](sub, rng)
    passed = all(r["passed"] for r in results.values())
    _emit_json(args, {"passed": passed, "suites": results}, started)
    return EXIT_OK if passed else EXIT_FAIL


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperpot", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample a marked Poisson configuration")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--window", required=True, help="box:x0,y0,x1,y1 or ball:cx,cy,R")
    _add_intensity_flags(p)
    _add_common(p, seed_required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("clusters", help="decompose configurations into 2r-clusters")
    p.add_argument("--input", required=True, help="configuration JSON file or '-'")
    p.add_argument("--r", type=float, default=0.5)
    _add_common(p)
    p.set_defaults(func=cmd_clusters)

    p = sub.add_parser("vacuum", help="vacuum potential of hyperedges")
    p.add_argument("--input", required=True, help="hyperedge configuration(s), JSON")
    p.add_argument("--model", choices=["twrm", "hardcore", "potts", "poisson"], default="twrm")
    _add_wrm_flags(p)
    p.add_argument("--window", help="evaluation window (default: box around the hyperedge)")
    p.add_argument("--raw", action="store_true", help="keep single-site factors in the weight")
    p.add_argument("--cap", type=int, default=20)
    _add_common(p)
    p.set_defaults(func=cmd_vacuum)

    p = sub.add_parser("resum", help="regrouped potential on a sampled configuration")
    p.add_argument("--variant", choices=["cyclic", "ti"], default="cyclic")
    _add_wrm_flags(p)
    p.add_argument("--window", default="box:-4,-4,4,4")
    p.add_argument("--dmax", type=int, default=4, help="number of growing windows")
    _add_common(p, seed_required=True)
    p.set_defaults(func=cmd_resum)

    p = sub.add_parser("decay", help="table of the critical-time cluster potential")
    p.add_argument("--alpha", type=float, default=0.25)
    p.add_argument("--n", type=int, nargs="+", default=[1, 10, 100, 1000, 10000])
    p.add_argument("--tol", type=float, default=1e-12)
    _add_common(p)
    p.set_defaults(func=cmd_decay)

    p = sub.add_parser("dlr", help="two-stage kernel consistency z-score")
    p.add_argument("--model", choices=["twrm", "hardcore", "potts", "poisson"], default="twrm")
    _add_wrm_flags(p)
    p.add_argument("--lam", default="box:-0.5,-0.5,0.5,0.5")
    p.add_argument("--delta", default="box:-1,-1,1,1")
    p.add_argument("--exterior", help="exterior configuration JSON (default: empty)")
    p.add_argument("--observable", default="point_count", choices=sorted(OBSERVABLES))
    p.add_argument("--n", type=int, default=100_000, help="inner-evaluation budget")
    p.add_argument("--inner", type=int, default=20)
    p.add_argument("--broken", type=float, default=0.0,
                   help="negative control: strength of a consistency-breaking factor")
    _add_common(p, seed_required=True)
    p.set_defaults(func=cmd_dlr)

    p = sub.add_parser("check", help="run property suites and aggregate pass/fail")
    p.add_argument("--suite", choices=["all", *SUITES], default="all")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--budget", type=int, default=20_000, help="DLR inner-evaluation budget")
    _add_common(p)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.trials is not None and args.trials < 0 if hasattr(args, "trials") else False:
        parser.error("--trials must be nonnegative")
    started = time.perf_counter() if getattr(args, "record_time", False) else None
    try:
        return args.func(args, started)
    except (UsageError, ModelError, ValueError, OSError) as exc:
        print(f"hyperpot {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
