"""Command-line front end.

Every command writes one result JSON (stdout unless ``--out``) carrying the
scenario hash, seed, worker count and package version, and optionally a CSV
curve.  Exit status: 0 success, 1 bad input, 2 an invariant failed.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from importlib import metadata, resources
from pathlib import Path

import jsonschema
import numpy as np

from . import bounds as bd
from .nash_verify import atom_diagnostic, certify
from .psam import dependent_round, psam_efficiency, psam_fractional, psam_pure_nash, psam_regret
from .simultaneous import (
    product_bkv_profile,
    scan_poa_bound,
    validate_inequality_1,
    validate_inequality_2,
)
from .single_item import (
    T_MINIMIZER,
    PrizeVector,
    SingleItemInstance,
    bkv_worst_equilibrium,
    equilibrium_welfare,
    first_price_worst_case,
    max_bid_lower_bound_check,
    q_mechanism_equilibrium,
    revenue_closed_form,
    simulate,
    welfare_T,
)
from .strategies import expected_max_bid
from .valuations import MultiUnitValuation, XOSValuation, brute_force_multiunit

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2


class InputError(Exception):
    pass


def version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def load_schema(name: str) -> dict:
    return json.loads(resources.files("allpay").joinpath("schemas", name).read_text())


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def validate(doc, schema_name: str):
    validator = jsonschema.Draft202012Validator(load_schema(schema_name))
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{_pointer(e.absolute_path)}: {e.message}" for e in errors]
        raise InputError(f"document does not match {schema_name}:\n  " + "\n  ".join(lines))


def load_scenario(path: str | None):
    """Return (scenario dict, sha256 of its bytes)."""
    if path is None:
        return {}, None
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read scenario: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InputError(f"scenario is not valid JSON: {exc}") from exc
    validate(doc, "scenario.schema.json")
    return doc, hashlib.sha256(raw).hexdigest()


def _integer(text: str, lowest: int) -> int:
    try:
        x = int(text)
    except ValueError:
        try:
            f = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}")
        if not math.isfinite(f) or f != int(f):
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
        x = int(f)
    if x < lowest:
        raise argparse.ArgumentTypeError(f"expected an integer >= {lowest}, got {text!r}")
    return x


def count(text: str) -> int:
    """Positive integer that may be written as 1e6."""
    return _integer(text, 1)


def seed_value(text: str) -> int:
    s = _integer(text, 0)
    if s >= 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return s


def _clean(obj):
    """JSON-ready copy: numpy scalars unwrapped, non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


class Context:
    """Merged view of flags (which win) and scenario fields."""

    def __init__(self, args, scenario: dict, digest: str | None):
        self.args = args
        self.scenario = scenario
        self.digest = digest
        run = scenario.get("run", {})
        self.params = scenario.get("params", {})
        self.samples = args.samples if args.samples is not None else run.get("samples")
        self.seed = args.seed if args.seed is not None else run.get("seed")
        self.grid = args.grid if args.grid is not None else run.get("grid_size")
        self.tol = args.tol if args.tol is not None else run.get("tol")
        self.workers = args.workers if args.workers is not None else run.get("workers", 1)
        self.out = args.out if args.out is not None else scenario.get("output")

    def param(self, name, default=None):
        flag = getattr(self.args, name, None)
        if flag is not None:
            return flag
        return self.params.get(name, default)

    def need_seed(self):
        if self.samples and self.seed is None:
            raise InputError("a seed is required for Monte Carlo runs (--seed or run.seed)")


def _write_csv(path: str | None, header, rows):
    if not path:
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) for x in row])


def _estimates(est: dict) -> dict:
    return {k: {"mean": e.mean, "stderr": e.stderr, "samples": e.samples} for k, e in est.items()}


# -- commands ----------------------------------------------------------------


def _single_instance(ctx: Context):
    values = ctx.scenario.get("values")
    if values is not None:
        inst = SingleItemInstance(tuple(values))
        if inst.n < 2 or inst.v1 <= 0:
            raise InputError("need at least two values with a positive top value")
        return inst, inst.v2 / inst.v1
    v = ctx.param("v", T_MINIMIZER)
    n = ctx.param("n", 2)
    if not 0 < v <= 1 or n < 2:
        raise InputError("need 0 < v <= 1 and n >= 2")
    return SingleItemInstance.top_vs_rest(n, v), v


def cmd_single_poa(ctx: Context):
    inst, v = _single_instance(ctx)
    grid = ctx.grid or 4097
    profile = bkv_worst_equilibrium(inst, grid)
    welfare = equilibrium_welfare(profile, inst)
    res = {"n": inst.n, "values": list(inst.values), "welfare": welfare, "opt": inst.v1, "poa": inst.v1 / welfare}
    if 0 < v < 1:
        T = welfare_T(v)
        res.update(limit_welfare=T * inst.v1, limit_poa=1.0 / T)
    eh = expected_max_bid(profile, 0)
    inv = {"max_bid_at_least_half_v2": eh >= inst.v2 / 2 - 1e-9, "no_interior_atoms": atom_diagnostic(profile)["clean"]}
    res["expected_max_bid"] = eh
    if ctx.samples:
        ctx.need_seed()
        est = simulate(profile, inst.values, ctx.samples, ctx.seed, workers=ctx.workers)
        res["monte_carlo"] = _estimates(est)
        res["monte_carlo_poa"] = inst.v1 / est["welfare"].mean
        cert = certify("single-allpay", profile, inst.values, eps=ctx.tol, grid_size=400,
                       samples=ctx.samples, seed=ctx.seed, workers=ctx.workers)
        res["certificate"] = cert.to_dict()
        inv["certified"] = cert.certified
    lo, hi, steps = ctx.args.min or 0.01, ctx.args.max or 0.99, ctx.args.steps or 99
    vs = np.linspace(lo, min(hi, 1 - 1e-9), steps)
    _write_csv(ctx.args.csv, ("v", "T", "poa_limit"), [(x, welfare_T(x), 1 / welfare_T(x)) for x in vs])
    return res, inv


def cmd_single_revenue(ctx: Context):
    v = ctx.param("v", 0.01)
    k = ctx.param("k", 200)
    if not 0 < v < 1:
        raise InputError("need 0 < v < 1")
    inst = SingleItemInstance((1.0, v))
    rev = revenue_closed_form(v)
    eh, bound, holds = max_bid_lower_bound_check(inst, k, ctx.grid or 4097)
    res = {"v": v, "k": k, "revenue_limit": rev, "revenue_ratio": rev / v, "max_bid": eh, "max_bid_ratio": eh / v}
    inv = {"max_bid_at_least_half_v2": bool(holds)}
    q1, q2 = ctx.param("q1"), ctx.param("q2")
    if (q1 is None) != (q2 is None):
        raise InputError("give both q1 and q2")
    if q1 is not None:
        q = PrizeVector.top_two(q1, q2)
        n = ctx.param("n", 3)
        profile, qrev, qmax = q_mechanism_equilibrium(v, q, n, ctx.grid or 4097)
        values = (1.0, v) + (0.0,) * (n - 2)
        qres = {"q": list(q.q), "revenue": qrev, "max_bid": qmax, "below_half_v2": qrev < v / 2}
        if ctx.samples:
            ctx.need_seed()
            est = simulate(profile, values, ctx.samples, ctx.seed, q=q, workers=ctx.workers)
            qres["monte_carlo"] = _estimates(est)
            qres["revenue_within_3sigma"] = est["revenue"].within(qrev)
            cert = certify("single-allpay", profile, values, eps=ctx.tol, samples=ctx.samples,
                           seed=ctx.seed, q=q, workers=ctx.workers)
            qres["certificate"] = cert.to_dict()
            inv["q_mechanism_certified"] = cert.certified
        res["q_mechanism"] = qres
    lo, hi, steps = ctx.args.min or 0.01, ctx.args.max or 0.99, ctx.args.steps or 99
    vs = np.linspace(lo, min(hi, 1 - 1e-9), steps)
    _write_csv(ctx.args.csv, ("v", "revenue", "ratio"), [(x, revenue_closed_form(x), revenue_closed_form(x) / x) for x in vs])
    return res, inv


def _multiunit(ctx: Context):
    vals = ctx.scenario.get("valuations")
    m = ctx.param("m")
    if vals is None:
        n = ctx.param("n", 50)
        return [MultiUnitValuation([0.0, 1.0])] + [MultiUnitValuation([0.0, 0.5])] * (n - 1), 1
    if any(not isinstance(f, list) for f in vals):
        raise InputError("psam valuations must be vectors f(0..m)")
    fs = [MultiUnitValuation(f) for f in vals]
    m = fs[0].m if m is None else m
    if any(f.m != m for f in fs):
        raise InputError(f"every valuation must list f(0..{m})")
    return fs, m


def cmd_psam_solve(ctx: Context):
    fs, m = _multiunit(ctx)
    try:
        ne, opt, ratio = psam_efficiency(fs, m, check=False)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    bids = psam_pure_nash(fs, m)
    regret = psam_regret(fs, bids, m)
    lottery = dependent_round(psam_fractional(bids, m))
    lottery.validate()
    res = {"n": len(fs), "m": m, "bids": bids, "aggregate_bid": bids.sum(), "shares": bids / bids.sum(),
           "welfare": ne, "opt": opt, "efficiency": ratio, "max_regret": regret.max(),
           "lottery": [{"allocation": list(a), "probability": p} for a, p in lottery.support]}
    inv = {"efficiency_at_least_3_4": ratio >= 0.75 - 1e-6, "zero_regret": bool(regret.max() <= 1e-8)}
    if len(fs) <= 4 and m <= 8:
        _, bf = brute_force_multiunit(fs, m)
        res["opt_brute_force"] = bf
        inv["greedy_matches_brute_force"] = abs(bf - opt) <= 1e-9
    return res, inv


def _xos(ctx: Context):
    vals = ctx.scenario.get("valuations")
    if vals is None:
        return [XOSValuation.additive([1.0, 0.5]), XOSValuation.additive([0.5, 1.0])]
    out = []
    for V in vals:
        out.append(XOSValuation(V["clauses"]) if isinstance(V, dict) else XOSValuation.additive(V))
    return out


def cmd_simul_validate(ctx: Context):
    Vs = _xos(ctx)
    samples = ctx.samples or 10**6
    ctx.samples = samples
    ctx.need_seed()
    try:
        profile = product_bkv_profile(Vs, ctx.grid or 4097)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    r1 = validate_inequality_1(profile, Vs, samples, ctx.seed, ctx.workers)
    r2 = validate_inequality_2(profile, Vs, samples, ctx.seed, ctx.workers)
    res = {"inequality_1": r1, "inequality_2": r2}
    inv = {"inequality_1": r1["holds"], "inequality_2": r2["holds"]}
    return res, inv


def cmd_bounds_prop1(ctx: Context):
    n = ctx.param("n", 10)
    product = ctx.param("product", 0.25)
    draws = ctx.samples or 10**5
    seed = ctx.seed = ctx.seed if ctx.seed is not None else 0
    holds, gap = bd.prop1_random_check(n, draws, seed)
    search = bd.prop1_min_search(n, product, starts=max(32, ctx.args.starts or 32), seed=seed)
    res = {"n": n, "product": product, "random_draws": draws, "smallest_gap": gap,
           "min_found": search.minimum, "bound": search.bound, "boundary_hit": search.boundary_hit,
           "argmin_G": search.G, "argmin_g_relative": search.g / search.g.min(), "starts": search.starts}
    return res, {"random_draws_hold": holds, "search_above_bound": search.holds}


def cmd_bounds_rfv(ctx: Context):
    lam = ctx.param("lambda", 0.56)
    draws = ctx.samples or 1000
    seed = ctx.seed = ctx.seed if ctx.seed is not None else 0
    t = lam * lam
    A, R = bd.R_value(bd.hatF_family(0.0, t, 1.0), 1.0, lam)
    low = bd.R_lower_bound(lam)
    rng = np.random.default_rng(seed)
    worst, worst_hat = math.inf, math.inf
    for _ in range(draws):
        F = bd.random_cdf(rng)
        r = bd.R_value(F, 1.0, lam)[1]
        worst = min(worst, r - low)
        worst_hat = min(worst_hat, r - bd.R_value(bd.hatF_construct(F, 1.0), 1.0, lam)[1])
    res = {"lambda": lam, "lower_bound": low, "tight_family_R": R, "tight_family_gap": R - low,
           "random_draws": draws, "smallest_gap": worst, "smallest_hatF_gain": worst_hat}
    inv = {"tight_family": abs(R - low) <= 1e-9, "random_above_bound": worst >= -1e-6,
           "hatF_does_not_increase_R": worst_hat >= -1e-9}
    return res, inv


def cmd_bounds_lambda(ctx: Context):
    lo, hi, steps = ctx.args.min or 0.01, ctx.args.max or 1.0, ctx.args.steps or 200
    if not 0 < lo < hi or steps < 2:
        raise InputError("need 0 < min < max and steps >= 2")
    lams, vals, arg, best = scan_poa_bound(lo, hi, steps)
    _write_csv(ctx.args.csv, ("lambda", "poa_bound"), zip(lams, vals))
    return {"argmin": arg, "min": best, "steps": steps}, {"bound_below_2": best < 2.0}


def cmd_verify(ctx: Context):
    mech = ctx.scenario.get("mechanism")
    if mech is None:
        raise InputError("verify needs --scenario with a mechanism")
    grid = ctx.grid or 400
    if mech == "single-allpay":
        ctx.samples = ctx.samples or 10**6
        ctx.need_seed()
        q1, q2 = ctx.param("q1"), ctx.param("q2")
        if q1 is not None and q2 is not None:
            q = PrizeVector.top_two(q1, q2)
            n = ctx.param("n", 3)
            v = ctx.param("v", 0.1)
            profile, _, _ = q_mechanism_equilibrium(v, q, n)
            values = (1.0, v) + (0.0,) * (n - 2)
        else:
            q = None
            inst, _ = _single_instance(ctx)
            profile, values = bkv_worst_equilibrium(inst), inst.values
        cert = certify(mech, profile, values, ctx.tol, grid, ctx.samples, ctx.seed, q=q, workers=ctx.workers)
        diag = atom_diagnostic(profile)
    elif mech == "simultaneous-allpay":
        ctx.samples = ctx.samples or 10**6
        ctx.need_seed()
        Vs = _xos(ctx)
        profile = product_bkv_profile(Vs)
        cert = certify(mech, profile, Vs, ctx.tol, grid, ctx.samples, ctx.seed, workers=ctx.workers)
        diag = atom_diagnostic(profile)
    elif mech == "first-price":
        values = ctx.scenario.get("values")
        if values is None:
            raise InputError("first-price verification needs values")
        bids = ctx.param("bids")
        if bids is None:
            bids = first_price_worst_case(SingleItemInstance(tuple(values)))[0]
        cert = certify(mech, bids, values, ctx.tol, grid)
        diag = None
    elif mech == "psam":
        fs, m = _multiunit(ctx)
        bids = ctx.param("bids")
        bids = psam_pure_nash(fs, m) if bids is None else np.asarray(bids, dtype=float)
        cert = certify(mech, bids, fs, ctx.tol, m=m)
        diag = None
    else:
        raise InputError(f"verify does not handle mechanism {mech!r}")
    res = {"certificate": cert.to_dict()}
    inv = {"certified": cert.certified}
    if diag is not None:
        res["atom_diagnostic"] = diag
        inv["no_interior_atoms"] = diag["clean"]
    return res, inv


COMMANDS = {
    ("single-item", "poa"): cmd_single_poa,
    ("single-item", "revenue"): cmd_single_revenue,
    ("psam", "solve"): cmd_psam_solve,
    ("simul", "validate"): cmd_simul_validate,
    ("bounds", "prop1"): cmd_bounds_prop1,
    ("bounds", "rfv"): cmd_bounds_rfv,
    ("bounds", "lambda"): cmd_bounds_lambda,
    ("verify", None): cmd_verify,
}


def _common(p: argparse.ArgumentParser):
    p.add_argument("--scenario", help="scenario JSON file")
    p.add_argument("--seed", type=seed_value)
    p.add_argument("--samples", type=count)
    p.add_argument("--grid", type=count, help="CDF table size (deviation grid size for verify)")
    p.add_argument("--workers", type=count)
    p.add_argument("--out", help="result JSON path (default stdout)")
    p.add_argument("--tol", type=float, help="certification epsilon")
    p.add_argument("--csv", help="write the command's curve as CSV")
    p.add_argument("--v", type=float)
    p.add_argument("--n", type=count)
    p.add_argument("--k", type=count)
    p.add_argument("--m", type=count)
    p.add_argument("--q1", type=float)
    p.add_argument("--q2", type=float)
    p.add_argument("--lambda", dest="lambda", type=float)
    p.add_argument("--product", type=float, help="fixed product of the G_i (bounds prop1)")
    p.add_argument("--starts", type=count, help="random starts for bounds prop1")
    p.add_argument("--min", type=float)
    p.add_argument("--max", type=float)
    p.add_argument("--steps", type=count)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="allpay", description="All-pay auction and PSAM experiments.")
    parser.add_argument("--version", action="version", version=version())
    sub = parser.add_subparsers(dest="command", required=True)
    for group, actions in (("single-item", ("poa", "revenue")), ("psam", ("solve",)),
                           ("simul", ("validate",)), ("bounds", ("prop1", "rfv", "lambda"))):
        gp = sub.add_parser(group)
        gsub = gp.add_subparsers(dest="action", required=True)
        for a in actions:
            _common(gsub.add_parser(a))
    _common(sub.add_parser("verify"))
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    action = getattr(args, "action", None)
    try:
        scenario, digest = load_scenario(args.scenario)
        ctx = Context(args, scenario, digest)
        if ctx.workers < 1:
            raise InputError("workers must be >= 1")
        results, invariants = COMMANDS[(args.command, action)](ctx)
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AssertionError as exc:
        print(f"invariant failed: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    invariants = {k: bool(v) for k, v in invariants.items()}
    doc = _clean({
        "command": " ".join(x for x in (args.command, action) if x),
        "version": version(),
        "seed": ctx.seed,
        "workers": ctx.workers,
        "scenario_sha256": digest,
        "results": results,
        "invariants": invariants,
        "ok": all(invariants.values()),
    })
    validate(doc, "result.schema.json")
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if ctx.out:
        Path(ctx.out).write_text(text)
    else:
        sys.stdout.write(text)
    if not doc["ok"]:
        failed = [k for k, v in invariants.items() if not v]
        print(f"invariant failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
