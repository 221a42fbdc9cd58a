"""Command-line front end.

Every subcommand writes a versioned JSON report (stdout or ``--out``).
Exit status: 0 success, 1 computation or verification failure, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, config, schemas
from .amplify import ding_counterexample, run_chain, seed_round
from .catalytic import (
    DEFAULT_BROADCAST_ENERGIES,
    SKEW_INFORMATION,
    broadcast3,
    convert_asymptotic,
    reuse_count,
    reuse_schedule,
)
from .protocol import plan_budget, prepare_state, quasi_prepare
from .qcore import (
    DensityMatrix,
    QcatError,
    SystemLayout,
    check_covariance,
    energy,
    format_energy,
    random_density_matrix,
    tensor,
    trace_distance,
)
from .serialize import (
    channel_from_json,
    complex_matrix,
    csv_text,
    dumps,
    overlap_to_json,
    report_to_json,
    state_from_json,
    to_jsonable,
)
from .spectra import coherence_support, maximal_closed_sets, reachable_pairs, substitute
from .synth import overlap, synthesis_fidelity

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    """Bad user input: exit status 2."""


# ---------------------------------------------------------------------------
# input helpers

def _load_json(path: str, what: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"{what}: file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{what}: malformed JSON in {path}: {exc}") from exc


def _prefixed(what: str, exc: Exception) -> str:
    msg = str(exc).strip("'\"")
    return msg if msg.startswith(what + ":") else f"{what}: {msg}"


def _load_state(path: str, what: str) -> tuple[DensityMatrix, dict]:
    obj = _load_json(path, what)
    try:
        schemas.validate(obj, schemas.STATE, what)
        return state_from_json(obj), obj
    except (ValueError, KeyError) as exc:
        raise InputError(_prefixed(what, exc)) from exc


def _load_channel(path: str):
    obj = _load_json(path, "channel")
    try:
        schemas.validate(obj, schemas.CHANNEL, "channel")
        return channel_from_json(obj)
    except (ValueError, KeyError) as exc:
        raise InputError(_prefixed("channel", exc)) from exc


def _load_energies(path: str, what: str) -> tuple[list, list | None]:
    obj = _load_json(path, what)
    try:
        schemas.validate(obj, schemas.ENERGIES, what)
        es = [energy(e) for e in obj["energies"]]
    except (ValueError, KeyError) as exc:
        raise InputError(_prefixed(what, exc)) from exc
    return es, obj.get("support")


def _positive(name: str, value: float) -> float:
    if not (value > 0 and math.isfinite(value)):
        raise InputError(f"{name} must be positive, got {value}")
    return value


# ---------------------------------------------------------------------------
# subcommands; each returns (parameters, result, passed, csv_rows_or_None)

def cmd_amplify(args):
    if not 0 < args.eta0 < 1:
        raise InputError(f"--eta0 must lie in (0, 1), got {args.eta0}")
    if args.rounds < 0:
        raise InputError("--rounds must be >= 0")
    ch = run_chain(args.eta0, args.rounds, gap=energy(args.gap), joint=args.joint)
    result = {
        "eta_sequence": list(ch.eta_sequence),
        "measured_etas": list(ch.measured_etas),
        "catalyst_residuals": list(ch.catalyst_residuals),
        "max_step_deviation": ch.max_step_deviation,
        "fast_path": ch.fast_path,
        "final_system_marginal": complex_matrix(ch.final_system_marginal.data),
    }
    passed = max(ch.catalyst_residuals, default=0.0) <= args.restoration_tol and ch.max_step_deviation <= 1e-10
    rows = [(k, eta) for k, eta in enumerate(ch.eta_sequence)]
    params = {"eta0": args.eta0, "rounds": args.rounds, "gap": args.gap, "joint": args.joint}
    return params, result, passed, (["round", "eta"], rows)


def cmd_counterexample(args):
    if not 0 < args.eta0 < 1:
        raise InputError(f"--eta0 must lie in (0, 1), got {args.eta0}")
    rep = ding_counterexample(args.eta0, reruns=args.reruns)
    result = to_jsonable({k: getattr(rep, k) for k in rep.__dataclass_fields__})
    result["simulated_marginal"] = complex_matrix(rep.simulated_marginal.data)
    result["correlated_catalyst"] = complex_matrix(rep.correlated_catalyst.data)
    result["rerun_marginals"] = [complex_matrix(m.data) for m in rep.rerun_marginals]
    passed = rep.maxdev_sim_poly <= 1e-10
    rows = [(k + 1, float(m.data[0, 1].real)) for k, m in enumerate(rep.rerun_marginals)]
    return {"eta0": args.eta0, "reruns": args.reruns}, result, passed, (["rerun", "offdiag"], rows)


def _ledger_ok(report, tol: float) -> bool:
    return report.ledger.max_residual <= tol and bool(np.isfinite(report.achieved_distance))


def cmd_prepare(args):
    target, _ = _load_state(args.target, "target")
    eps = _positive("--epsilon", args.epsilon)
    rep = prepare_state(target, eps, j_star=args.j_star)
    result = report_to_json(rep, ledger_states=True)
    passed = rep.passed and _ledger_ok(rep, args.restoration_tol) and rep.achieved_distance <= eps
    if args.seed is not None and rep.mixture:
        # sample which spectral branch a single run realizes
        rng = np.random.default_rng(args.seed)
        w = np.array([float(p) for p, _ in rep.mixture])
        result["sampled_branch"] = int(rng.choice(len(w), p=w / w.sum()))
    params = {"target": Path(args.target).name, "epsilon": eps, "j_star": args.j_star, "seed": args.seed}
    return params, result, passed, None


def cmd_quasi_prepare(args):
    rho, rho_obj = _load_state(args.rho, "rho")
    target, tgt_obj = _load_state(args.target, "target")
    eps = _positive("--epsilon", args.epsilon)
    rep = quasi_prepare(rho, target, eps, coherence_tol=args.coherence_tol,
                        rho_support=rho_obj.get("support"), target_support=tgt_obj.get("support"))
    result = report_to_json(rep, ledger_states=True)
    passed = rep.passed and _ledger_ok(rep, args.restoration_tol) and rep.achieved_distance <= eps
    params = {"rho": Path(args.rho).name, "target": Path(args.target).name, "epsilon": eps,
              "coherence_tol": args.coherence_tol}
    return params, result, passed, None


def cmd_overlap(args):
    if args.l < 1:
        raise InputError("--l must be >= 1")
    Ls = range(1, args.l + 1) if args.sweep else [args.l]
    ms = range(0, args.m + 1) if args.sweep else [args.m]
    recs = [overlap(L, m) for L in Ls for m in ms]
    rows = [overlap_to_json(r) for r in recs]
    passed = all(r["exact_value"] >= r["lower_bound"] - 1e-12 for r in rows if r["m"] == 1 and r["L"] % 2 == 0)
    csv_rows = [(r.L, r.m, r.exact_value, r.lower_bound) for r in recs]
    return ({"l": args.l, "m": args.m, "sweep": args.sweep}, {"rows": rows}, passed,
            (["L", "m", "exact", "bound"], csv_rows))


def _witness_json(w: dict) -> list:
    return [{"pair": [k, l], "coefficient": int(m)} for (k, l), m in sorted(w.items())]


def cmd_index_sets(args):
    declared = None
    if args.rho:
        rho, obj = _load_state(args.rho, "rho")
        if len(rho.layout) != 1:
            raise InputError("rho: expected a single-subsystem state")
        src = list(rho.layout.exact_energies)
        declared = obj.get("support")
        sup_src = rho
    else:
        if not args.source:
            raise InputError("need --rho or --source")
        src, declared = _load_energies(args.source, "source")
        if declared is None:
            raise InputError("source: a 'support' list is required without --rho")
        sup_src = np.zeros((len(src), len(src)))
    if args.source and args.rho:
        src2, dec2 = _load_energies(args.source, "source")
        if [Fraction(x) for x in src2] != src:
            raise InputError("source energies disagree with the rho layout")
        declared = declared if declared is not None else dec2
    tgt = src if not args.target else _load_energies(args.target, "target")[0]
    try:
        sup = coherence_support(sup_src, tol=args.coherence_tol, declared=declared)
    except QcatError as exc:
        raise InputError(f"support: {exc}") from exc
    reach = reachable_pairs(sup, src, tgt)
    part = maximal_closed_sets(reach, len(tgt))
    J = []
    exact = True
    for (i, j) in sorted(reach.pairs):
        w = reach.witness(i, j)
        ok = substitute(w, src) == reach.gap((i, j))
        exact &= ok
        J.append({"pair": [i, j], "gap": format_energy(reach.gap((i, j))), "witness": _witness_json(w),
                  "substitutes": ok})
    result = {
        "source_energies": [format_energy(e) for e in src],
        "target_energies": [format_energy(energy(e)) for e in tgt],
        "support": [list(p) for p in sorted(sup.pairs)],
        "I": [list(p) for p in sorted(sup.pairs)],
        "J": J,
        "partition": [list(b) for b in part.blocks],
    }
    params = {"rho": args.rho and Path(args.rho).name, "source": args.source and Path(args.source).name,
              "target": args.target and Path(args.target).name, "coherence_tol": args.coherence_tol}
    return params, result, exact, None


def cmd_convert(args):
    rho, _ = _load_state(args.rho, "rho")
    rho_p, _ = _load_state(args.rho_prime, "rho-prime")
    ch = _load_channel(args.channel)
    if args.n < 1:
        raise InputError("--n must be >= 1")
    eps = _positive("--epsilon", args.epsilon)
    cat, lam, rep = convert_asymptotic(rho, rho_p, ch, args.n, eps)
    cov = check_covariance(lam, tol=args.covariance_tol, seed=args.seed or 0)
    result = {
        "report": report_to_json(rep),
        "register_dimension": args.n,
        "catalyst": complex_matrix(cat.body.data),
        "channel_kraus_count": len(lam.kraus_ops),
        "covariance": to_jsonable(cov),
    }
    passed = (rep.passed and cov.passed and rep.ledger.max_residual <= args.restoration_tol
              and rep.achieved_distance <= eps + 1e-12)
    params = {"rho": Path(args.rho).name, "rho_prime": Path(args.rho_prime).name,
              "channel": Path(args.channel).name, "n": args.n, "epsilon": eps}
    return params, result, passed, None


def cmd_broadcast3(args):
    es = [energy(e) for e in args.energies] if args.energies else list(DEFAULT_BROADCAST_ENERGIES)
    if len(es) != 3:
        raise InputError("--energies needs exactly three values")
    E1, tau, E2, rep = broadcast3(args.delta, es)
    d = rep.details
    cov_ok = (d["covariance_E1"].max_deviation <= args.covariance_tol
              and d["covariance_E2"].max_deviation <= args.covariance_tol)
    result = {
        "report": report_to_json(rep),
        "delta": args.delta,
        "rho_prime_13": to_jsonable(d["rho_prime_13"]),
        "catalyst": complex_matrix(tau.data),
        "stage1_kraus_count": len(E1.kraus_ops),
        "stage2_kraus_count": len(E2.kraus_ops),
    }
    passed = (rep.ledger.max_residual <= min(args.restoration_tol, 1e-12) and cov_ok
              and d["rho_prime_13_error"] <= 1e-10)
    params = {"delta": args.delta, "energies": [format_energy(e) for e in es]}
    return params, result, passed, None


def cmd_reuse(args):
    if args.k < 2 or args.n < 1:
        raise InputError("--k must be >= 2 and --n >= 1")
    sch = reuse_schedule(args.k, args.n)
    checks = {rule: sch.validate(rule) for rule in ("clique", "propagate")}
    result = {
        "K": args.k,
        "n": args.n,
        "copies": sch.copies,
        "count": sch.count,
        "expected_count": reuse_count(args.k, args.n),
        "runs": [[list(inst) for inst in run] for run in sch.runs],
        "validation": {rule: {"passed": v.passed, "violations": [list(map(str, x)) for x in v.violations],
                              "slot_errors": list(v.slot_errors)} for rule, v in checks.items()},
    }
    passed = sch.count == reuse_count(args.k, args.n) and all(v.passed for v in checks.values())
    return {"k": args.k, "n": args.n}, result, passed, None


# ---------------------------------------------------------------------------
# verify

def _verify_checks(rng: np.random.Generator, suite: str):
    """Quick invariant checks per module; yields (module, name, passed, value)."""
    if suite in ("all", "qcore"):
        lay = SystemLayout.single("A", [0, 1, "5/2"]) + SystemLayout.qubit("B")
        rho = random_density_matrix(lay, rng)
        ev = rho.eigvalsh()
        yield "qcore", "random state is a density matrix", bool(ev.min() > -1e-12 and abs(ev.sum() - 1) < 1e-12), \
            float(ev.min())
        a = random_density_matrix(SystemLayout.qubit("A"), rng)
        b = random_density_matrix(SystemLayout.qubit("B"), rng)
        back = tensor(a, b).ptrace(["A"])
        yield "qcore", "partial trace inverts tensor", trace_distance(back, a) < 1e-12, trace_distance(back, a)
    if suite in ("all", "amplify"):
        ch = run_chain(0.5, 1, joint=True)
        yield "amplify", "one round from 0.5 gives 0.515625", abs(ch.eta_sequence[1] - 0.515625) < 1e-15, \
            ch.eta_sequence[1]
        eta = float(rng.uniform(0.1, 0.9))
        ch = run_chain(eta, 3, joint=True)
        res = max(ch.catalyst_residuals)
        yield "amplify", "chain restores catalysts", res < 1e-10, res
        sr = seed_round(eta)
        yield "amplify", "seed round restores catalysts", max(sr.ca_residual, sr.cb_residual) < 1e-10, \
            max(sr.ca_residual, sr.cb_residual)
    if suite in ("all", "synth"):
        L = int(rng.choice([2, 4, 8]))
        f = synthesis_fidelity(np.array([[1, 1], [1, -1]]) / math.sqrt(2), 0, L, SystemLayout.qubit("S"))
        want = 0.5 + overlap(L, 1).exact_value / 2
        yield "synth", "balanced rotation fidelity", abs(f - want) < 1e-9, f
        rec = overlap(2 * int(rng.integers(1, 33)), 1)
        yield "synth", "overlap above lower bound", rec.exact_value >= rec.lower_bound, rec.exact_value
    if suite in ("all", "spectra"):
        src = [energy(x) for x in (0, 1, "3/2", "5/2")]
        sup = coherence_support(np.zeros((4, 4)), declared=[(0, 1), (2, 3)])
        part = maximal_closed_sets(reachable_pairs(sup, src, src), 4)
        yield "spectra", "worked partition", part.blocks == ((0, 1), (2, 3)), [list(b) for b in part.blocks]
        n = 4
        es = sorted({Fraction(int(x), int(rng.integers(1, 4))) for x in rng.integers(0, 6, size=n)})
        pairs = [(i, j) for i in range(len(es)) for j in range(i + 1, len(es)) if rng.random() < 0.5]
        sup = coherence_support(np.zeros((len(es), len(es))), declared=pairs)
        reach = reachable_pairs(sup, es, es)
        ok = all(substitute(reach.witness(i, j), es) == es[j] - es[i] for i, j in reach.pairs)
        yield "spectra", "witnesses substitute exactly", ok, len(reach.pairs)
    if suite in ("all", "catalytic"):
        _, _, _, rep = broadcast3(0.1, check_symmetry=False)
        err = rep.details["rho_prime_13_error"]
        yield "catalytic", "broadcast outer coherence", err < 1e-10 and rep.ledger.max_residual < 1e-12, err
        K, n = int(rng.integers(2, 4)), int(rng.integers(1, 3))
        sch = reuse_schedule(K, n)
        yield "catalytic", f"reuse schedule K={K} n={n}", sch.count == reuse_count(K, n) and \
            sch.validate().passed, sch.count
        a = random_density_matrix(SystemLayout.single("A", [0, 1, 2]), rng)
        b = random_density_matrix(SystemLayout.qubit("B"), rng)
        gap = SKEW_INFORMATION(tensor(a, b)) - SKEW_INFORMATION(a) - SKEW_INFORMATION(b)
        yield "catalytic", "skew information additive on products", abs(gap) < 1e-10, gap
    if suite in ("all", "protocol"):
        b = plan_budget(0.05, 2)
        yield "protocol", "budget meets target", b.predicted_error <= 0.05, b.predicted_error
        plus = DensityMatrix.pure(SystemLayout.qubit("S"), np.array([1, 1]) / math.sqrt(2))
        rep = prepare_state(plus, 0.05)
        ok = rep.achieved_distance <= 0.05 and rep.ledger.max_residual < 1e-9 and rep.decoupling_residual < 1e-9
        yield "protocol", "prepare |+> within 0.05", ok, rep.achieved_distance


def cmd_verify(args):
    seed = 0 if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    checks = []
    for module, name, ok, value in _verify_checks(rng, args.suite):
        checks.append({"module": module, "name": name, "passed": bool(ok), "value": to_jsonable(value)})
    passed = bool(checks) and all(c["passed"] for c in checks)
    return {"suite": args.suite, "seed": seed}, {"checks": checks}, passed, None


# ---------------------------------------------------------------------------
# parser and dispatch

def _add_common(p: argparse.ArgumentParser, seed: bool = False):
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--csv", help="write the 1-D series as CSV (where the command has one)")
    p.add_argument("--covariance-tol", type=float, default=config.COVARIANCE_TOL)
    p.add_argument("--restoration-tol", type=float, default=config.RESTORATION_TOL)
    p.add_argument("--coherence-tol", type=float, default=config.COHERENCE_TOL)
    if seed:
        p.add_argument("--seed", type=int, default=None, help="unsigned seed fixing randomized checks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qcat",
        description="Catalytic coherence transformations under time-translation covariant operations.",
        epilog=f"QCAT_DIM_CAP overrides the joint-dimension cap (default {config.DEFAULT_DIM_CAP}).",
    )
    parser.add_argument("--version", action="version", version=f"qcat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("amplify", help="run the two-level amplification chain")
    p.add_argument("--eta0", type=float, required=True)
    p.add_argument("--rounds", type=int, required=True)
    p.add_argument("--gap", default="1", help="energy gap, integer or p/q")
    p.add_argument("--joint", action="store_true", help="simulate the full joint state")
    _add_common(p)
    p.set_defaults(func=cmd_amplify)

    p = sub.add_parser("counterexample", help="rerun the chain with its own correlated catalyst")
    p.add_argument("--eta0", type=float, default=0.5)
    p.add_argument("--reruns", type=int, default=2)
    _add_common(p)
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("prepare", help="prepare a target state with marginal catalysts")
    p.add_argument("--target", required=True, help="state JSON")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--j-star", type=int, default=0, help="incoherent level the pipeline starts from")
    _add_common(p, seed=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("quasi-prepare", help="transform rho into a target with single-use catalysts")
    p.add_argument("--rho", required=True, help="input state JSON")
    p.add_argument("--target", required=True, help="target state JSON")
    p.add_argument("--epsilon", type=float, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_quasi_prepare)

    p = sub.add_parser("overlap", help="shift-operator overlaps and their lower bound")
    p.add_argument("--l", type=int, required=True, help="number of resource copies L")
    p.add_argument("--m", type=int, default=1, help="shift size")
    p.add_argument("--sweep", action="store_true", help="emit every L' <= L and m' <= m")
    _add_common(p)
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("index-sets", help="coherent pairs, reachable pairs and closed index sets")
    p.add_argument("--rho", help="state JSON; its support and energies define the source")
    p.add_argument("--source", help='JSON {"energies": [...], "support": [[i, j], ...]}')
    p.add_argument("--target", help='JSON {"energies": [...]}; defaults to the source energies')
    _add_common(p)
    p.set_defaults(func=cmd_index_sets)

    p = sub.add_parser("convert", help="turn an n-copy covariant map into a catalytic one")
    p.add_argument("--rho", required=True)
    p.add_argument("--rho-prime", required=True)
    p.add_argument("--channel", required=True, help="channel JSON acting on n copies")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    _add_common(p, seed=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("broadcast3", help="three-level outer-gap coherence creation")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--energies", nargs=3, default=None, help="three level energies, integers or p/q")
    _add_common(p)
    p.set_defaults(func=cmd_broadcast3)

    p = sub.add_parser("reuse", help="schedule and validate catalyst reuse")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_reuse)

    p = sub.add_parser("verify", help="run quick invariant suites")
    p.add_argument("--suite", default="all",
                   choices=["all", "qcore", "amplify", "synth", "spectra", "catalytic", "protocol"])
    _add_common(p, seed=True)
    p.set_defaults(func=cmd_verify)
    return parser


def make_report(command: str, params: dict, result: dict, passed: bool) -> dict:
    return {
        "schema": f"qcat.report.{command}/{schemas.SCHEMA_VERSION}",
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "command": command,
        "parameters": to_jsonable(params),
        "result": result,
        "passed": bool(passed),
    }


def run(args: argparse.Namespace) -> int:
    for name in ("covariance_tol", "restoration_tol", "coherence_tol"):
        _positive("--" + name.replace("_", "-"), getattr(args, name))
    seed = getattr(args, "seed", None)
    if seed is not None and not 0 <= seed < 2 ** 64:
        raise InputError("--seed must be an unsigned 64-bit integer")
    t0 = time.perf_counter()
    params, result, passed, series = args.func(args)
    report = make_report(args.command, params, result, passed)
    schemas.validate_report(report)
    text = dumps(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.csv and series is not None:
        Path(args.csv).write_text(csv_text(*series), encoding="utf-8")
    status = "ok" if passed else "FAILED"
    print(f"qcat {args.command}: {status} ({time.perf_counter() - t0:.2f} s)", file=sys.stderr)
    return EXIT_OK if passed else EXIT_FAIL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(args)
    except InputError as exc:
        print(f"qcat: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except QcatError as exc:
        print(f"qcat: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
