"""Command-line front end.

Every subcommand reads a problem file (JSON), writes its result as JSON on
stdout and logs to stderr.  Exit codes: 0 success, 1 mathematical failure or
inconclusive result, 2 usage or input error.

Problem file layout::

    {"nvars": 3,
     "blocks": [[1, 2], [2, 3]],
     "box": {"lo": ["-1", "-1", "-1"], "hi": ["1", "1", "1"]},
     "summands": [{"block": 1, "poly": "X1^2 + X2 + 1"}, {"block": 2, "poly": "X3^2 - X2"}],
     "constraints": [{"block": 1, "poly": "1 - X1^2 - X2^2"}],
     "options": {"k_max": 20, "eps": "1", "degrees": [[6, 4]], "depth_cap": 10, "radii": ["1", "1"]}}

Blocks are numbered from 1.  A ``poly`` is either a string such as
``"3/4*X1^2*X2 - X3 + 1"`` or the object form ``{"terms": [{"coeff": "3/4",
"exps": [2, 1, 0]}]}``.  A summand without ``block`` goes to the first block
containing its variables.  If the blocks violate the running intersection
property in the given order, a valid order is searched for and used.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from fractions import Fraction
from typing import Sequence

import numpy as np
import sympy

from .certificate import Certificate, FindKError, ProblemSpec, certify, verify_certificate
from .poly import Box, Polynomial, fraction_str, to_fraction
from .sos import SOSError, SOSInfeasible, sparse_putinar
from .sparsity import AssignmentError, SparsityPattern, check_rip, find_rip_order
from .split import SplitConfig, SplitError, split_many

__all__ = ["main", "InputError", "parse_poly", "load_problem", "problem_to_json"]

log = logging.getLogger("sparsepos")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(ValueError):
    """The problem file is malformed."""


def parse_poly(spec, nvars: int) -> Polynomial:
    """A polynomial from a string over ``X1..Xn`` or from the JSON object form."""
    if isinstance(spec, dict):
        data = dict(spec)
        data.setdefault("nvars", nvars)
        if int(data["nvars"]) != nvars:
            raise InputError(f"polynomial declares nvars={data['nvars']}, problem has {nvars}")
        return Polynomial.from_json(data)
    if isinstance(spec, (int, float)):
        return Polynomial.constant(to_fraction(spec), nvars)
    if not isinstance(spec, str):
        raise InputError(f"cannot read a polynomial from {spec!r}")
    symbols = sympy.symbols(f"X1:{nvars + 1}")
    local = {str(s): s for s in symbols}
    try:
        expr = sympy.parse_expr(spec.replace("^", "**"), local_dict=local, evaluate=True)
        poly = sympy.Poly(expr, *symbols, domain="QQ") if symbols else None
    except (sympy.SympifyError, SyntaxError, TypeError, sympy.polys.polyerrors.BasePolynomialError) as exc:
        raise InputError(f"cannot parse polynomial {spec!r}: {exc}") from exc
    if poly is None:
        try:
            return Polynomial.constant(Fraction(str(sympy.Rational(expr))), nvars)
        except (TypeError, ValueError) as exc:
            raise InputError(f"cannot parse polynomial {spec!r}") from exc
    terms = {}
    for exps, c in poly.terms():
        terms[tuple(exps)] = Fraction(int(c.p), int(c.q))
    return Polynomial.from_dense(nvars, terms)


def _number(x) -> Fraction:
    try:
        return to_fraction(x)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise InputError(f"not a number: {x!r}") from exc


def load_problem(doc: dict) -> tuple[ProblemSpec, dict]:
    """Parse a problem document into a :class:`ProblemSpec` and its options."""
    if not isinstance(doc, dict):
        raise InputError("problem file must hold a JSON object")
    try:
        nvars = int(doc["nvars"])
        blocks = [[int(v) for v in b] for b in doc["blocks"]]
        box_doc = doc.get("box", {"lo": [-1] * nvars, "hi": [1] * nvars})
        lo, hi = [_number(x) for x in box_doc["lo"]], [_number(x) for x in box_doc["hi"]]
        summands_doc = doc.get("summands", [])
        constraints_doc = doc.get("constraints", [])
        options = dict(doc.get("options", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad problem file: {exc!r}") from exc
    if len(lo) != nvars or len(hi) != nvars:
        raise InputError(f"box needs {nvars} bounds per side")
    try:
        pattern = SparsityPattern(blocks, nvars)
        box = Box.from_bounds(lo, hi)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    r = len(pattern)

    def block_of(entry, kind: str, poly: Polynomial) -> int:
        if entry.get("block") is None:
            support = poly.support_vars()
            for j, b in enumerate(pattern.blocks):
                if support <= b:
                    return j
            raise AssignmentError(f"{kind} {poly} fits in no block", [m for m, _ in poly.items()])
        j = int(entry["block"])
        if not 1 <= j <= r:
            raise InputError(f"{kind} refers to block {j}, only {r} blocks")
        return j - 1

    summands, constraints = [], []
    for kind, src, dst in (("summand", summands_doc, summands), ("constraint", constraints_doc, constraints)):
        for entry in src:
            if isinstance(entry, (str, int, float)):
                entry = {"poly": entry}
            if not isinstance(entry, dict) or "poly" not in entry:
                raise InputError(f"each {kind} needs a 'poly' field")
            p = parse_poly(entry["poly"], nvars)
            dst.append((block_of(entry, kind, p), p))
    if not check_rip(pattern).holds:
        order = find_rip_order(pattern.blocks)
        if order is None:
            raise AssignmentError("no block order satisfies the running intersection property", [])
        log.info("blocks reordered to %s to satisfy the running intersection property", [o + 1 for o in order])
        where = {old: new for new, old in enumerate(order)}
        pattern = pattern.reordered(order)
        summands = [(where[j], p) for j, p in summands]
        constraints = [(where[j], g) for j, g in constraints]
    try:
        return ProblemSpec(summands, constraints, pattern, box), options
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def problem_to_json(problem: ProblemSpec, options: dict | None = None) -> dict:
    n = problem.nvars
    vs = range(1, n + 1)
    lo = [fraction_str(problem.region[v][0]) if v in problem.region else "0" for v in vs]
    hi = [fraction_str(problem.region[v][1]) if v in problem.region else "0" for v in vs]
    out = {
        "nvars": n,
        "blocks": problem.pattern.sorted_blocks(),
        "box": {"lo": lo, "hi": hi},
        "summands": [{"block": j + 1, "poly": p.to_json()} for j, p in problem.summands],
        "constraints": [{"block": j + 1, "poly": g.to_json()} for j, g in problem.constraints],
    }
    if options:
        out["options"] = options
    return out


# ---------------------------------------------------------------------------
# subcommands


def _read_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def _split_config(args, options: dict) -> SplitConfig:
    eps = args.eps if getattr(args, "eps", None) is not None else options.get("eps", 0)
    depth_cap = args.depth_cap if args.depth_cap is not None else int(options.get("depth_cap", SplitConfig.depth_cap))
    return SplitConfig(
        epsilon=_number(eps),
        depth_cap=depth_cap,
        strict_common_interval=args.strict_common_interval,
    )


def _k_max(args, options: dict) -> int:
    return args.k_max if args.k_max is not None else int(options.get("k_max", 50))


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_check_rip(args) -> int:
    doc = _read_json(args.file)
    try:
        nvars = int(doc["nvars"])
        pattern = SparsityPattern(doc["blocks"], nvars)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad blocks: {exc!r}") from exc
    rip = check_rip(pattern)
    out = {
        "holds": rip.holds,
        "witnesses": {str(i + 1): k + 1 for i, k in rip.witnesses.items()},
        "violation": None if rip.violation is None else rip.violation + 1,
    }
    if not rip.holds:
        b = pattern.blocks[rip.violation]
        seen = pattern.union(rip.violation)
        out["explanation"] = (
            f"block {rip.violation + 1} {sorted(b)} meets the earlier blocks in {sorted(b & seen)}, "
            "which lies in no single earlier block"
        )
    if args.find_order:
        order = find_rip_order(pattern.blocks)
        out["order"] = [o + 1 for o in order] if order is not None else "none"
        if order is None:
            out["explanation"] = "no ordering of the blocks satisfies the running intersection property"
    _emit(out)
    return EXIT_OK if rip.holds else EXIT_FAIL


def cmd_split(args) -> int:
    problem, options = load_problem(_read_json(args.file))
    config = _split_config(args, options)
    per_block = [problem.block_f(j) for j in range(len(problem.pattern))]
    try:
        res = split_many(per_block, problem.pattern, problem.region, config)
    except SplitError as exc:
        log.error("split failed: %s", exc)
        out = {"status": "failed", "error": str(exc)}
        report = exc.diagnostics.get("report")
        if report is not None:
            out["report"] = report.to_json()
        reports = exc.diagnostics.get("reports")
        if reports:
            out["margins"] = [r.to_json() for r in reports if r is not None]
        _emit(out)
        return EXIT_FAIL
    _emit({"status": "ok", **res.to_json()})
    return EXIT_OK


def cmd_certify(args) -> int:
    problem, options = load_problem(_read_json(args.file))
    config = _split_config(args, options)
    try:
        cert = certify(problem, config, k_max=_k_max(args, options))
    except FindKError as exc:
        log.error("certify: %s", exc)
        traj = [{"k": k, "lower_bound": fraction_str(lb), "verdict": v} for k, lb, v in exc.trajectory]
        _emit({"status": "inconclusive", "error": str(exc), "trajectory": traj})
        return EXIT_FAIL
    except SplitError as exc:
        log.error("certify: %s", exc)
        _emit({"status": "failed", "error": str(exc)})
        return EXIT_FAIL
    check = verify_certificate(cert, problem, config.depth_cap)
    _emit({"status": "certified", **cert.to_json(), "verification": check.to_json()})
    return EXIT_OK if check.ok else EXIT_FAIL


def cmd_verify(args) -> int:
    problem, options = load_problem(_read_json(args.problem))
    doc = _read_json(args.certificate)
    try:
        cert = Certificate.from_json(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad certificate file: {exc!r}") from exc
    depth_cap = args.depth_cap if args.depth_cap is not None else int(options.get("depth_cap", SplitConfig.depth_cap))
    report = verify_certificate(cert, problem, depth_cap)
    _emit(report.to_json())
    return EXIT_OK if report.ok else EXIT_FAIL


def _parse_degrees(text: str | None, options: dict):
    if text is None:
        deg = options.get("degrees")
        return None if deg is None else [tuple(int(x) for x in pair) for pair in deg]
    pairs = []
    for chunk in text.split(";"):
        parts = [p for p in chunk.replace(" ", "").split(",") if p]
        if len(parts) != 2:
            raise InputError(f"--degrees expects pairs 'ds,dt' separated by ';', got {text!r}")
        pairs.append((int(parts[0]), int(parts[1])))
    return pairs


def cmd_sos_certify(args) -> int:
    problem, options = load_problem(_read_json(args.file))
    config = _split_config(args, options)
    degrees = _parse_degrees(args.degrees, options)
    radii = args.radii if args.radii is not None else options.get("radii")
    if isinstance(radii, str):
        radii = [r for r in radii.split(",") if r]
    if radii is not None:
        radii = [_number(r) for r in radii] if isinstance(radii, list) else _number(radii)
        if isinstance(radii, list) and len(radii) == 1:
            radii = radii[0]
    try:
        membership = sparse_putinar(problem, config, radii=radii, degrees=degrees, k_max=_k_max(args, options))
    except (FindKError, SplitError, SOSError, SOSInfeasible) as exc:
        log.error("sos-certify: %s", exc)
        _emit({"status": "failed", "error": str(exc)})
        return EXIT_FAIL
    out = membership.to_json()
    _emit({"status": "ok" if out["ok"] else "failed", **out})
    return EXIT_OK if out["ok"] else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsepos", description="Sparsity-respecting positivity certificates.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    parser.add_argument("--seed", type=int, default=0, help="seed for any randomized sampling")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-rip", help="check the running intersection property")
    p.add_argument("file")
    p.add_argument("--find-order", action="store_true", help="search for a block order satisfying it")
    p.set_defaults(func=cmd_check_rip)

    def common(p):
        p.add_argument("--depth-cap", type=int, default=None, help="Bernstein subdivision cap per axis")
        p.add_argument(
            "--strict-common-interval",
            action="store_true",
            help="require one interval shared by every variable",
        )

    p = sub.add_parser("split", help="split a positive block sum into positive block pieces")
    p.add_argument("file")
    p.add_argument("--eps", default=None, help="known lower bound of the sum on the box")
    common(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("certify", help="build a box certificate with constraint multipliers")
    p.add_argument("file")
    p.add_argument("--k-max", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("verify", help="re-check a certificate against its problem")
    p.add_argument("problem")
    p.add_argument("certificate")
    p.add_argument("--depth-cap", type=int, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sos-certify", help="sum-of-squares module membership, block by block")
    p.add_argument("file")
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--degrees", default=None, help="ball certificate degrees, e.g. '6,4;8,6'")
    p.add_argument("--radii", default=None, help="comma-separated ball radii, one per block or one for all")
    common(p)
    p.set_defaults(func=cmd_sos_certify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    random.seed(args.seed)
    np.random.seed(args.seed)
    try:
        return args.func(args)
    except AssignmentError as exc:
        log.error("%s", exc)
        _emit({"status": "failed", "error": str(exc)})
        return EXIT_FAIL
    except (InputError, ValueError) as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
