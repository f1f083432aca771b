"""Command-line interface: run procedures on files, compare classical vs
closed discovery counts, query membership certificates, emit figure
boundaries, and self-check the fast paths against the exhaustive engine.
"""

from __future__ import annotations

import argparse
import json
import math
import random
import sys
import time
from typing import Optional

from . import engine, procedures, shortcuts
from .core import ValueVector, fdp_loss, indices_from_mask, mask_from_indices
from .ecollections import (
    bh_collection,
    by_collection,
    knockoff_collection,
    mean_collection,
    su_collection,
)
from .io import InputFormatError, load_values, record_to_json

__all__ = ["main", "build_parser", "run_selfcheck"]

METHODS = procedures.METHOD_SPECS


def _run_method(token: str, values: ValueVector, alpha: float,
                lam: Optional[float], exhaustive: bool) -> procedures.ProcedureResult:
    name, kind, closed, needs_lambda = METHODS[token]
    if values.kind != kind:
        raise InputFormatError(
            f"method {token} needs {kind} input, got {values.kind}"
        )
    if needs_lambda and lam is None:
        raise InputFormatError(f"method {token} needs --lambda")
    if closed:
        return procedures.closed_variant(name, values, alpha, lam=lam,
                                         exhaustive=exhaustive)
    if token == "ebh":
        return procedures.ebh(values, alpha)
    if token == "ma-ebh":
        return procedures.ma_ebh(values, alpha)
    if token == "bh":
        return procedures.bh(values, alpha)
    if token == "by":
        return procedures.by(values, alpha)
    if token == "su":
        return procedures.su(values, alpha)
    if token == "storey-bh":
        return procedures.storey_bh(values, alpha, lam)
    return procedures.knockoff_filter(values, alpha)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    kind = METHODS[args.method][1]
    values = load_values(args.input, kind)
    start = time.perf_counter()
    result = _run_method(args.method, values, args.alpha, args.lam,
                         args.exhaustive)
    runtime_ms = (time.perf_counter() - start) * 1000.0
    record = result.to_dict()
    record["runtime_ms"] = runtime_ms
    if args.format == "text":
        rej = ",".join(map(str, record["rejected"])) or "-"
        lines = [f"method: {record['method']}",
                 f"alpha: {record['alpha']}",
                 f"m: {record['m']}",
                 f"rejected ({len(record['rejected'])}): {rej}"]
        for k, v in sorted(record["diagnostics"].items()):
            lines.append(f"{k}: {v}")
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit(record_to_json(record) + "\n", args.out)
    return 0


DEFAULT_PAIRS = {
    "evalue": [("ebh", "closed-ebh"), ("ma-ebh", "closed-ebh")],
    "pvalue": [("bh", "closed-bh"), ("by", "closed-by"), ("su", "closed-su")],
    "knockoff_stat": [("knockoff", "closed-knockoff")],
}


def cmd_compare(args) -> int:
    if args.pairs:
        pairs = []
        for part in args.pairs.split(","):
            a, _, b = part.partition(":")
            if a not in METHODS or b not in METHODS:
                raise InputFormatError(f"unknown method pair {part!r}")
            pairs.append((a, b))
    else:
        pairs = None
    kind = None
    if pairs:
        kind = METHODS[pairs[0][0]][1]
    values = load_values(args.input, kind)
    if pairs is None:
        pairs = DEFAULT_PAIRS[values.kind]
    columns = []
    for a, b in pairs:
        if a not in [c for c, _ in columns]:
            columns.append((a, METHODS[a]))
        if b not in [c for c, _ in columns]:
            columns.append((b, METHODS[b]))
    names = [c for c, _ in columns]
    rows = []
    for alpha in args.alpha:
        row = {"alpha": alpha}
        for token in names:
            result = _run_method(token, values, alpha, args.lam, False)
            row[token] = len(indices_from_mask(result.rejected))
        rows.append(row)
    if args.format == "json":
        _emit("\n".join(record_to_json(r) for r in rows) + "\n", args.out)
    elif args.format == "csv":
        lines = ["alpha," + ",".join(names)]
        for row in rows:
            lines.append(",".join([repr(row["alpha"])] + [str(row[n]) for n in names]))
        _emit("\n".join(lines) + "\n", args.out)
    else:
        width = max(8, *(len(n) + 2 for n in names))
        header = "alpha".ljust(8) + "".join(n.rjust(width) for n in names)
        lines = [header]
        for row in rows:
            lines.append(f"{row['alpha']:<8g}" + "".join(
                str(row[n]).rjust(width) for n in names))
        _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_query(args) -> int:
    name, kind, closed, _ = METHODS[args.method]
    if not closed:
        raise InputFormatError(
            f"query needs a closed method (got {args.method}): membership "
            f"is defined against a collection"
        )
    values = load_values(args.input, kind)
    try:
        indices = [int(tok) for tok in args.set.split(",") if tok.strip()]
    except ValueError:
        raise InputFormatError(f"bad --set {args.set!r}: expected indices like 1,2,3")
    r_mask = mask_from_indices(indices, values.m)
    result = procedures.closed_variant(name, values, args.alpha, lam=args.lam)
    col = result.collection
    cert = procedures.collection_member(col, fdp_loss(), args.alpha, r_mask)
    bound = engine.true_discovery_bound(col, args.alpha, r_mask)
    record = {
        "method": name,
        "alpha": args.alpha,
        "set": sorted(indices),
        "certificate": cert.to_dict(),
        "true_discovery_bound": bound,
    }
    if col.alpha_independent:
        record["critical_alpha"] = engine.critical_alpha(col, fdp_loss(), r_mask)
    else:
        record["critical_alpha"] = None
        record["critical_alpha_note"] = (
            "collection bakes in alpha; critical level is undefined"
        )
    if args.format == "text":
        lines = [f"member: {cert.member}"]
        if cert.witness is not None:
            lines.append("witness: " + ",".join(map(str, indices_from_mask(cert.witness))))
        lines.append(f"margin: {cert.margin}")
        lines.append(f"true discovery bound: {bound}")
        lines.append(f"critical alpha: {record['critical_alpha']}")
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit(record_to_json(record) + "\n", args.out)
    return 0


def cmd_figure(args) -> int:
    if args.kind != "fig1":
        raise InputFormatError(f"unsupported figure kind {args.kind!r}")
    profile = shortcuts.greedy_boundary_ebh(args.k, args.m, args.alpha)
    lines = ["rank,value"]
    for rank, value in enumerate(profile.values, start=1):
        lines.append(f"{rank},{value!r}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _random_instance(rng: random.Random, m: int) -> dict:
    alpha = rng.choice([0.05, 0.1, 0.2, 0.5])
    e = tuple(0.0 if rng.random() < 0.3 else round(rng.expovariate(alpha), 6)
              for _ in range(m))
    p = tuple(round(rng.random() ** 2, 6) for _ in range(m))
    w = tuple(round(rng.gauss(0.0, 3.0), 1) for _ in range(m))
    r_mask = rng.getrandbits(m)
    return {"alpha": alpha, "e": e, "p": p, "w": w, "r_mask": r_mask}


def run_selfcheck(m: int, trials: int, seed: int,
                  inject_fault: bool = False) -> tuple[str, bool]:
    """Compare every fast path against the exhaustive engine on random
    instances. Returns (report, ok); the report is deterministic for a
    fixed seed and carries replayable instances for any mismatch."""
    if m > 12:
        raise ValueError("selfcheck is capped at m <= 12 (exhaustive oracle)")
    rng = random.Random(seed)
    loss = fdp_loss()
    counts: dict[str, int] = {}
    failures: list[str] = []

    def check(name: str, fast, slow, instance: dict) -> None:
        counts[name] = counts.get(name, 0) + 1
        if fast != slow:
            failures.append(record_to_json(
                {"check": name, "fast": repr(fast), "engine": repr(slow),
                 "instance": instance}))

    for _ in range(trials):
        inst = _random_instance(rng, m)
        alpha, r_mask = inst["alpha"], inst["r_mask"]
        ev = ValueVector(kind="evalue", values=inst["e"])
        pv = ValueVector(kind="pvalue", values=inst["p"])
        wv = ValueVector(kind="knockoff_stat", values=inst["w"])

        mean_col = mean_collection(ev)
        fast_member = shortcuts.ebhbar_member_fast(ev, alpha, r_mask).member
        if inject_fault:
            fast_member = not fast_member
        check("mean-member", fast_member,
              engine.member(mean_col, loss, alpha, r_mask).member, inst)
        check("mean-largest", shortcuts.ebhbar_largest_fast(ev, alpha),
              engine.largest_member(mean_col, loss, alpha), inst)

        for builder, tag in ((by_collection, "by"), (su_collection, "su")):
            col = builder(pv, alpha)
            check(f"{tag}-member",
                  shortcuts.monotone_member_fast(col, pv, alpha, r_mask).member,
                  engine.member(col, loss, alpha, r_mask).member, inst)
            check(f"{tag}-largest",
                  shortcuts.monotone_largest(col, pv, alpha),
                  engine.largest_member(col, loss, alpha), inst)

        bh_col = bh_collection(pv, alpha)
        check("bh-rule",
              shortcuts.closedbh_member_rule(pv, alpha, r_mask).member,
              engine.member(bh_col, loss, alpha, r_mask).member, inst)

        kn_col = knockoff_collection(wv, alpha)
        check("knockoff-rule",
              shortcuts.closedknockoff_member_rule(wv, alpha, r_mask).member,
              engine.member(kn_col, loss, alpha, r_mask).member, inst)

        singles = 0
        for i in range(m):
            if engine.member(mean_col, loss, alpha, 1 << i).member:
                singles |= 1 << i
        check("eholm", shortcuts.eholm_fast(ev, alpha), singles, inst)

        ebh_set = procedures.ebh(ev, alpha).rejected
        closed_ebh = shortcuts.ebhbar_largest_fast(ev, alpha)
        check("dominance-ebh", ebh_set & ~closed_ebh, 0, inst)
        check("dominance-ma-ebh",
              ebh_set & ~procedures.ma_ebh(ev, alpha).rejected, 0, inst)
        for proc, tag, builder in ((procedures.by, "by", by_collection),
                                   (procedures.su, "su", su_collection)):
            classical = proc(pv, alpha).rejected
            closed = shortcuts.monotone_largest(builder(pv, alpha), pv, alpha)
            check(f"dominance-{tag}", classical & ~closed, 0, inst)

    lines = [f"selfcheck m={m} trials={trials} seed={seed}"]
    for name in sorted(counts):
        n_fail = sum(1 for f in failures if f'"check": "{name}"' in f)
        lines.append(f"check {name}: runs={counts[name]} mismatches={n_fail}")
    ok = not failures
    if failures:
        lines.append("replay the failing instances:")
        lines.extend(failures[:10])
    lines.append("result: " + ("PASS" if ok else "FAIL"))
    return "\n".join(lines) + "\n", ok


def cmd_selfcheck(args) -> int:
    report, ok = run_selfcheck(args.m, args.trials, args.seed,
                               inject_fault=args.inject_fault)
    _emit(report, args.out)
    return 0 if ok else 1


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(state_dir=args.state_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eclosure",
        description="Closed multiple testing with e-values: procedures, "
                    "membership certificates, and post hoc error control.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_method=True):
        if with_method:
            p.add_argument("--method", required=True, choices=sorted(METHODS))
        p.add_argument("--alpha", type=float, default=0.05)
        p.add_argument("--lambda", dest="lam", type=float, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=0)

    p_run = sub.add_parser("run", help="run one procedure on an input file")
    p_run.add_argument("input")
    add_common(p_run)
    p_run.add_argument("--format", choices=["json", "text"], default="json")
    p_run.add_argument("--exhaustive", action="store_true",
                       help="global argmax-cardinality search instead of the "
                            "prefix rule (subset-enumeration cap applies)")
    p_run.set_defaults(fn=cmd_run)

    p_cmp = sub.add_parser("compare",
                           help="discovery-count table, classical vs closed")
    p_cmp.add_argument("input")
    p_cmp.add_argument("--alpha", type=float, nargs="+", default=[0.05])
    p_cmp.add_argument("--lambda", dest="lam", type=float, default=None)
    p_cmp.add_argument("--pairs", default=None,
                       help="comma list like bh:closed-bh,su:closed-su")
    p_cmp.add_argument("--format", choices=["json", "csv", "text"],
                       default="text")
    p_cmp.add_argument("--out", default=None)
    p_cmp.set_defaults(fn=cmd_compare)

    p_q = sub.add_parser("query", help="membership certificate for a set")
    p_q.add_argument("input")
    add_common(p_q)
    p_q.add_argument("--set", required=True,
                     help="comma list of 1-based indices, e.g. 1,2,3")
    p_q.add_argument("--format", choices=["json", "text"], default="json")
    p_q.set_defaults(fn=cmd_query)

    p_f = sub.add_parser("figure", help="emit a figure boundary as CSV")
    p_f.add_argument("--kind", default="fig1")
    p_f.add_argument("--k", type=int, required=True)
    p_f.add_argument("--m", type=int, required=True)
    p_f.add_argument("--alpha", type=float, default=0.05)
    p_f.add_argument("--out", default=None)
    p_f.set_defaults(fn=cmd_figure)

    p_s = sub.add_parser("selfcheck",
                         help="fast paths vs exhaustive engine on random "
                              "instances; nonzero exit on mismatch")
    p_s.add_argument("--m", type=int, default=8)
    p_s.add_argument("--trials", type=int, default=500)
    p_s.add_argument("--seed", type=int, default=0)
    p_s.add_argument("--inject-fault", action="store_true",
                     help=argparse.SUPPRESS)
    p_s.add_argument("--out", default=None)
    p_s.set_defaults(fn=cmd_selfcheck)

    p_srv = sub.add_parser("serve", help="run the session HTTP service")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)
    p_srv.add_argument("--state-dir", default=None,
                       help="directory for JSON session persistence "
                            "(default: in-memory only)")
    p_srv.set_defaults(fn=cmd_serve)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (InputFormatError, ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
