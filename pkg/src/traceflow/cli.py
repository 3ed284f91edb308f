"""Command-line front end: ``traceflow <subcommand> ...``.

Exit codes: 0 ok, 2 usage / malformed input, 3 resource cap, 4 I/O error,
5 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import coeffs as C
from .errors import CapExceededError, DomainError, TraceflowError, UsageError
from .heat_engine import (
    SingleVariablePolynomial,
    free_hall_transform,
    heat_apply,
    moment_nu,
)
from .matrix_oracle import (
    DEFAULT_SCALING_PAIRS,
    SUITES,
    product_rule_scaling,
    verify_identity,
)
from .rmt_mc import (
    GROUP_ALIASES,
    GROUP_UNITARY,
    HIST_BINS,
    Moments,
    SamplerConfig,
    StatEntry,
    StatReport,
    concentration_experiment,
    isometry_experiment,
    limit_transform_experiment,
    moment_experiment,
    sample_batch,
    spectral_histogram,
    trace_powers,
)
from .trace_algebra import (
    DEFAULT_DEGREE_CAP,
    TracePolynomial,
    laplacian_leading,
    laplacian_power,
    laplacian_traced_power,
)

EXIT_OK, EXIT_USAGE, EXIT_CAP, EXIT_IO, EXIT_FAIL = 0, 2, 3, 4, 5
VERIFY_SUITES = SUITES + ("product_rule_scaling",)


class InputError(TraceflowError, ValueError):
    pass


def parse_int_list(text: str) -> list:
    """``"2,3,4"`` or ``"1-5"`` (inclusive ranges may be mixed with commas)."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        except ValueError as exc:
            raise InputError(f"bad integer list {text!r}") from exc
    if not out:
        raise InputError(f"empty integer list {text!r}")
    return out


def parse_coeffs(text: str) -> list:
    try:
        vals = [C.parse_rational(x) for x in str(text).split(",")]
    except (ValueError, ZeroDivisionError) as exc:
        raise InputError(f"malformed coefficient list {text!r}: {exc}") from exc
    return vals


def parse_time(text: str | None):
    if text is None:
        return None
    try:
        return C.parse_rational(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise InputError(f"malformed time {text!r}") from exc


def load_poly(text: str) -> TracePolynomial:
    src = text
    if not text.lstrip().startswith("{"):
        try:
            src = Path(text).read_text()
        except OSError as exc:
            raise InputError(f"cannot read polynomial document {text!r}: {exc}") from exc
    try:
        return TracePolynomial.from_json(json.loads(src))
    except (ValueError, KeyError, TypeError, DomainError) as exc:
        raise InputError(f"malformed trace polynomial document: {exc}") from exc


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def emit(args, text: str):
    if args.out in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        Path(args.out).write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {args.out}: {exc}") from exc


def _config(args, **extra) -> dict:
    skip = {"func", "out"}
    cfg = {k: v for k, v in vars(args).items() if k not in skip}
    cfg.update(extra)
    return cfg


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _poly_csv(p: TracePolynomial) -> str:
    rows = []
    for m, c in p.items():
        cs = c.coeffs if p.ring == C.TPOLY else [c]
        for j, x in enumerate(cs):
            if p.ring == C.FLOAT:
                rows.append([m.k, " ".join(map(str, m.traces)), j, repr(float(x)), ""])
            else:
                rows.append([m.k, " ".join(map(str, m.traces)), j, x.numerator, x.denominator])
    return _csv(rows, ["k", "traces", "t_power", "num", "den"])


# -- subcommands

def cmd_laplacian(args) -> int:
    if args.poly:
        p = load_poly(args.poly)
        res = laplacian_leading(p, args.degree_cap)
        src = {"input": p.to_json()}
    elif args.k is not None:
        res = laplacian_traced_power(args.k) if args.traced else laplacian_power(args.k)
        src = {}
    else:
        raise InputError("laplacian needs --k or --poly")
    if args.format == "pretty":
        emit(args, res.render() + "\n")
    elif args.format == "csv":
        emit(args, _poly_csv(res))
    else:
        emit(args, dumps({"config": _config(args), **src, "result": res.to_json()}))
    return EXIT_OK


def _input_poly(args) -> TracePolynomial:
    if args.poly:
        return load_poly(args.poly)
    if args.coeffs:
        cs = parse_coeffs(args.coeffs)
        return sum((TracePolynomial.power(j).scale(c) for j, c in enumerate(cs) if c),
                   TracePolynomial.zero())
    raise InputError("heat needs --coeffs or --poly")


def cmd_heat(args) -> int:
    p = _input_poly(args)
    if p.ring != C.RATIONAL:
        raise InputError("heat needs exact rational coefficients")
    hs = heat_apply(p, args.degree_cap)
    t = parse_time(args.t)
    if args.format == "pretty":
        if t is None:
            text = "\n".join(h.render() for h in hs) or "0"
        else:
            text = "\n".join(h.at(float(t)).render() for h in hs) or "0"
        emit(args, text + "\n")
        return EXIT_OK
    if args.format == "csv":
        emit(args, "".join(_poly_csv(h.body) for h in hs))
        return EXIT_OK
    doc = {"config": _config(args), "components": [h.to_json() for h in hs]}
    if t is not None:
        doc["numeric"] = [h.at(float(t)).to_json() for h in hs]
    emit(args, dumps(doc))
    return EXIT_OK


def cmd_transform(args) -> int:
    cs = parse_coeffs(args.coeffs)
    p = SingleVariablePolynomial.from_coefficients(cs)
    q = free_hall_transform(p, args.degree_cap)
    t = None if args.symbolic else parse_time(args.t)
    cfg = _config(args, symbolic=t is None, coeffs=[C.render_rational(c) for c in cs])
    if args.format == "pretty":
        if t is None:
            emit(args, q.render() + "\n")
        else:
            vals = q.evaluate(float(t))
            emit(args, " + ".join(f"{v!r}*z^{j}" for j, v in enumerate(vals) if v != 0) or "0")
            emit(args, "\n")
        return EXIT_OK
    if args.format == "csv":
        if t is None:
            rows = [[d, j, i, x.numerator, x.denominator]
                    for d, row in q.components.items() for j, c in row.items()
                    for i, x in enumerate(c.coeffs)]
            emit(args, _csv(rows, ["d", "power", "t_power", "num", "den"]))
        else:
            emit(args, _csv([[j, repr(v)] for j, v in enumerate(q.evaluate(float(t)))], ["power", "coeff"]))
        return EXIT_OK
    doc = {"config": cfg, "q_t": q.to_json()}
    if t is not None:
        doc["t"] = C.rational_to_json(t)
        doc["numeric_coeffs"] = q.evaluate(float(t))
    emit(args, dumps(doc))
    return EXIT_OK


def cmd_moments(args) -> int:
    ks = parse_int_list(args.k)
    t = parse_time(args.t)
    nus = {k: moment_nu(k, args.degree_cap) for k in ks}
    if args.format == "pretty":
        lines = [f"nu_{k}(t) = {nu.render()}" + (f" = {nu(float(t))!r}" if t is not None else "")
                 for k, nu in nus.items()]
        emit(args, "\n".join(lines) + "\n")
    elif args.format == "csv":
        rows = [[k, nu.halfrate, " ".join(C.render_rational(c) for c in nu.poly.coeffs),
                 "" if t is None else repr(nu(float(t)))] for k, nu in nus.items()]
        emit(args, _csv(rows, ["k", "prefactor_halfrate", "poly", "value"]))
    else:
        doc = {"config": _config(args), "moments": [
            {"k": k, **nu.to_json(), **({"value": nu(float(t))} if t is not None else {})}
            for k, nu in nus.items()]}
        emit(args, dumps(doc))
    return EXIT_OK


def _stat_list(text: str) -> list:
    out = []
    for s in str(text).split(","):
        s = s.strip()
        if not s.startswith("tr") or not s[2:].isdigit() or int(s[2:]) < 1:
            raise InputError(f"unknown statistic {s!r} (expected trK, e.g. tr1)")
        out.append(int(s[2:]))
    return out


def cmd_simulate(args) -> int:
    ks = _stat_list(args.stat)
    try:
        cfg = SamplerConfig(args.N, float(parse_time(args.t)), args.steps, args.samples, args.seed, args.group)
    except DomainError as exc:
        raise InputError(str(exc)) from exc
    mats = sample_batch(cfg, args.threads)
    trs = trace_powers(mats, max(ks))
    report = StatReport("simulate", config={**cfg.echo(), "stat": args.stat, "bins": args.bins})
    for k in ks:
        report.entries.append(StatEntry.from_moments(cfg.N, f"tr{k}", Moments.of(trs[:, k - 1])))
    hist = None
    if cfg.group == GROUP_UNITARY:
        hist = spectral_histogram(mats, args.bins, meta=report.config)
    if args.out_dir:
        out = Path(args.out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "statistics.csv").write_text(report.to_csv())
            (out / "report.json").write_text(dumps(report.to_json()))
            if hist is not None:
                (out / "histogram.csv").write_text(hist.to_csv())
        except OSError as exc:
            raise OSError(f"cannot write to {out}: {exc}") from exc
    if args.format == "csv":
        emit(args, report.to_csv())
    elif args.format == "pretty":
        lines = [f"# {json.dumps(report.config)}"]
        lines += [f"N={e.N} {e.statistic}: mean={e.mean:.6g} (imag {e.mean_imag:.3g}) "
                  f"se={e.se:.3g} var={e.variance:.3g}" for e in report.entries]
        emit(args, "\n".join(lines) + "\n")
    else:
        doc = report.to_json()
        if hist is not None:
            doc["histogram"] = {"edges": hist.edges.tolist(), "counts": hist.counts.tolist()}
        emit(args, dumps(doc))
    return EXIT_OK


def cmd_verify(args) -> int:
    suites = list(VERIFY_SUITES) if args.suite == "all" else [s.strip() for s in args.suite.split(",")]
    for s in suites:
        if s not in VERIFY_SUITES:
            raise InputError(f"unknown suite {s!r}; choose from {', '.join(VERIFY_SUITES)} or all")
    Ns = parse_int_list(args.N)
    ks = parse_int_list(args.k) if args.k else [1, 2, 3]
    ls = parse_int_list(args.l) if args.l else [1, 2, 3]
    reports = []
    for s in suites:
        if s == "product_rule_scaling":
            for f, g in DEFAULT_SCALING_PAIRS:
                reports.append(product_rule_scaling(f, g, Ns, args.seed).to_json())
            continue
        for N in Ns:
            if s == "eigenrelation":
                reports.append(verify_identity(s, None, None, N, args.trials, args.seed).to_json())
            elif s == "cross_term":
                for k in ks:
                    for l in ls:
                        reports.append(verify_identity(s, k, l, N, args.trials, args.seed).to_json())
            else:
                for k in ks:
                    reports.append(verify_identity(s, k, None, N, args.trials, args.seed).to_json())
    failing = sorted({r["identity"] for r in reports if not r["passed"]})
    if args.format == "pretty":
        lines = []
        for r in reports:
            tag = "PASS" if r["passed"] else "FAIL"
            if r["identity"] == "product_rule_scaling":
                lines.append(f"{tag} product_rule_scaling f={r['f']} g={r['g']} slope={r['slope']:.4f}")
            else:
                p = r["params"]
                lines.append(f"{tag} {r['identity']} k={p['k']} l={p['l']} N={p['N']} "
                             f"max_residual={r['max_residual']:.3e}")
        emit(args, "\n".join(lines) + "\n")
    elif args.format == "csv":
        rows = []
        for r in reports:
            if r["identity"] == "product_rule_scaling":
                rows.append([r["identity"], r["f"], r["g"], " ".join(map(str, r["N"])), repr(r["slope"]), r["passed"]])
            else:
                p = r["params"]
                rows.append([r["identity"], p["k"], p["l"], p["N"], repr(r["max_residual"]), r["passed"]])
        emit(args, _csv(rows, ["identity", "k_or_f", "l_or_g", "N", "value", "passed"]))
    else:
        emit(args, dumps({"config": _config(args), "reports": reports, "failing": failing}))
    if failing:
        print(f"verification failed: {', '.join(failing)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_experiment(args) -> int:
    Ns = parse_int_list(args.N)
    t = float(parse_time(args.t))
    if args.name == "concentration":
        rep = concentration_experiment(parse_int_list(args.k), t, Ns, args.samples, args.seed,
                                       GROUP_ALIASES[args.group], args.steps, args.threads)
    elif args.name == "limit_transform":
        p = SingleVariablePolynomial.from_coefficients(parse_coeffs(args.coeffs))
        rep = limit_transform_experiment(p, t, Ns, args.samples, args.seed, args.steps, args.threads)
    elif args.name == "moments":
        rep = moment_experiment(parse_int_list(args.k), Ns[0], t, args.samples, args.seed, args.steps, args.threads)
    else:
        rep = isometry_experiment(parse_int_list(args.k), t, args.samples, args.seed, args.steps, args.threads)
    rep.config = {**rep.config, "cli": _config(args)}
    if args.format == "csv":
        emit(args, rep.to_csv())
    elif args.format == "pretty":
        lines = [f"# {rep.name} {json.dumps(rep.config['cli'])}"]
        for e in rep.entries:
            tgt = "" if e.target is None else f" target={e.target:.6g} z={e.z_score:+.2f}"
            lines.append(f"N={e.N} {e.statistic}: mean={e.mean:.6g} se={e.se:.3g} var={e.variance:.3g}{tgt}")
        for name, fit in rep.fits.items():
            lines.append(f"fit {name}: slope={fit.slope:.3f} +/- {fit.halfwidth:.3f}")
        emit(args, "\n".join(lines) + "\n")
    else:
        emit(args, dumps(rep.to_json()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv", "pretty"), default="json")
    common.add_argument("--out", default="-", help="output file (default: stdout)")
    common.add_argument("--degree-cap", type=int, default=DEFAULT_DEGREE_CAP)
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads for sampling (env TRACEFLOW_THREADS; default: all cores)")

    ap = argparse.ArgumentParser(prog="traceflow", description="Large-N Segal-Bargmann transform on U(N).")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("laplacian", parents=[common], help="large-N Laplacian of a trace polynomial")
    p.add_argument("--k", type=int)
    p.add_argument("--traced", action="store_true", help="Laplacian of tr(U^k) instead of U^k")
    p.add_argument("--poly", help="trace-polynomial JSON (inline or path)")
    p.set_defaults(func=cmd_laplacian)

    p = sub.add_parser("heat", parents=[common], help="exp(t Delta/2) at large N")
    p.add_argument("--coeffs", help="c0,c1,...: coefficients of I, U, U^2, ...")
    p.add_argument("--poly", help="trace-polynomial JSON (inline or path)")
    p.add_argument("--t", help="evaluate at this time (p/q or decimal)")
    p.set_defaults(func=cmd_heat)

    p = sub.add_parser("transform", parents=[common], help="free Hall transform p -> q_t")
    p.add_argument("--coeffs", required=True, help="c0,c1,...: exact rationals, e.g. 0,1/2,3")
    p.add_argument("--t", help="evaluate numerically at this time")
    p.add_argument("--symbolic", action="store_true", help="keep t symbolic (default without --t)")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("moments", parents=[common], help="limit moments nu_k(t)")
    p.add_argument("--k", default="1,2,3")
    p.add_argument("--t")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("simulate", parents=[common], help="heat-kernel Monte Carlo")
    p.add_argument("--group", choices=sorted(GROUP_ALIASES), default="u")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--t", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stat", default="tr1", help="comma list of trK statistics")
    p.add_argument("--bins", type=int, default=HIST_BINS)
    p.add_argument("--out-dir", help="write histogram.csv, statistics.csv and report.json here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", parents=[common], help="finite-N oracle suites")
    p.add_argument("--suite", default="all", help=f"{', '.join(VERIFY_SUITES)} or all")
    p.add_argument("--N", default="2,3,4")
    p.add_argument("--k")
    p.add_argument("--l")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("experiment", parents=[common], help="convergence experiments")
    p.add_argument("--name", choices=("concentration", "limit_transform", "moments", "isometry"),
                   default="concentration")
    p.add_argument("--group", choices=sorted(GROUP_ALIASES), default="u")
    p.add_argument("--N", default="8,16,32,64")
    p.add_argument("--t", default="1")
    p.add_argument("--k", default="1")
    p.add_argument("--coeffs", default="0,0,1")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except CapExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (InputError, DomainError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
