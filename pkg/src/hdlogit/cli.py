"""Command-line surface.

Subcommands: fit, global-test, multi-test, two-sample, simulate, radius.
CSV inputs carry a header row whose first column is `y` (entries 0/1) with
numeric covariate columns after it. All outputs are JSON on stdout with a
schema-version string and the fully resolved configuration; coordinate
indices in outputs are 1-based to match the usual j = 1..p convention.

Exit codes: 0 success, 1 compute failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .debias import fit_and_debias
from .errors import ComputeError, InvalidInputError
from .harness import config_from_dict, run_scenario
from .model import Dataset, LinkFunction
from .testing import (
    global_test,
    group_global_test,
    lmt_fdr,
    lmt_fdv,
    separation_radius,
    two_sample_global,
    two_sample_stats,
)

OUTPUT_SCHEMA_VERSION = "hdlogit-cli-1"


def read_dataset(path: str):
    """Parse a CSV into (Dataset, covariate names). Errors carry row/column."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidInputError(f"{path}: file is empty") from None
        if not header or header[0].strip() != "y":
            raise InvalidInputError(
                f"{path}: first column must be named 'y', got {header[0]!r}"
                if header
                else f"{path}: empty header row"
            )
        names = [h.strip() for h in header[1:]]
        if not names:
            raise InvalidInputError(f"{path}: no covariate columns after 'y'")
        ys, rows = [], []
        for ridx, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InvalidInputError(
                    f"{path}: row {ridx} has {len(row)} fields, expected {len(header)}"
                )
            vals = []
            for cidx, cell in enumerate(row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise InvalidInputError(
                        f"{path}: row {ridx}, column {header[cidx]!r}: "
                        f"not a number: {cell!r}"
                    ) from None
            if vals[0] not in (0.0, 1.0):
                raise InvalidInputError(
                    f"{path}: row {ridx}: y must be 0 or 1, got {row[0]!r}"
                )
            ys.append(vals[0])
            rows.append(vals[1:])
        if not rows:
            raise InvalidInputError(f"{path}: no data rows")
    return Dataset(np.asarray(rows), np.asarray(ys)), names


def _pipeline_kwargs(args) -> dict:
    return dict(
        link=LinkFunction.from_name(args.link),
        lambda_const=args.lambda_const,
        grid_size=args.grid_size,
        kappa0=args.kappa0,
        kappa1=args.kappa1,
        sample_split=args.split,
        omega_identity=args.omega_identity,
    )


def _coord_payload(result, names):
    deb = result.debiased
    return {
        "columns": names,
        "beta_hat": result.lasso.beta_hat.tolist(),
        "beta_check": deb.beta_check.tolist(),
        "tau": deb.tau.tolist(),
        "m_stats": deb.m_stats.tolist(),
        "lasso": {
            "lambda": result.lasso.lambda_,
            "iterations": result.lasso.iterations,
            "kkt_residual": result.lasso.kkt_residual,
            "converged": result.lasso.converged,
        },
    }


def _emit(payload: dict, args) -> None:
    payload["schema_version"] = OUTPUT_SCHEMA_VERSION
    text = json.dumps(payload, sort_keys=True)
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)


def _cmd_fit(args) -> int:
    data, names = read_dataset(args.csv)
    result = fit_and_debias(data, **_pipeline_kwargs(args))
    payload = {"config": result.knobs, "n": data.n, "p": data.p}
    payload.update(_coord_payload(result, names))
    _emit(payload, args)
    return 0


def _cmd_global_test(args) -> int:
    data, names = read_dataset(args.csv)
    result = fit_and_debias(data, **_pipeline_kwargs(args))
    m = result.debiased.m_stats
    if args.group:
        idx0 = _parse_group(args.group, data.p)
        test = group_global_test(m, idx0, args.alpha)
    else:
        test = global_test(m, args.alpha)
    payload = {
        "config": {**result.knobs, "alpha": args.alpha, "group": args.group},
        "n": data.n,
        "p": data.p,
        "statistic": test.statistic,
        "threshold": test.threshold,
        "q_alpha": test.q_alpha,
        "p_value": test.p_value,
        "reject": test.reject,
    }
    payload.update(_coord_payload(result, names))
    _emit(payload, args)
    return 0


def _parse_group(text: str, p: int):
    try:
        idx = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise InvalidInputError(f"--group must be comma-separated integers, got {text!r}")
    if any(i < 1 or i > p for i in idx):
        raise InvalidInputError(f"--group indices must lie in 1..{p}")
    return [i - 1 for i in idx]


def _cmd_multi_test(args) -> int:
    if (args.fdr is None) == (args.fdv is None):
        raise InvalidInputError("exactly one of --fdr or --fdv is required")
    data, names = read_dataset(args.csv)
    result = fit_and_debias(data, **_pipeline_kwargs(args))
    m = result.debiased.m_stats
    res = lmt_fdr(m, args.fdr) if args.fdr is not None else lmt_fdv(m, args.fdv)
    payload = {
        "config": {**result.knobs, "fdr": args.fdr, "fdv": args.fdv},
        "n": data.n,
        "p": data.p,
        "mode": res.mode,
        "threshold": res.threshold,
        "fallback_used": res.fallback_used,
        "rejected": (res.rejected + 1).tolist(),
    }
    payload.update(_coord_payload(result, names))
    _emit(payload, args)
    return 0


def _cmd_two_sample(args) -> int:
    modes = [args.fdr is not None, args.fdv is not None]
    if sum(modes) > 1:
        raise InvalidInputError("use at most one of --fdr / --fdv")
    d1, names1 = read_dataset(args.csv1)
    d2, names2 = read_dataset(args.csv2)
    if d1.p != d2.p:
        raise InvalidInputError(f"dimension mismatch: p={d1.p} vs p={d2.p}")
    kwargs = _pipeline_kwargs(args)
    r1 = fit_and_debias(d1, **kwargs)
    r2 = fit_and_debias(d2, **kwargs)
    t = two_sample_stats(r1.debiased, r2.debiased)
    payload = {
        "config": {**r1.knobs, "alpha": args.alpha, "fdr": args.fdr, "fdv": args.fdv},
        "n1": d1.n,
        "n2": d2.n,
        "p": d1.p,
        "columns": names1,
        "t_stats": t.tolist(),
    }
    if args.fdr is not None:
        res = lmt_fdr(t, args.fdr)
    elif args.fdv is not None:
        res = lmt_fdv(t, args.fdv)
    else:
        test = two_sample_global(t, args.alpha)
        payload.update(
            statistic=test.statistic,
            threshold=test.threshold,
            p_value=test.p_value,
            reject=test.reject,
        )
        _emit(payload, args)
        return 0
    payload.update(
        mode=res.mode,
        threshold=res.threshold,
        fallback_used=res.fallback_used,
        rejected=(res.rejected + 1).tolist(),
    )
    _emit(payload, args)
    return 0



def _cmd_simulate(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InvalidInputError(f"cannot open {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{args.config}: invalid JSON: {exc}") from None
    if args.seed is not None:
        doc["seed"] = args.seed
    config = config_from_dict(doc)
    report = run_scenario(config, workers=args.workers)
    text = report.to_json()
    if args.records_csv:
        with open(args.records_csv, "w", encoding="utf-8") as fh:
            fh.write(report.records_csv())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _cmd_radius(args) -> int:
    value = separation_radius(args.n, args.p, args.k, args.alpha, args.delta)
    print(repr(value))
    return 0


def _add_pipeline_flags(sp) -> None:
    sp.add_argument("--lambda-const", type=float, default=1.0, dest="lambda_const")
    sp.add_argument("--grid-size", type=int, default=50, dest="grid_size")
    sp.add_argument("--kappa0", type=float, default=0.0)
    sp.add_argument("--kappa1", type=float, default=0.5)
    split = sp.add_mutually_exclusive_group()
    split.add_argument("--split", action="store_true", dest="split")
    split.add_argument("--no-split", action="store_false", dest="split")
    sp.set_defaults(split=False)
    sp.add_argument("--omega-identity", action="store_true", dest="omega_identity")
    sp.add_argument("--link", choices=["logistic", "probit"], default="logistic")
    sp.add_argument("--out", default=None, help="also write the JSON output to this path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdlogit",
        description="Global and simultaneous testing for high-dimensional "
        "logistic regression",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("fit", help="penalized fit plus debiased coefficients")
    sp.add_argument("csv")
    _add_pipeline_flags(sp)
    sp.set_defaults(func=_cmd_fit)

    sp = sub.add_parser("global-test", help="test the global null beta = 0")
    sp.add_argument("csv")
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--group", default=None, help="1-based indices, e.g. '1,5,9'")
    _add_pipeline_flags(sp)
    sp.set_defaults(func=_cmd_global_test)

    sp = sub.add_parser("multi-test", help="simultaneous coordinate tests")
    sp.add_argument("csv")
    sp.add_argument("--fdr", type=float, default=None, metavar="ALPHA")
    sp.add_argument("--fdv", type=float, default=None, metavar="R")
    _add_pipeline_flags(sp)
    sp.set_defaults(func=_cmd_multi_test)

    sp = sub.add_parser("two-sample", help="compare two logistic regressions")
    sp.add_argument("csv1")
    sp.add_argument("csv2")
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--fdr", type=float, default=None, metavar="ALPHA")
    sp.add_argument("--fdv", type=float, default=None, metavar="R")
    _add_pipeline_flags(sp)
    sp.set_defaults(func=_cmd_two_sample)

    sp = sub.add_parser("simulate", help="run a simulation scenario from JSON config")
    sp.add_argument("config")
    sp.add_argument("--seed", type=int, default=None, help="override the config seed")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--records-csv", default=None, dest="records_csv")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("radius", help="separation-radius calculator")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--k", type=int, required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--delta", type=float, required=True)
    sp.set_defaults(func=_cmd_radius)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ComputeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
