"""Replication engine: generate -> fit -> debias -> test, with metrics.

Each replication owns private RNG substreams keyed by (seed, replication
index, stream label), so a report is a pure function of (config, seed) no
matter how many workers execute it. Aggregation is a deterministic fold in
replication order, and the report writer re-derives every aggregate from
the per-replication records as a self-consistency audit.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .debias import fit_and_debias
from .errors import ComputeError, DegenerateCoordinateError, InvalidInputError
from .model import LinkFunction
from .simgen import (
    CoefficientSpec,
    CovarianceSpec,
    DesignSpec,
    gen_coefficients,
    gen_design,
    substream,
)
from .testing import global_test, lmt_fdr, lmt_fdv, two_sample_stats

REPORT_SCHEMA_VERSION = "hdlogit-report-1"
FAILURE_CAP = 0.01
_FDP_QUANTILES = (0.25, 0.5, 0.75, 0.9)

_PROCEDURE_KINDS = ("global", "lmt", "lmt_fdv", "two_global", "two_lmt", "two_lmt_fdv")


@dataclass(frozen=True)
class ProcedureSpec:
    """Which test to run per replication and at what target level."""

    kind: str
    alpha: float = 0.05
    r: float = 1.0

    def __post_init__(self):
        if self.kind not in _PROCEDURE_KINDS:
            raise InvalidInputError(f"unknown procedure kind {self.kind!r}")
        if self.kind.endswith("fdv"):
            if not self.r > 0:
                raise InvalidInputError("tolerated count r must be positive")
        elif not 0.0 < self.alpha < 1.0:
            raise InvalidInputError("alpha must lie in (0, 1)")

    @property
    def two_sample(self) -> bool:
        return self.kind.startswith("two_")


@dataclass(frozen=True)
class ScenarioConfig:
    design: DesignSpec
    coefficients: CoefficientSpec
    procedure: ProcedureSpec
    replications: int
    seed: int
    sample_split: bool = False
    lambda_const: float = 1.0
    grid_size: int = 50
    grid_ratio: float = 1e-3
    kappa0: float = 0.0
    kappa1: float = 0.5
    tol: float = 1e-7
    max_iter: int = 10_000
    omega_identity: bool = False
    link: LinkFunction = field(default_factory=LinkFunction.logistic)
    design2: Optional[DesignSpec] = None
    coefficients2: Optional[CoefficientSpec] = None
    share_beta: bool = True
    # Testing seam: callable rep_index -> (stats_vector, null_mask); skips
    # generation and fitting entirely. Never serialized.
    stats_hook: Optional[Callable] = None

    def __post_init__(self):
        if self.replications < 1:
            raise InvalidInputError("replications must be >= 1")
        if self.design.p != self.coefficients.p:
            raise InvalidInputError(
                f"design p={self.design.p} != coefficients p={self.coefficients.p}"
            )
        if self.procedure.two_sample:
            d2 = self.design2 or self.design
            if d2.p != self.design.p:
                raise InvalidInputError("two-sample designs must share p")
        if self.procedure.kind.endswith("fdv") and not self.procedure.r < self.design.p:
            raise InvalidInputError("tolerated count r must be below p")

    def to_dict(self) -> dict:
        """JSON-serializable echo of the full resolved configuration."""
        d = {
            "design": _design_dict(self.design),
            "coefficients": _coefficients_dict(self.coefficients),
            "procedure": {"kind": self.procedure.kind},
            "replications": self.replications,
            "seed": self.seed,
            "sample_split": self.sample_split,
            "solver": {
                "lambda_const": self.lambda_const,
                "grid_size": self.grid_size,
                "grid_ratio": self.grid_ratio,
                "kappa0": self.kappa0,
                "kappa1": self.kappa1,
                "tol": self.tol,
                "max_iter": self.max_iter,
                "omega_identity": self.omega_identity,
            },
            "link": self.link.kind,
        }
        if self.procedure.kind.endswith("fdv"):
            d["procedure"]["r"] = self.procedure.r
        else:
            d["procedure"]["alpha"] = self.procedure.alpha
        if self.procedure.two_sample:
            d["two_sample"] = {"share_beta": self.share_beta}
            if self.design2 is not None:
                d["two_sample"]["design2"] = _design_dict(self.design2)
            if self.coefficients2 is not None:
                d["two_sample"]["coefficients2"] = _coefficients_dict(self.coefficients2)
        return d


def _design_dict(spec: DesignSpec) -> dict:
    cov = {"kind": spec.covariance.kind}
    if spec.covariance.kind == "block":
        cov["value"] = spec.covariance.value
        cov["num_blocks"] = spec.covariance.num_blocks
    elif spec.covariance.kind == "toeplitz_block":
        cov["num_blocks"] = spec.covariance.num_blocks
        cov["scale"] = spec.covariance.scale
    elif spec.covariance.kind == "custom":
        cov["matrix"] = spec.covariance.matrix.tolist()
    d = {"n": spec.n, "p": spec.p, "covariance": cov, "mode": spec.mode}
    if spec.bound is not None:
        d["bound"] = spec.bound
    return d


def _coefficients_dict(spec: CoefficientSpec) -> dict:
    d = {"k": spec.k, "rho": spec.rho}
    d["support"] = "random" if spec.support == "random" else list(spec.support)
    return d


@dataclass(frozen=True)
class SimulationReport:
    config: dict
    records: tuple
    aggregates: dict
    failures: int
    wall_clock_seconds: float

    def to_json(self, indent: Optional[int] = None) -> str:
        body = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "config": self.config,
            "replications": len(self.records),
            "failures": self.failures,
            "records": list(self.records),
            "aggregates": self.aggregates,
            "wall_clock_seconds": self.wall_clock_seconds,
        }
        audit = _aggregate(self.records)
        if audit != self.aggregates:
            raise ComputeError("report aggregates do not match per-replication records")
        return json.dumps(body, sort_keys=True, indent=indent)

    def records_csv(self) -> str:
        """Flat CSV export of the per-replication records."""
        if not self.records:
            return ""
        cols = sorted({k for rec in self.records for k in rec})
        lines = [",".join(cols)]
        for rec in self.records:
            lines.append(",".join(_csv_cell(rec.get(c)) for c in cols))
        return "\n".join(lines) + "\n"


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _run_replication(config: ScenarioConfig, i: int) -> dict:
    proc = config.procedure
    rec: dict = {"rep": i, "failed": False, "error": None}
    try:
        if config.stats_hook is not None:
            stats, null_mask = config.stats_hook(i)
            stats = np.asarray(stats, dtype=float)
            null_mask = np.asarray(null_mask, dtype=bool)
        elif proc.two_sample:
            beta1 = gen_coefficients(config.coefficients, substream(config.seed, i, "coef"))
            if config.share_beta:
                beta2 = beta1
            else:
                spec2 = config.coefficients2 or config.coefficients
                beta2 = gen_coefficients(spec2, substream(config.seed, i, "coef2"))
            d1 = gen_design(
                config.design, beta1, substream(config.seed, i, "design1"), config.link
            )
            d2 = gen_design(
                config.design2 or config.design,
                beta2,
                substream(config.seed, i, "design2"),
                config.link,
            )
            r1 = _pipeline(config, d1)
            r2 = _pipeline(config, d2)
            stats = two_sample_stats(r1.debiased, r2.debiased)
            null_mask = beta1 == beta2
        else:
            beta = gen_coefficients(config.coefficients, substream(config.seed, i, "coef"))
            data = gen_design(
                config.design, beta, substream(config.seed, i, "design"), config.link
            )
            stats = _pipeline(config, data).debiased.m_stats
            null_mask = beta == 0.0
        rec.update(_apply_procedure(proc, stats, null_mask))
    except (DegenerateCoordinateError, ComputeError) as exc:
        rec["failed"] = True
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


def _pipeline(config: ScenarioConfig, data):
    return fit_and_debias(
        data,
        link=config.link,
        lambda_const=config.lambda_const,
        grid_size=config.grid_size,
        grid_ratio=config.grid_ratio,
        kappa0=config.kappa0,
        kappa1=config.kappa1,
        tol=config.tol,
        max_iter=config.max_iter,
        sample_split=config.sample_split,
        omega_identity=config.omega_identity,
    )


def _apply_procedure(proc: ProcedureSpec, stats: np.ndarray, null_mask: np.ndarray) -> dict:
    k_true = int(np.count_nonzero(~null_mask))
    rec = {"k_true": k_true}
    if proc.kind in ("global", "two_global"):
        res = global_test(stats, proc.alpha)
        rec.update(
            statistic=res.statistic,
            threshold=res.threshold,
            p_value=res.p_value,
            reject=res.reject,
            false_rejection=bool(res.reject and k_true == 0),
        )
        return rec
    if proc.kind in ("lmt", "two_lmt"):
        res = lmt_fdr(stats, proc.alpha)
    else:
        res = lmt_fdv(stats, proc.r)
    rejected = res.rejected
    fp = int(np.count_nonzero(null_mask[rejected]))
    tp = rejected.size - fp
    rec.update(
        threshold=res.threshold,
        fallback_used=res.fallback_used,
        rejected_count=int(rejected.size),
        true_positives=tp,
        false_positives=fp,
        fdp=fp / max(rejected.size, 1),
    )
    return rec


def _mc_se(q: float, m: int) -> float:
    return float(np.sqrt(q * (1.0 - q) / m)) if m > 0 else float("nan")


def _aggregate(records: Sequence[dict]) -> dict:
    ok = [r for r in records if not r["failed"]]
    agg: dict = {"successful_replications": len(ok)}
    if not ok:
        return agg
    m = len(ok)
    if "reject" in ok[0]:  # global procedure
        rate = sum(1 for r in ok if r["reject"]) / m
        null_run = all(r["k_true"] == 0 for r in ok)
        key = "empirical_size" if null_run else "empirical_power"
        agg[key] = rate
        agg["mc_standard_error"] = _mc_se(rate, m)
        agg["empirical_FWER"] = sum(1 for r in ok if r["false_rejection"]) / m
        return agg
    fdp = np.array([r["fdp"] for r in ok])
    fp = np.array([r["false_positives"] for r in ok])
    power = np.array([r["true_positives"] / max(r["k_true"], 1) for r in ok])
    null_run = all(r["k_true"] == 0 for r in ok)
    agg["empirical_FDR"] = float(np.mean(fdp))
    agg["FDP_quantiles"] = {
        str(q): float(np.quantile(fdp, q)) for q in _FDP_QUANTILES
    }
    agg["empirical_FDV"] = float(np.mean(fp))
    agg["empirical_FWER"] = float(np.mean(fp >= 1))
    if null_run:
        agg["empirical_size"] = agg["empirical_FWER"]
        agg["mc_standard_error"] = _mc_se(agg["empirical_FWER"], m)
    else:
        agg["empirical_power"] = float(np.mean(power))
        agg["mc_standard_error"] = _mc_se(float(np.mean(power)), m)
    return agg


def run_scenario(
    config: ScenarioConfig, workers: int = 1, _pool: Optional[ProcessPoolExecutor] = None
) -> SimulationReport:
    """Execute all replications of one scenario and aggregate.

    Deterministic given (config, seed): records are keyed by replication
    index, so worker count changes only the wall clock. A scenario aborts
    if more than 1% of replications fail.
    """
    start = time.monotonic()
    n_reps = config.replications
    if workers > 1 and config.stats_hook is not None:
        raise InvalidInputError("stats_hook scenarios must run with workers=1")
    if (workers > 1 or _pool is not None) and config.stats_hook is None:
        pool = _pool or ProcessPoolExecutor(max_workers=workers)
        try:
            chunk = max(1, n_reps // (max(workers, 1) * 8))
            records = list(
                pool.map(_replication_task, ((config, i) for i in range(n_reps)), chunksize=chunk)
            )
        finally:
            if _pool is None:
                pool.shutdown()
    else:
        records = [_run_replication(config, i) for i in range(n_reps)]
    failures = sum(1 for r in records if r["failed"])
    if failures > FAILURE_CAP * n_reps:
        msgs = [r["error"] for r in records if r["failed"]][:5]
        raise ComputeError(
            f"{failures}/{n_reps} replications failed (cap {FAILURE_CAP:.0%}); "
            f"first errors: {msgs}"
        )
    return SimulationReport(
        config=config.to_dict(),
        records=tuple(records),
        aggregates=_aggregate(records),
        failures=failures,
        wall_clock_seconds=time.monotonic() - start,
    )


def _replication_task(args) -> dict:
    config, i = args
    return _run_replication(config, i)


def sweep(configs: Sequence[ScenarioConfig], workers: int = 1):
    """Run several scenarios against a shared worker pool, in input order.

    A scenario abort does not cancel its siblings: all scenarios are
    attempted, and if any aborted a ComputeError carrying the completed
    reports (`.reports`) and per-scenario errors (`.errors`) is raised.
    """
    if not configs:
        raise InvalidInputError("config list is empty")
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    reports = []
    errors = []
    try:
        for idx, cfg in enumerate(configs):
            try:
                reports.append(run_scenario(cfg, workers=workers, _pool=pool))
            except ComputeError as exc:
                reports.append(None)
                errors.append((idx, exc))
    finally:
        if pool is not None:
            pool.shutdown()
    if errors:
        err = ComputeError(
            f"{len(errors)} of {len(configs)} scenarios aborted: "
            + "; ".join(f"#{i}: {e}" for i, e in errors)
        )
        err.reports = reports
        err.errors = errors
        raise err
    return reports


# ------------------------- simulate-config JSON schema -------------------

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["design", "coefficients", "procedure", "replications", "seed"],
    "additionalProperties": False,
    "properties": {
        "design": {"$ref": "#/$defs/design"},
        "coefficients": {"$ref": "#/$defs/coefficients"},
        "procedure": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {
                    "enum": [
                        "global",
                        "lmt",
                        "lmt_fdv",
                        "two_global",
                        "two_lmt",
                        "two_lmt_fdv",
                    ]
                },
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "r": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "replications": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "sample_split": {"type": "boolean"},
        "link": {"enum": ["logistic", "probit"]},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambda_const": {"type": "number", "exclusiveMinimum": 0},
                "grid_size": {"type": "integer", "minimum": 2},
                "grid_ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "kappa0": {"type": "number", "minimum": 0, "maximum": 1},
                "kappa1": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "omega_identity": {"type": "boolean"},
            },
        },
        "two_sample": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "share_beta": {"type": "boolean"},
                "design2": {"$ref": "#/$defs/design"},
                "coefficients2": {"$ref": "#/$defs/coefficients"},
            },
        },
    },
    "$defs": {
        "design": {
            "type": "object",
            "required": ["n", "p", "covariance"],
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 2},
                "p": {"type": "integer", "minimum": 1},
                "covariance": {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["block", "toeplitz_block", "identity", "custom"]},
                        "value": {"type": "number"},
                        "num_blocks": {"type": "integer", "minimum": 1},
                        "scale": {"type": "number", "exclusiveMinimum": 0},
                        "matrix": {
                            "type": "array",
                            "items": {"type": "array", "items": {"type": "number"}},
                        },
                    },
                },
                "mode": {"enum": ["gaussian", "truncated", "bounded"]},
                "bound": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "coefficients": {
            "type": "object",
            "required": ["k"],
            "additionalProperties": False,
            "properties": {
                "k": {"type": "integer", "minimum": 0},
                "rho": {"type": "number"},
                "support": {
                    "anyOf": [
                        {"const": "random"},
                        {"type": "array", "items": {"type": "integer", "minimum": 1}},
                    ]
                },
            },
        },
    },
}


def config_from_dict(doc: dict) -> ScenarioConfig:
    """Validate a simulate-config document and build the ScenarioConfig."""
    import jsonschema

    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        pointer = "/" + "/".join(str(x) for x in exc.absolute_path)
        raise InvalidInputError(f"config invalid at {pointer}: {exc.message}") from None

    def design_from(d: dict) -> DesignSpec:
        cov = d["covariance"]
        kind = cov["kind"]
        p = d["p"]
        if kind == "block":
            spec = CovarianceSpec.block(p, cov.get("value", 0.0), cov.get("num_blocks", 10))
        elif kind == "toeplitz_block":
            spec = CovarianceSpec.toeplitz_block(
                p, cov.get("num_blocks", 10), cov.get("scale", 1.0)
            )
        elif kind == "identity":
            spec = CovarianceSpec.identity(p)
        else:
            spec = CovarianceSpec.custom(cov["matrix"])
            if spec.p != p:
                raise InvalidInputError(
                    f"config invalid at /design/covariance/matrix: "
                    f"matrix is {spec.p}x{spec.p} but p={p}"
                )
        return DesignSpec(
            covariance=spec, n=d["n"], mode=d.get("mode", "gaussian"), bound=d.get("bound")
        )

    def coefficients_from(c: dict, p: int) -> CoefficientSpec:
        support = c.get("support", "random")
        if support != "random":
            support = tuple(i - 1 for i in support)  # config uses 1-based indices
        return CoefficientSpec(p=p, k=c["k"], rho=c.get("rho", 0.0), support=support)

    design = design_from(doc["design"])
    proc = doc["procedure"]
    procedure = ProcedureSpec(
        kind=proc["kind"], alpha=proc.get("alpha", 0.05), r=proc.get("r", 1.0)
    )
    solver = doc.get("solver", {})
    two = doc.get("two_sample", {})
    design2 = design_from(two["design2"]) if "design2" in two else None
    coefficients2 = (
        coefficients_from(two["coefficients2"], (design2 or design).p)
        if "coefficients2" in two
        else None
    )
    return ScenarioConfig(
        design=design,
        coefficients=coefficients_from(doc["coefficients"], design.p),
        procedure=procedure,
        replications=doc["replications"],
        seed=doc["seed"],
        sample_split=doc.get("sample_split", False),
        lambda_const=solver.get("lambda_const", 1.0),
        grid_size=solver.get("grid_size", 50),
        grid_ratio=solver.get("grid_ratio", 1e-3),
        kappa0=solver.get("kappa0", 0.0),
        kappa1=solver.get("kappa1", 0.5),
        tol=solver.get("tol", 1e-7),
        max_iter=solver.get("max_iter", 10_000),
        omega_identity=solver.get("omega_identity", False),
        link=LinkFunction.from_name(doc.get("link", "logistic")),
        design2=design2,
        coefficients2=coefficients2,
        share_beta=two.get("share_beta", True),
    )
