"""Experiment harness: configuration, replica loops and reports.

A run is fully determined by its config (which carries the root seed). Replica
``r`` draws only from streams derived from ``(seed, r, tag)``, so it can be
regenerated alone, and replicas are merged by index whatever order a worker
pool finishes them in.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable

import numpy as np

from .contact import run_contact, sample_rep, thinning_ladder
from .cutpoints import UncertifiableWindow, decompose
from .graph import GraphParams, buffer_for_error, sample_window
from .renorm import block_length, classify_good, detect_semicircuit, verify_confinement
from .seeding import child_seed

SCHEMA_VERSION = 1
log = logging.getLogger("lrcontact")


@dataclass
class ExperimentConfig:
    name: str = "pipeline"
    s: float = 3.0
    lam: float = 0.01
    lambdas: list[float] | None = None
    T: float | None = None  # box height override; needed when lam = 0
    N: int = 2000
    buffer: int | None = None  # None: smallest buffer meeting certify_tol
    certify_tol: float = 1e-2
    rows: int = 6
    horizon: float | None = None  # None: rows * T for the pipeline, 50 / lam for sweeps
    epsilon: float = 4.0
    L0: int = 16
    H0: int = 2
    pmf: dict = field(default_factory=lambda: {"kind": "geometric", "success": 0.5})
    criteria: list[int] | None = None
    replicas: int = 100
    seed: int = 0
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.replicas < 0:
            raise ValueError("replicas must be nonnegative")
        if self.rows < 1:
            raise ValueError("rows must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class RunReport:
    name: str
    config: dict
    records: list[dict]
    aggregates: dict
    verdicts: dict[str, bool]
    streams: list[str]
    timing: dict = field(default_factory=dict)  # the only nondeterministic field
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(self.verdicts.values())

    def records_csv(self) -> str:
        if not self.records:
            return f"# schema {SCHEMA_VERSION}\n"
        buf = io.StringIO()
        buf.write(f"# schema {SCHEMA_VERSION}\n")
        writer = csv.DictWriter(buf, fieldnames=list(self.records[0]), lineterminator="\n")
        writer.writeheader()
        for rec in self.records:
            writer.writerow({k: _cell(v) for k, v in rec.items()})
        return buf.getvalue()

    def to_json(self) -> str:
        obj = {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "config": self.config,
            "aggregates": self.aggregates,
            "verdicts": self.verdicts,
            "passed": self.passed,
            "rng": {"root": self.config.get("seed"), "derivation": "SeedSequence(root, spawn_key=(replica, crc32(tag)))", "tags": self.streams},
            "error": self.error,
            "timing": self.timing,
        }
        return json.dumps(obj, sort_keys=True, indent=1, default=_json_default)

    def write(self, out_dir: str) -> tuple[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, f"{self.name}_records.csv")
        json_path = os.path.join(out_dir, f"{self.name}_report.json")
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(self.records_csv())
        with open(json_path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
        return csv_path, json_path

    def verdict_table(self) -> str:
        lines = [f"{'PASS' if ok else 'FAIL'}  {key}" for key, ok in self.verdicts.items()]
        if self.error:
            lines.append(f"ERROR {self.error}")
        return "\n".join(lines)


def _cell(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    raise TypeError(f"cannot serialise {type(v)}")


def read_records_csv(text: str) -> list[dict]:
    """Per-replica records back from CSV, numbers parsed to int or float."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    out = []
    for row in csv.DictReader(lines):
        out.append({k: _parse(v) for k, v in row.items()})
    return out


def _parse(v: str):
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return math.nan, math.nan
    m = float(x.mean())
    return m, float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan


def _run_replicas(fn: Callable, cfg: ExperimentConfig) -> list[dict]:
    args = [(cfg.to_dict(), r) for r in range(cfg.replicas)]
    if cfg.workers > 1 and cfg.replicas > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(fn, *zip(*args), chunksize=max(1, cfg.replicas // (4 * cfg.workers))))
    else:
        records = [fn(*a) for a in args]
    records.sort(key=lambda rec: rec["replica"])
    return records


def _window_params(cfg: ExperimentConfig, r: int) -> GraphParams:
    buffer = cfg.buffer
    if buffer is None:
        buffer = buffer_for_error(cfg.s, cfg.certify_tol, cfg.N)
    return GraphParams(cfg.s, cfg.N, buffer, child_seed(cfg.seed, r, "window"))


def _box_height(cfg: ExperimentConfig, lam: float) -> float:
    if cfg.T is not None:
        return float(cfg.T)
    if lam <= 0:
        raise ValueError("lam = 0 needs an explicit box height T")
    return block_length(lam)


# ---------------------------------------------------------------- pipeline

PIPELINE_STREAMS = ["window", "marks"]


def pipeline_replica(cfg_dict: dict, r: int) -> dict:
    """window -> decomposition -> marks -> good boxes -> semi-circuit -> confinement."""
    cfg = ExperimentConfig.from_dict(cfg_dict)
    rec = {"replica": r, "status": "ok", "certificate": False, "verified": False,
           "circuit_length": 0, "enclosed_boxes": 0, "good_fraction": math.nan, "certification": math.nan}
    w = sample_window(_window_params(cfg, r))
    try:
        dec = decompose(w, tol=cfg.certify_tol)
    except UncertifiableWindow as exc:
        rec["status"] = "uncertifiable"
        rec["certification"] = float(exc.bound)
        log.debug("[replica %d] uncertifiable: %s", r, exc)
        return rec
    rec["certification"] = float(dec.certification)
    T = _box_height(cfg, cfg.lam)
    horizon = cfg.horizon if cfg.horizon is not None else cfg.rows * T
    rep = sample_rep(w, cfg.lam, horizon, child_seed(cfg.seed, r, "marks"))
    grid = classify_good(rep, dec, T, cfg.rows)
    rec["good_fraction"] = float(grid.good.mean())
    cert = detect_semicircuit(grid)
    if cert is not None:
        rec["certificate"] = True
        rec["circuit_length"] = len(cert.circuit)
        rec["enclosed_boxes"] = len(cert.enclosed)
        rec["verified"] = verify_confinement(rep, dec, cert)
    log.debug("[replica %d] certificate=%s verified=%s", r, rec["certificate"], rec["verified"])
    return rec


def pipeline_aggregates(records: list[dict]) -> tuple[dict, dict]:
    ok = [rec for rec in records if rec["status"] == "ok"]
    certs = [rec for rec in ok if rec["certificate"]]
    verified = sum(1 for rec in certs if rec["verified"])
    freq, freq_se = _mean_se([rec["certificate"] for rec in ok])
    agg = {
        "replicas": len(records),
        "uncertifiable": len(records) - len(ok),
        "certified": len(ok),
        "certificates": len(certs),
        "verified": verified,
        "certificate_frequency": freq,
        "certificate_frequency_se": freq_se,
        "verification_rate": verified / len(certs) if certs else math.nan,
        "mean_good_fraction": _mean_se([rec["good_fraction"] for rec in ok])[0],
    }
    verdicts = {"every_certificate_verifies": verified == len(certs)}
    return agg, verdicts


def pipeline_end_to_end(cfg: ExperimentConfig) -> RunReport:
    if cfg.s <= 2:
        raise ValueError("the pipeline needs s > 2")
    if cfg.lam < 0 or (cfg.lam == 0 and cfg.T is None):
        raise ValueError("the pipeline needs lam > 0, or lam = 0 with an explicit T")
    return _report("pipeline", cfg, pipeline_replica, pipeline_aggregates, PIPELINE_STREAMS)


# --------------------------------------------------------- certificate ladder

LADDER_STREAMS = ["window", "marks", "thinning"]


def ladder_replica(cfg_dict: dict, r: int) -> dict:
    """Certificate existence along a thinning ladder at one fixed box height."""
    cfg = ExperimentConfig.from_dict(cfg_dict)
    lambdas = sorted(cfg.lambdas)
    rec = {"replica": r, "status": "ok"}
    w = sample_window(_window_params(cfg, r))
    try:
        dec = decompose(w, tol=cfg.certify_tol)
    except UncertifiableWindow:
        rec["status"] = "uncertifiable"
        for i in range(len(lambdas)):
            rec[f"cert_{i}"] = False
        return rec
    T = _box_height(cfg, max(lambdas))
    horizon = cfg.rows * T
    top = sample_rep(w, lambdas[-1], horizon, child_seed(cfg.seed, r, "marks"))
    for i, rep in enumerate(thinning_ladder(top, lambdas, child_seed(cfg.seed, r, "thinning"))):
        rec[f"cert_{i}"] = detect_semicircuit(classify_good(rep, dec, T, cfg.rows)) is not None
    return rec


def _ladder_aggregates(lambdas):
    def agg_fn(records):
        ok = [rec for rec in records if rec["status"] == "ok"]
        freqs = [_mean_se([rec[f"cert_{i}"] for rec in ok]) for i in range(len(lambdas))]
        monotone = all(
            all(int(rec[f"cert_{i}"]) >= int(rec[f"cert_{i + 1}"]) for i in range(len(lambdas) - 1)) for rec in ok
        )
        agg = {
            "lambdas": list(lambdas),
            "certified": len(ok),
            "uncertifiable": len(records) - len(ok),
            "certificate_frequency": [f for f, _ in freqs],
            "certificate_frequency_se": [se for _, se in freqs],
        }
        return agg, {"certificates_nonincreasing_in_lambda": monotone}

    return agg_fn


def certificate_ladder(cfg: ExperimentConfig) -> RunReport:
    if not cfg.lambdas:
        raise ValueError("the ladder needs a lambda grid")
    return _report("ladder", cfg, ladder_replica, _ladder_aggregates(sorted(cfg.lambdas)), LADDER_STREAMS)


# ----------------------------------------------------------- survival sweep

SWEEP_STREAMS = ["window", "marks", "thinning"]


def _sweep_horizon(cfg: ExperimentConfig) -> float:
    if cfg.horizon is not None:
        return float(cfg.horizon)
    positive = [x for x in cfg.lambdas if x > 0]
    if not positive:
        raise ValueError("declare a horizon when every lambda is zero")
    return 50.0 / min(positive)


def sweep_replica(cfg_dict: dict, r: int) -> dict:
    """Survival to the horizon from {0} on one graph, at every rate of a thinning ladder."""
    cfg = ExperimentConfig.from_dict(cfg_dict)
    lambdas = sorted(cfg.lambdas)
    w = sample_window(GraphParams(cfg.s, cfg.N, cfg.buffer or 0, child_seed(cfg.seed, r, "window")))
    top = sample_rep(w, lambdas[-1], _sweep_horizon(cfg), child_seed(cfg.seed, r, "marks"))
    rec = {"replica": r}
    for i, rep in enumerate(thinning_ladder(top, lambdas, child_seed(cfg.seed, r, "thinning"))):
        rec[f"survived_{i}"] = run_contact(rep, [0]).survived
    return rec


def _sweep_aggregates(lambdas):
    def agg_fn(records):
        freqs = [_mean_se([rec[f"survived_{i}"] for rec in records]) for i in range(len(lambdas))]
        monotone = all(
            all(int(rec[f"survived_{i}"]) <= int(rec[f"survived_{i + 1}"]) for i in range(len(lambdas) - 1))
            for rec in records
        )
        agg = {
            "lambdas": list(lambdas),
            "replicas": len(records),
            "survival_frequency": [f for f, _ in freqs],
            "survival_frequency_se": [se for _, se in freqs],
        }
        verdicts = {"survival_nondecreasing_in_lambda": monotone}
        if len(lambdas) >= 2 and records:
            (f0, s0), (f1, s1) = freqs[0], freqs[-1]
            s0, s1 = (0.0 if math.isnan(x) else x for x in (s0, s1))
            verdicts["endpoint_bands_separated"] = f0 + 3 * s0 < f1 - 3 * s1
        return agg, verdicts

    return agg_fn


def survival_sweep(cfg: ExperimentConfig) -> RunReport:
    if not cfg.lambdas:
        raise ValueError("the sweep needs a lambda grid")
    _sweep_horizon(cfg)
    return _report("sweep", cfg, sweep_replica, _sweep_aggregates(sorted(cfg.lambdas)), SWEEP_STREAMS)


# ------------------------------------------------------------------ shared

AGGREGATORS = {
    "pipeline": lambda cfg: pipeline_aggregates,
    "ladder": lambda cfg: _ladder_aggregates(sorted(cfg.lambdas)),
    "sweep": lambda cfg: _sweep_aggregates(sorted(cfg.lambdas)),
}


def _report(kind: str, cfg: ExperimentConfig, fn, agg_fn, streams) -> RunReport:
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    records = _run_replicas(fn, cfg)
    agg, verdicts = agg_fn(records)
    report = RunReport(kind, cfg.to_dict(), records, agg, verdicts, list(streams),
                       {"started": started, "wall_clock_s": time.perf_counter() - t0})
    if cfg.out:
        report.write(cfg.out)
    return report


def recompute_aggregates(kind: str, cfg: ExperimentConfig, records_csv: str) -> tuple[dict, dict]:
    """Aggregates and verdicts rebuilt from a saved per-replica CSV."""
    return AGGREGATORS[kind](cfg)(read_records_csv(records_csv))


# ------------------------------------------------------------- lemma suite

def lemma_suite(cfg: ExperimentConfig) -> RunReport:
    """Every acceptance criterion, or the subset listed in ``cfg.criteria``.

    An exception inside a check stops the suite; the report then carries the
    results gathered so far and the error.
    """
    from . import acceptance

    ids = cfg.criteria or list(acceptance.CRITERIA)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    records, verdicts, runtimes, error = [], {}, {}, None
    for cid in ids:
        try:
            res = acceptance.run_criterion(cid, seed=cfg.seed, workers=cfg.workers)
        except Exception as exc:  # noqa: BLE001 - reported, then the suite stops
            error = f"criterion {cid}: {type(exc).__name__}: {exc}"
            log.error(error)
            break
        log.info("%s", res.line())
        records.append(res.record())
        runtimes[str(cid)] = {"runtime_s": res.runtime, "budget_s": res.budget, "within_budget": res.within_budget}
        verdicts[f"{cid}:{res.name}"] = res.passed
    report = RunReport("lemma_suite", cfg.to_dict(), records, {"criteria_run": len(records), "criteria_passed": sum(verdicts.values())},
                       verdicts, ["per-criterion streams derived from the root seed"],
                       {"started": started, "wall_clock_s": time.perf_counter() - t0, "criteria": runtimes}, error)
    if cfg.out:
        report.write(cfg.out)
    return report
