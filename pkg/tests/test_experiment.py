import json

import pytest

from lrcontact import acceptance
from lrcontact.experiment import (
    ExperimentConfig,
    certificate_ladder,
    lemma_suite,
    pipeline_end_to_end,
    pipeline_replica,
    read_records_csv,
    recompute_aggregates,
    survival_sweep,
)


def small(**kw):
    base = dict(N=300, replicas=12, seed=5, rows=5)
    base.update(kw)
    return ExperimentConfig(**base)


def strip_timing(text):
    obj = json.loads(text)
    obj.pop("timing")
    return obj


def test_config_roundtrip_and_validation(tmp_path):
    cfg = small(lambdas=[0.1, 0.2])
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert ExperimentConfig.from_file(str(path)) == cfg
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"nonsense": 1})
    with pytest.raises(ValueError):
        ExperimentConfig(replicas=-1)


def test_pipeline_replays_byte_for_byte():
    a, b = pipeline_end_to_end(small()), pipeline_end_to_end(small())
    assert a.records_csv() == b.records_csv()
    assert strip_timing(a.to_json()) == strip_timing(b.to_json())
    assert a.timing and "started" in a.timing


def test_replica_reproducible_in_isolation():
    cfg = small()
    rep = pipeline_end_to_end(cfg)
    # compare through JSON so NaN fields match
    assert json.dumps(pipeline_replica(cfg.to_dict(), 7)) == json.dumps(rep.records[7])


def test_parallel_merge_matches_serial():
    serial = pipeline_end_to_end(small())
    par = pipeline_end_to_end(small(workers=3))
    assert serial.records_csv() == par.records_csv()


def test_aggregates_recompute_from_csv(tmp_path):
    cfg = small(out=str(tmp_path))
    rep = pipeline_end_to_end(cfg)
    csv_text = (tmp_path / "pipeline_records.csv").read_text()
    assert csv_text.startswith("# schema 1")
    agg, verdicts = recompute_aggregates("pipeline", cfg, csv_text)
    saved = json.loads((tmp_path / "pipeline_report.json").read_text())
    assert json.loads(json.dumps(agg)) == saved["aggregates"]
    assert verdicts == saved["verdicts"]
    assert read_records_csv(csv_text)[0]["replica"] == 0


def test_pipeline_certificates_verify():
    rep = pipeline_end_to_end(small(replicas=20))
    assert rep.aggregates["certificates"] > 0
    assert rep.verdicts["every_certificate_verifies"] and rep.passed


def test_zero_rate_is_trivial():
    rep = pipeline_end_to_end(small(lam=0.0, T=40.0, replicas=5))
    assert rep.aggregates["certificate_frequency"] == 1.0
    assert rep.aggregates["verification_rate"] == 1.0
    with pytest.raises(ValueError):
        pipeline_end_to_end(small(lam=0.0))


def test_uncertifiable_windows_are_counted():
    rep = pipeline_end_to_end(small(buffer=0, certify_tol=1e-9, replicas=4))
    assert rep.aggregates["uncertifiable"] == 4 and rep.aggregates["certified"] == 0
    assert [r["status"] for r in rep.records] == ["uncertifiable"] * 4


def test_pipeline_rejects_heavy_tail():
    with pytest.raises(ValueError):
        pipeline_end_to_end(small(s=2.0))


def test_certificate_ladder_monotone():
    rep = certificate_ladder(small(lambdas=[0.005, 0.01, 0.05, 0.2], T=10.0, replicas=15))
    assert rep.verdicts["certificates_nonincreasing_in_lambda"]
    f = rep.aggregates["certificate_frequency"]
    assert f == sorted(f, reverse=True)


def test_sweep_zero_rate_and_monotone():
    rep = survival_sweep(small(N=60, lambdas=[0.0, 0.5, 3.0], horizon=5.0, replicas=30))
    assert rep.aggregates["survival_frequency"][0] == 0.0
    assert rep.verdicts["survival_nondecreasing_in_lambda"]
    with pytest.raises(ValueError):
        survival_sweep(small(lambdas=[0.0]))


def test_sweep_endpoints_separate():
    # s = 3, N = 500, horizon 50, 10^3 replicas
    rep = survival_sweep(ExperimentConfig(N=500, lambdas=[0.02, 2.0], horizon=50.0, replicas=1000, seed=1, workers=4))
    lo, hi = rep.aggregates["survival_frequency"]
    assert lo < hi
    assert rep.verdicts["endpoint_bands_separated"]


def test_lemma_suite_table_is_deterministic():
    a = lemma_suite(ExperimentConfig(criteria=[3, 7], seed=2))
    b = lemma_suite(ExperimentConfig(criteria=[3, 7], seed=2))
    assert a.verdicts == b.verdicts and a.records == b.records
    assert a.passed and list(a.verdicts) == ["3:convolution bound", "7:site-to-bond coupling"]


def test_lemma_suite_partial_report_on_error(monkeypatch):
    def broken(seed=0, workers=1):
        raise RuntimeError("boom")

    monkeypatch.setitem(acceptance.CRITERIA, 7, broken)
    rep = lemma_suite(ExperimentConfig(criteria=[3, 7, 1]))
    assert len(rep.records) == 1 and "boom" in rep.error and not rep.passed


def test_lemma_suite_failing_check_fails_report(monkeypatch):
    monkeypatch.setitem(acceptance.CRITERIA, 3, lambda seed=0, workers=1: acceptance.CheckResult(3, "forced", False))
    rep = lemma_suite(ExperimentConfig(criteria=[3]))
    assert not rep.passed and rep.error is None
