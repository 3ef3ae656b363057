"""Acceptance criteria, one test each. Every test prints a single PASS/FAIL line.

The pipeline criteria run the default synthetic configuration end to end
with BLAS limited to one thread. Run with ``pytest tests/test_acceptance.py -s``
to see the lines inline; they are also repeated in the terminal summary.
"""
import json
import time

import pytest
from threadpoolctl import threadpool_limits

import test_evaluation
import test_metric
import test_predictor
import test_profiles
import test_temporal
from cmlrec.evaluation import comps_overlap
from cmlrec.pipeline import STAGES, load_config, run_all
from conftest import ACCEPTANCE_LINES

MIN_GAIN = 0.03
MAX_TRAIN_TEST_GAP = 0.15
MIN_COMPS_OVERLAP = 6
MIN_PURITY = 0.8
RUNTIME_LIMIT_S = 300.0
TRUNCATED_TOKENS = 10
DETERMINISM_FILES = ["embedding.bin", "metric.bin", "predictor.json", "baseline.json", "metrics.json",
                     "comps.json", "projection.json", "predictions.csv", "manifest.json"]


def record(name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def _run(root, overrides=(), stages=tuple(STAGES)):
    cfg = load_config(overrides=[f"paths.artifacts={json.dumps(str(root))}", *overrides], env={})
    with threadpool_limits(limits=1):
        start = time.perf_counter()
        run_all(cfg, stages)
        return time.perf_counter() - start


def _read(root, name):
    return json.loads((root / name).read_text())


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("full")
    return root, _run(root)


@pytest.fixture(scope="module")
def repeat_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("repeat")
    _run(root)
    return root


@pytest.fixture(scope="module")
def truncated_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("truncated")
    _run(root, [f"text.max_plot_tokens={TRUNCATED_TOKENS}"],
         ["synth", "ingest", "embed", "pairs", "train-metric", "project"])
    return root


def _property_check(fn):
    try:
        fn()
        return True, ""
    except Exception as exc:  # hypothesis re-raises the falsifying example
        return False, f" ({type(exc).__name__}: {str(exc).splitlines()[0][:120]})"


def test_headline_gain(full_run):
    root, seconds = full_run
    auc = _read(root, "metrics.json")["auc"]
    deep, base = auc["deep"]["test"], auc["baseline"]["test"]
    ok = deep - base >= MIN_GAIN and seconds < RUNTIME_LIMIT_S
    record("headline gain", ok,
           f"held-out AUC deep={deep:.4f} baseline={base:.4f} gain={deep - base:.4f} (>= {MIN_GAIN}); "
           f"runtime {seconds:.1f}s single-threaded (< {RUNTIME_LIMIT_S:.0f}s)")


def test_train_auc_not_below_test(full_run):
    auc = _read(full_run[0], "metrics.json")["auc"]["deep"]
    gap = auc["train"] - auc["test"]
    record("train >= new-movie AUC", 0 <= gap <= MAX_TRAIN_TEST_GAP,
           f"deep train={auc['train']:.4f} test={auc['test']:.4f} gap={gap:.4f} (0 <= gap <= {MAX_TRAIN_TEST_GAP})")


def test_comps_quality(full_run):
    comps = _read(full_run[0], "comps.json")
    record("comps quality", comps["overlap"] >= MIN_COMPS_OVERLAP,
           f"target {comps['target']} overlap {comps['overlap']}/10 (>= {MIN_COMPS_OVERLAP}); "
           f"mean over {len(comps['holdout_overlap'])} held-out targets {comps['holdout_overlap_mean']:.2f}")


def test_published_comps_fixture():
    first = comps_overlap(test_evaluation.SHOWMAN_PREDICTED, test_evaluation.SHOWMAN_ACTUAL, 10)
    second = comps_overlap(test_evaluation.FERDINAND_PREDICTED, test_evaluation.FERDINAND_ACTUAL, 10)
    record("published comps fixture", first == 8 and second == 6,
           f"overlap {first} (== 8); companion list {second} (== 6)")


def test_gradient_oracles():
    siamese = max(test_metric.siamese_gradient_error(m)[0] for m in (None, 0.5))
    logistic = max(test_predictor.logistic_gradient_error(s) for s in range(5))
    ok = siamese < test_metric.GRAD_RTOL and logistic < test_predictor.LOGIT_GRAD_RTOL
    record("gradient oracles", ok,
           f"siamese max rel err {siamese:.2e} (< 1e-4, step 1e-5); logistic max rel err {logistic:.2e} (< 1e-6)")


def test_auc_oracle_equivalence():
    bad = test_evaluation.auc_oracle_mismatches(1000, seed=0)
    record("AUC oracle equivalence", bad == 0, f"{bad} mismatches over 1000 tied random sets of <= 200 points")


def test_temporal_hygiene_properties():
    results = [_property_check(test_temporal.test_pairs_respect_release_order),
               _property_check(test_temporal.test_feature_rows_only_see_the_past)]
    ok = all(r[0] for r in results)
    record("temporal hygiene", ok, "1000 random worlds each for pairs and feature rows"
           + "".join(r[1] for r in results))


def test_customer_vector_laws():
    laws = {
        "zero-delta mean": test_profiles.test_zero_delta_is_plain_mean,
        "single purchase": test_profiles.test_single_purchase_identity,
        "convex hull": test_profiles.test_convex_hull,
        "large-delta limit": test_profiles.test_large_delta_picks_latest,
    }
    results = {name: _property_check(fn) for name, fn in laws.items()}
    failed = [f"{n}{msg}" for n, (ok, msg) in results.items() if not ok]
    record("customer-vector laws", not failed,
           f"{len(laws)} laws x 1000 cases" + (f"; failed: {failed}" if failed else ""))


def test_determinism(full_run, repeat_run):
    differing = [n for n in DETERMINISM_FILES
                 if (full_run[0] / n).read_bytes() != (repeat_run / n).read_bytes()]
    record("determinism", not differing,
           f"{len(DETERMINISM_FILES) - len(differing)}/{len(DETERMINISM_FILES)} artifacts byte-identical"
           + (f"; differing: {differing}" if differing else ""))


def test_cluster_projection(full_run, truncated_run):
    full = _read(full_run[0], "projection.json")["purity"]
    short = _read(truncated_run, "projection.json")["purity"]
    record("cluster projection", full >= MIN_PURITY and short < full,
           f"k-means purity full plots={full:.3f} (>= {MIN_PURITY}); first {TRUNCATED_TOKENS} tokens={short:.3f} (< full)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
