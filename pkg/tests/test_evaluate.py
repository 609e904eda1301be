"""Metrics, stratified folds and the comparison harness."""

import numpy as np
import pytest

from cobra.core import ADVISEE, ADVISOR, TARGET, AgentId, ContextVector, EvidenceRecord, EvidenceStore
from cobra.bnn import TrainHyperparams
from cobra.evaluate import (
    CompareInputs,
    accuracy,
    compare,
    kfold,
    rmse,
    write_comparison,
    write_plot_data,
)


class TestAccuracy:
    def test_fixture(self):
        pred = [1, 1, 1, 1, 1, 1, 1, 1, 1, 0]
        true = [1] * 10
        acc, conf = accuracy(pred, true)
        assert acc == pytest.approx(0.9)
        assert (conf.tp, conf.fn, conf.fp, conf.tn) == (9, 1, 0, 0)

    def test_perfect_and_all_wrong(self):
        assert accuracy([1, 0, 1], [1, 0, 1])[0] == 1.0
        assert accuracy([0, 1, 0], [1, 0, 1])[0] == 0.0

    def test_scores_threshold_at_half(self):
        acc, conf = accuracy([0.51, 0.49], [1, 0])
        assert acc == 1.0
        assert conf.m == 2

    def test_confusion_sums_to_m(self):
        rng = np.random.default_rng(0)
        pred = rng.uniform(size=97)
        true = (rng.random(97) < 0.5).astype(float)
        acc, conf = accuracy(pred, true)
        assert conf.m == 97
        assert acc + (conf.fp + conf.fn) / conf.m == pytest.approx(1.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            accuracy([1, 0], [1])


class TestRmse:
    def test_fixture_is_one_fifth(self):
        # exact real value is 0.2; the float realization may sit one ulp off
        assert rmse([0.8, 0.2], [1, 0]) == pytest.approx(0.2, abs=1e-15)

    def test_exact_predictions(self):
        assert rmse([1.0, 0.0, 1.0], [1, 0, 1]) == 0.0

    def test_maximal_single_error(self):
        assert rmse([0.0], [1]) == 1.0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(1)
        pred = rng.uniform(size=50)
        true = (rng.random(50) < 0.5).astype(float)
        perm = rng.permutation(50)
        assert rmse(pred, true) == pytest.approx(rmse(pred[perm], true[perm]), abs=1e-15)


class TestKfold:
    def test_even_split(self):
        folds = kfold(np.ones(100), k=10, seed=0)
        assert [len(f) for f in folds] == [10] * 10

    def test_uneven_split_balanced(self):
        folds = kfold(np.ones(55), k=10, seed=0)
        sizes = sorted(len(f) for f in folds)
        assert sizes == [5] * 5 + [6] * 5

    def test_stratification(self):
        y = np.array([1] * 70 + [0] * 30)
        folds = kfold(y, k=10, seed=3)
        for f in folds:
            assert y[f].sum() == 7
            assert len(f) == 10

    def test_partition_exactly(self):
        rng = np.random.default_rng(2)
        y = (rng.random(83) < 0.4).astype(int)
        folds = kfold(y, k=10, seed=1)
        joined = np.concatenate(folds)
        assert len(joined) == 83
        assert len(np.unique(joined)) == 83
        assert max(len(f) for f in folds) - min(len(f) for f in folds) <= 1

    def test_deterministic(self):
        y = (np.random.default_rng(3).random(40) < 0.5).astype(int)
        a = kfold(y, k=5, seed=9)
        b = kfold(y, k=5, seed=9)
        for fa, fb in zip(a, b):
            np.testing.assert_array_equal(fa, fb)

    def test_too_few_rows(self):
        with pytest.raises(ValueError, match="smaller k"):
            kfold(np.ones(5), k=10, seed=0)


def _context_world(seed=0, n_targets=6, n_advisors=4, advisee_rows=120, advisor_rows=60):
    """Small world whose outcomes depend strongly on a single context
    feature, so context-aware methods hold an edge over tallies."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-1, 1, n_targets)
    target_ids = [f"z{i}" for i in range(n_targets)]

    def draw(owner_id, role, rows):
        recs = []
        for _ in range(rows):
            z = int(rng.integers(n_targets))
            ctx = float(rng.uniform(-1, 1))
            p_violate = float(np.exp(-0.5 * (2 * (ctx - centers[z]) ** 2) ** 3))
            t = int(rng.random() >= p_violate)
            recs.append(
                EvidenceRecord(AgentId(target_ids[z], TARGET), ContextVector.of([ctx]), t)
            )
        return EvidenceStore.from_records(AgentId(owner_id, role), recs, ["c"])

    advisors = tuple(f"u{i}" for i in range(n_advisors))
    advisor_evidence = {u: draw(u, ADVISOR, advisor_rows) for u in advisors}
    advisee = draw("a", ADVISEE, advisee_rows)
    return CompareInputs(
        advisee_evidence=advisee,
        advisor_evidence=advisor_evidence,
        advisors=advisors,
        min_records=4,
        folds=5,
        seed=seed,
        hyperparams=TrainHyperparams(epochs=40, seed=seed, patience=None),
    )


class TestCompare:
    def test_rows_sorted_by_accuracy(self):
        inputs = _context_world()
        results = compare(inputs, ("cobra-dt-b", "brs", "tmsiot"))
        accs = [r.report.acc for r in results]
        assert accs == sorted(accs, reverse=True)
        assert {r.method for r in results} == {"cobra-dt-b", "brs", "tmsiot"}

    def test_context_signal_beats_tallies(self):
        inputs = _context_world(seed=5)
        results = {r.method: r.report for r in compare(inputs, ("cobra-dt-b", "brs"))}
        assert results["cobra-dt-b"].acc > results["brs"].acc

    def test_deterministic_rerun(self):
        a = compare(_context_world(seed=7), ("cobra-dt-b", "brs"))
        b = compare(_context_world(seed=7), ("cobra-dt-b", "brs"))
        for ra, rb in zip(a, b):
            assert ra.method == rb.method
            assert ra.report.acc == rb.report.acc
            assert ra.report.rmse == rb.report.rmse

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="unknown method"):
            compare(_context_world(), ("cobra-dt-b", "oracle"))

    def test_report_shapes(self):
        inputs = _context_world(seed=9)
        (result,) = compare(inputs, ("brs",))
        rep = result.report
        assert rep.m == len(inputs.advisee_evidence)
        assert len(rep.folds) == inputs.folds
        assert rep.confusion.m == rep.m

    def test_output_files(self, tmp_path):
        results = compare(_context_world(seed=11), ("brs", "tmsiot"))
        table = tmp_path / "cmp.csv"
        plot = tmp_path / "plot.csv"
        write_comparison(results, table)
        write_plot_data(results, plot)
        lines = table.read_text().splitlines()
        assert lines[0].startswith("method,acc,rmse")
        assert len(lines) == 3
        plines = plot.read_text().splitlines()
        assert plines[0] == "method,metric,value"
        assert len(plines) == 1 + 2 * 4
