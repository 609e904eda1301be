"""Metrics, cross-validation and the multi-method comparison harness.

Scores are turned into labels at the 0.5 threshold everywhere. Folds are
stratified by label so sparse minority classes stay represented, and fold
sizes never differ by more than one row.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import bnn
from .assembly import column_entropies, init_training_data
from .baselines import FeedbackTally, brs_score, tmsiot_score
from .bnn import TrainHyperparams
from .core import EvidenceStore
from .encap import KindPolicy, build_repository, flip_model, ModelRepository

THRESHOLD = 0.5

COBRA_METHODS = {
    "cobra-dt-b": ("dt", False),
    "cobra-gnb-b": ("gnb", False),
    "cobra-hyb-b": ("hyb", False),
    "cobra-dt-d": ("dt", True),
    "cobra-gnb-d": ("gnb", True),
    "cobra-hyb-d": ("hyb", True),
}
BASELINE_METHODS = ("brs", "tmsiot")
ALL_METHODS = tuple(COBRA_METHODS) + BASELINE_METHODS
DEFAULT_METHODS = ("cobra-dt-b", "cobra-gnb-b", "cobra-hyb-b", "brs", "tmsiot")


@dataclass(frozen=True)
class Confusion:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def m(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def acc(self) -> float:
        return (self.tp + self.tn) / self.m


def accuracy(predicted, truth) -> tuple[float, Confusion]:
    """Classification accuracy plus the confusion counts.

    ``predicted`` may be scores (thresholded at 0.5) or hard labels.
    """
    pred = np.asarray(predicted, dtype=np.float64)
    true = np.asarray(truth, dtype=np.float64)
    if pred.shape != true.shape or pred.ndim != 1 or pred.size == 0:
        raise ValueError("predictions and truth must be equal-length non-empty vectors")
    if not np.isin(true, (0.0, 1.0)).all():
        raise ValueError("truth labels must be binary")
    labels = pred >= THRESHOLD
    pos = true == 1.0
    conf = Confusion(
        tp=int((labels & pos).sum()),
        tn=int((~labels & ~pos).sum()),
        fp=int((labels & ~pos).sum()),
        fn=int((~labels & pos).sum()),
    )
    return conf.acc, conf


def rmse(predicted, truth) -> float:
    """Root mean squared error between predicted probabilities and truth."""
    pred = np.asarray(predicted, dtype=np.float64)
    true = np.asarray(truth, dtype=np.float64)
    if pred.shape != true.shape or pred.ndim != 1 or pred.size == 0:
        raise ValueError("predictions and truth must be equal-length non-empty vectors")
    return float(np.sqrt(np.mean((true - pred) ** 2)))


def kfold(labels, k: int = 10, seed: int = 0) -> list[np.ndarray]:
    """Stratified fold assignment: a list of k disjoint index arrays.

    Within each label class the rows are shuffled with the seed and dealt
    out so that every fold gets the class's fair share; the leftover rows
    rotate across folds so total fold sizes differ by at most one.
    """
    y = np.asarray(labels)
    m = len(y)
    if k < 2:
        raise ValueError("k must be at least 2")
    if m < k:
        raise ValueError(f"{m} rows cannot fill {k} folds; use a smaller k")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for cls in np.unique(y):
        idx = np.nonzero(y == cls)[0]
        idx = idx[rng.permutation(len(idx))]
        base, extra = divmod(len(idx), k)
        sizes = [base + (1 if (f - offset) % k < extra else 0) for f in range(k)]
        pos = 0
        for f in range(k):
            folds[f].extend(idx[pos : pos + sizes[f]].tolist())
            pos += sizes[f]
        offset += extra
    return [np.sort(np.asarray(f, dtype=np.int64)) for f in folds]


@dataclass
class FoldMetrics:
    fold: int
    acc: float
    rmse: float
    train_seconds: float
    predict_seconds: float


@dataclass
class MetricsReport:
    acc: float
    rmse: float
    confusion: Confusion
    m: int
    folds: list[FoldMetrics] = field(default_factory=list)
    train_seconds: float = 0.0
    predict_seconds: float = 0.0


@dataclass
class MethodResult:
    method: str
    report: MetricsReport


@dataclass
class CompareInputs:
    """Everything the comparison harness needs to score one advisee.

    ``advisor_evidence`` holds the advisors' raw records: the Cobra
    methods only ever see them through trained models, while the
    baselines tally them directly (flipping the reported outcomes of
    advisors on the ``malicious`` roster, who lie).
    """

    advisee_evidence: EvidenceStore
    advisor_evidence: Mapping[str, EvidenceStore]
    advisors: tuple[str, ...]
    malicious: tuple[str, ...] = ()
    min_records: int = 1
    folds: int = 10
    seed: int = 0
    hyperparams: TrainHyperparams | None = None


def _fold_seed(seed: int, method: str, fold: int) -> int:
    tag = zlib.crc32(method.encode())
    return int(np.random.SeedSequence([seed, tag, fold]).generate_state(1)[0])


def _cobra_predictions(inputs: CompareInputs, encap_kind: str, dense: bool, folds):
    policy = KindPolicy(encap_kind, inputs.seed)
    repo = build_repository(inputs.advisor_evidence, policy, inputs.min_records)
    if inputs.malicious:
        attacked = ModelRepository()
        bad = set(inputs.malicious)
        for model in repo.models():
            attacked.put(flip_model(model) if model.owner.id in bad else model)
        repo = attacked
    ts = init_training_data(inputs.advisee_evidence, repo, inputs.advisors)
    hp = inputs.hyperparams or TrainHyperparams()
    method = f"{encap_kind}-{'d' if dense else 'b'}"
    scores = np.empty(len(ts))
    fold_stats = []
    histories = []
    for f, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(ts)), test_idx)
        hbar = column_entropies(ts.features[train_idx], ts.n_context)
        build = bnn.build_dense_topology if dense else bnn.build_topology
        topo = build(hbar, ts.input_is_context())
        net = bnn.init_network(topo, seed=_fold_seed(inputs.seed, method, f))
        fold_hp = TrainHyperparams(**{**hp.__dict__, "seed": _fold_seed(inputs.seed, method + "-t", f)})
        net, history = bnn.train(net, ts.features[train_idx], ts.labels[train_idx], fold_hp)
        t0 = time.perf_counter()
        scores[test_idx] = bnn.forward_batch(net, ts.features[test_idx])
        predict_s = time.perf_counter() - t0
        fold_stats.append((sum(h.seconds for h in history), predict_s))
        histories.append(history)
    return scores, fold_stats, histories


def _tallies(store: EvidenceStore, rows: np.ndarray | None, flip: bool) -> dict[str, FeedbackTally]:
    out: dict[str, FeedbackTally] = {}
    groups = store.by_target()
    for target_id, idx in groups.items():
        if rows is not None:
            idx = idx[np.isin(idx, rows)]
        if not len(idx):
            continue
        pos = int(store.outcomes[idx].sum())
        neg = len(idx) - pos
        if flip:
            pos, neg = neg, pos
        out[target_id] = FeedbackTally(pos, neg)
    return out


def _baseline_predictions(inputs: CompareInputs, method: str, folds):
    evidence = inputs.advisee_evidence
    targets = evidence.row_targets()
    bad = set(inputs.malicious)
    advisor_tallies = {
        a: _tallies(inputs.advisor_evidence[a], None, a in bad)
        for a in inputs.advisors
        if a in inputs.advisor_evidence
    }
    scores = np.empty(len(evidence))
    fold_stats = []
    for f, test_idx in enumerate(folds):
        t0 = time.perf_counter()
        train_idx = np.setdiff1d(np.arange(len(evidence)), test_idx)
        own = _tallies(evidence, train_idx, False)
        if method == "brs":
            combined: dict[str, FeedbackTally] = dict(own)
            for tallies in advisor_tallies.values():
                for tid, tally in tallies.items():
                    cur = combined.get(tid, FeedbackTally())
                    combined[tid] = FeedbackTally(cur.r + tally.r, cur.s + tally.s)
            per_target = {tid: brs_score(t) for tid, t in combined.items()}
        else:
            per_target = {}
            tids = set(own)
            for tallies in advisor_tallies.values():
                tids.update(tallies)
            for tid in tids:
                own_score = brs_score(own.get(tid, FeedbackTally()))
                opinions = [
                    brs_score(tallies[tid])
                    for tallies in advisor_tallies.values()
                    if tid in tallies
                ]
                per_target[tid] = tmsiot_score(own_score, opinions)
        train_s = time.perf_counter() - t0
        t0 = time.perf_counter()
        for i in test_idx:
            scores[i] = per_target.get(targets[i], 0.5)
        predict_s = time.perf_counter() - t0
        fold_stats.append((train_s, predict_s))
    return scores, fold_stats


def compare(
    inputs: CompareInputs, methods: Sequence[str] = DEFAULT_METHODS
) -> list[MethodResult]:
    """Evaluate every method on identical folds; sorted by ACC descending."""
    for m in methods:
        if m not in ALL_METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {ALL_METHODS}")
    labels = inputs.advisee_evidence.outcomes.astype(np.float64)
    folds = kfold(labels, inputs.folds, inputs.seed)
    results = []
    for method in methods:
        if method in COBRA_METHODS:
            kind, dense = COBRA_METHODS[method]
            scores, fold_stats, _ = _cobra_predictions(inputs, kind, dense, folds)
        else:
            scores, fold_stats = _baseline_predictions(inputs, method, folds)
        acc, conf = accuracy(scores, labels)
        fold_metrics = [
            FoldMetrics(
                fold=f,
                acc=accuracy(scores[idx], labels[idx])[0],
                rmse=rmse(scores[idx], labels[idx]),
                train_seconds=fold_stats[f][0],
                predict_seconds=fold_stats[f][1],
            )
            for f, idx in enumerate(folds)
        ]
        results.append(
            MethodResult(
                method=method,
                report=MetricsReport(
                    acc=acc,
                    rmse=rmse(scores, labels),
                    confusion=conf,
                    m=conf.m,
                    folds=fold_metrics,
                    train_seconds=sum(s for s, _ in fold_stats),
                    predict_seconds=sum(p for _, p in fold_stats),
                ),
            )
        )
    results.sort(key=lambda r: (-r.report.acc, r.method))
    return results


def write_comparison(results: Sequence[MethodResult], path: str | Path) -> None:
    with Path(path).open("w") as fh:
        fh.write("method,acc,rmse,m,tp,tn,fp,fn,train_seconds,predict_seconds\n")
        for r in results:
            rep = r.report
            c = rep.confusion
            fh.write(
                f"{r.method},{rep.acc!r},{rep.rmse!r},{rep.m},"
                f"{c.tp},{c.tn},{c.fp},{c.fn},"
                f"{rep.train_seconds!r},{rep.predict_seconds!r}\n"
            )


def write_plot_data(results: Sequence[MethodResult], path: str | Path) -> None:
    """Long-form (method, metric, value) rows for external plotting."""
    with Path(path).open("w") as fh:
        fh.write("method,metric,value\n")
        for r in results:
            fh.write(f"{r.method},acc,{r.report.acc!r}\n")
            fh.write(f"{r.method},rmse,{r.report.rmse!r}\n")
            fh.write(f"{r.method},train_seconds,{r.report.train_seconds!r}\n")
            fh.write(f"{r.method},predict_seconds,{r.report.predict_seconds!r}\n")
