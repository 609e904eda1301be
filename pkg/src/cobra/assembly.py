"""Training-set assembly for the aggregation network.

Each of the advisee's own evidence records becomes one row: the record's
context features followed by one column per advisor holding that
advisor's opinion about the record's target in the record's context. An
advisor with no model for the target contributes 0.5, the no-information
placeholder. The three mutations mirror how the data evolves in the
field: built once from scratch, extended by one row per new first-hand
interaction, and recomputed column-wise when a new or updated model
arrives.

``counters`` instruments the three operations (opinion lookups, actual
model evaluations, row scans) so the documented complexity bounds can be
asserted by tests; it has no effect on results.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import AgentId, ContextVector, EvidenceRecord, EvidenceStore, average_entropy
from .encap import Model, ModelRepository

NO_INFORMATION = 0.5


class TrainingSetFormatError(ValueError):
    """Raised when a stored training set cannot be parsed."""


@dataclass
class OpCounters:
    """Instrumentation for complexity assertions."""

    opinion_lookups: int = 0
    model_predictions: int = 0
    rows_scanned: int = 0

    def reset(self) -> None:
        self.opinion_lookups = 0
        self.model_predictions = 0
        self.rows_scanned = 0


counters = OpCounters()


@dataclass
class TrainingSet:
    """Feature matrix plus labels; advisor columns follow roster order."""

    features: np.ndarray
    labels: np.ndarray
    context_names: tuple[str, ...]
    advisor_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        n = self.n_context + len(self.advisor_ids)
        if self.features.ndim != 2 or self.features.shape[1] != n:
            raise ValueError(
                f"feature matrix must have {n} columns, got {self.features.shape}"
            )
        if len(self.labels) != len(self.features):
            raise ValueError("label count must match feature rows")

    @property
    def n_context(self) -> int:
        return len(self.context_names)

    @property
    def n_inputs(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return len(self.features)

    def context_block(self) -> np.ndarray:
        return self.features[:, : self.n_context]

    def advisor_block(self) -> np.ndarray:
        return self.features[:, self.n_context :]

    def advisor_column(self, advisor) -> int:
        try:
            return self.n_context + self.advisor_ids.index(str(advisor))
        except ValueError:
            raise KeyError(f"advisor {advisor!r} has no column")

    def input_is_context(self) -> np.ndarray:
        flags = np.zeros(self.n_inputs, dtype=bool)
        flags[: self.n_context] = True
        return flags


def advisor_opinion(repo: ModelRepository, advisor, target, context) -> float:
    """The advisor's predicted trust for the target in this context, or the
    0.5 placeholder when the advisor shared no model for the target."""
    counters.opinion_lookups += 1
    model = repo.get(advisor, target)
    if model is None:
        return NO_INFORMATION
    counters.model_predictions += 1
    ctx = context.as_array() if isinstance(context, ContextVector) else context
    return float(model.predict(ctx))


def init_training_data(
    evidence: EvidenceStore,
    repo: ModelRepository,
    advisors: Sequence[str | AgentId],
) -> TrainingSet:
    """One row per evidence record, in record order."""
    roster = tuple(str(a) for a in advisors)
    m = len(evidence)
    k = evidence.n_features
    features = np.empty((m, k + len(roster)))
    features[:, :k] = evidence.contexts
    groups = evidence.by_target()
    for col, advisor in enumerate(roster):
        out = np.full(m, NO_INFORMATION)
        counters.opinion_lookups += m
        for target_id, rows in groups.items():
            model = repo.get(advisor, target_id)
            if model is None:
                continue
            counters.model_predictions += len(rows)
            out[rows] = model.predict_batch(evidence.contexts[rows])
        features[:, k + col] = out
    return TrainingSet(
        features=features,
        labels=evidence.outcomes.copy(),
        context_names=evidence.feature_names,
        advisor_ids=roster,
    )


def update_vertical(
    ts: TrainingSet,
    record: EvidenceRecord,
    repo: ModelRepository,
) -> TrainingSet:
    """Append the row for one new first-hand record; existing rows are
    untouched. Costs one opinion lookup per advisor, independent of the
    number of existing rows."""
    ctx = record.context.as_array()
    if len(ctx) != ts.n_context:
        raise ValueError(
            f"record context has {len(ctx)} features, training set has {ts.n_context}"
        )
    row = np.empty(ts.n_inputs)
    row[: ts.n_context] = ctx
    for col, advisor in enumerate(ts.advisor_ids):
        row[ts.n_context + col] = advisor_opinion(repo, advisor, record.target.id, ctx)
    return TrainingSet(
        features=np.vstack([ts.features, row[None, :]]),
        labels=np.concatenate([ts.labels, [record.outcome]]),
        context_names=ts.context_names,
        advisor_ids=ts.advisor_ids,
    )


def update_horizontal(
    ts: TrainingSet,
    model: Model,
    evidence: EvidenceStore,
) -> TrainingSet:
    """Recompute one advisor column for the rows matching the model's
    subject. A model from a brand-new advisor first extends the roster
    with a 0.5-filled column. Scans every row once; model evaluations
    happen only on matching rows."""
    if len(evidence) != len(ts):
        raise ValueError("evidence and training set must have the same rows")
    advisor = model.owner.id
    ids = ts.advisor_ids
    features = ts.features
    if advisor not in ids:
        ids = ids + (advisor,)
        features = np.hstack([features, np.full((len(ts), 1), NO_INFORMATION)])
    else:
        features = features.copy()
    out = TrainingSet(
        features=features,
        labels=ts.labels.copy(),
        context_names=ts.context_names,
        advisor_ids=ids,
    )
    col = out.advisor_column(advisor)
    counters.rows_scanned += len(ts)
    rows = evidence.by_target().get(model.subject.id)
    if rows is not None and len(rows):
        counters.model_predictions += len(rows)
        out.features[rows, col] = model.predict_batch(evidence.contexts[rows])
    return out


def column_entropies(features: np.ndarray, n_context: int) -> np.ndarray:
    """Average Bernoulli entropy per input column.

    Context columns are 0 by definition (their values are not
    probabilities); advisor columns use the empirical column average,
    placeholders included.
    """
    n = features.shape[1]
    out = np.zeros(n)
    for j in range(n_context, n):
        out[j] = average_entropy(features[:, j])
    return out


def training_set_entropies(ts: TrainingSet) -> np.ndarray:
    return column_entropies(ts.features, ts.n_context)


def save_training_set(ts: TrainingSet, path: str | Path) -> None:
    """Delimited text: ctx_* columns, adv_* columns, label last."""
    with Path(path).open("w") as fh:
        header = [f"ctx_{c}" for c in ts.context_names]
        header += [f"adv_{a}" for a in ts.advisor_ids]
        header.append("label")
        fh.write(",".join(header) + "\n")
        for i in range(len(ts)):
            cells = [repr(float(v)) for v in ts.features[i]]
            cells.append(str(int(ts.labels[i])))
            fh.write(",".join(cells) + "\n")


def load_training_set(path: str | Path) -> TrainingSet:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().rstrip("\n")
        if not header:
            raise TrainingSetFormatError(f"{path}: empty file")
        cols = header.split(",")
        if cols[-1] != "label":
            raise TrainingSetFormatError(f"{path}: last column must be 'label'")
        context_names = tuple(c[4:] for c in cols[:-1] if c.startswith("ctx_"))
        advisor_ids = tuple(c[4:] for c in cols[:-1] if c.startswith("adv_"))
        if len(context_names) + len(advisor_ids) != len(cols) - 1:
            raise TrainingSetFormatError(
                f"{path}: columns must be ctx_*/adv_* followed by label"
            )
        rows = []
        labels = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(cols):
                raise TrainingSetFormatError(
                    f"{path}:{lineno}: expected {len(cols)} fields, got {len(parts)}"
                )
            try:
                rows.append([float(v) for v in parts[:-1]])
                labels.append(int(parts[-1]))
            except ValueError as exc:
                raise TrainingSetFormatError(f"{path}:{lineno}: bad value ({exc})")
    features = np.asarray(rows, dtype=np.float64).reshape(
        len(rows), len(cols) - 1
    )
    return TrainingSet(
        features=features,
        labels=np.asarray(labels, dtype=np.int8),
        context_names=context_names,
        advisor_ids=advisor_ids,
    )
