"""Shared domain types and entropy primitives.

An interaction between agents is summarized by an evidence record: the
target agent, the context the interaction happened in, and a binary
outcome (1 = service-level agreement met, 0 = violated). Evidence stores
hold one agent's records in columnar form so that classifier training and
batch scoring stay cheap even with millions of records.

Entropy here is always the entropy of a Bernoulli variable measured in
bits (base-2 logarithm), so values live in [0, 1] and "1 - entropy" can be
used directly as an information weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

ADVISOR = "advisor"
TARGET = "target"
ADVISEE = "advisee"

_ROLES = (ADVISOR, TARGET, ADVISEE)


class EvidenceFormatError(ValueError):
    """Raised when an evidence file cannot be parsed."""


@dataclass(frozen=True)
class AgentId:
    """Opaque agent identifier plus the role it plays in a world."""

    id: str
    role: str = ADVISOR

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("agent id must be non-empty")
        if self.role not in _ROLES:
            raise ValueError(f"unknown agent role {self.role!r}")

    def __str__(self) -> str:
        return self.id


@dataclass(frozen=True)
class ContextVector:
    """Fixed-length tuple of real-valued context features."""

    features: tuple[float, ...]

    def __post_init__(self) -> None:
        feats = tuple(float(v) for v in self.features)
        if not all(np.isfinite(feats)):
            raise ValueError("context features must be finite")
        object.__setattr__(self, "features", feats)

    @classmethod
    def of(cls, values: Sequence[float]) -> "ContextVector":
        return cls(tuple(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.features, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.features)


@dataclass(frozen=True)
class EvidenceRecord:
    """One first-hand interaction: target, context, binary outcome."""

    target: AgentId
    context: ContextVector
    outcome: int

    def __post_init__(self) -> None:
        if self.outcome not in (0, 1):
            raise ValueError(f"outcome must be 0 or 1, got {self.outcome!r}")


class EvidenceStore:
    """Columnar, immutable collection of one agent's evidence records.

    Record order is preserved. Targets are interned into a small id table
    so that stores with millions of records stay compact.
    """

    def __init__(
        self,
        owner: AgentId,
        feature_names: Sequence[str],
        target_ids: Sequence[str],
        codes: np.ndarray,
        contexts: np.ndarray,
        outcomes: np.ndarray,
    ) -> None:
        self.owner = owner
        self.feature_names = tuple(feature_names)
        self.target_ids = tuple(target_ids)
        self.codes = np.asarray(codes, dtype=np.int32)
        self.contexts = np.asarray(contexts, dtype=np.float64)
        self.outcomes = np.asarray(outcomes, dtype=np.int8)
        n = len(self.codes)
        if self.contexts.shape != (n, len(self.feature_names)):
            raise ValueError("context matrix shape does not match record count")
        if len(self.outcomes) != n:
            raise ValueError("outcome vector length does not match record count")
        if n and not np.isin(self.outcomes, (0, 1)).all():
            raise ValueError("outcomes must be 0 or 1")
        if n and not np.isfinite(self.contexts).all():
            raise ValueError("context features must be finite")

    @classmethod
    def from_records(
        cls,
        owner: AgentId,
        records: Iterable[EvidenceRecord],
        feature_names: Sequence[str] | None = None,
    ) -> "EvidenceStore":
        records = list(records)
        if records:
            width = len(records[0].context)
            if any(len(r.context) != width for r in records):
                raise ValueError("all records must share one context length")
        else:
            width = len(feature_names) if feature_names else 0
        if feature_names is None:
            feature_names = [f"f{i}" for i in range(width)]
        table: dict[str, int] = {}
        codes = np.empty(len(records), dtype=np.int32)
        for i, rec in enumerate(records):
            codes[i] = table.setdefault(rec.target.id, len(table))
        contexts = np.array([r.context.features for r in records], dtype=np.float64)
        contexts = contexts.reshape(len(records), width)
        outcomes = np.array([r.outcome for r in records], dtype=np.int8)
        return cls(owner, feature_names, tuple(table), codes, contexts, outcomes)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def __len__(self) -> int:
        return len(self.codes)

    def __iter__(self) -> Iterator[EvidenceRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def record(self, i: int) -> EvidenceRecord:
        return EvidenceRecord(
            target=AgentId(self.target_ids[self.codes[i]], TARGET),
            context=ContextVector.of(self.contexts[i]),
            outcome=int(self.outcomes[i]),
        )

    def target_of_row(self, i: int) -> str:
        return self.target_ids[self.codes[i]]

    def row_targets(self) -> list[str]:
        return [self.target_ids[c] for c in self.codes]

    def by_target(self) -> dict[str, np.ndarray]:
        """Row indices grouped by target id, each group in record order."""
        groups: dict[str, np.ndarray] = {}
        order = np.argsort(self.codes, kind="stable")
        bounds = np.searchsorted(self.codes[order], np.arange(len(self.target_ids) + 1))
        for t, tid in enumerate(self.target_ids):
            rows = order[bounds[t] : bounds[t + 1]]
            if len(rows):
                groups[tid] = rows
        return groups

    def subset(self, rows: np.ndarray) -> "EvidenceStore":
        """New store containing only the given rows (in the given order)."""
        return EvidenceStore(
            self.owner,
            self.feature_names,
            self.target_ids,
            self.codes[rows],
            self.contexts[rows],
            self.outcomes[rows],
        )

    def extend(self, records: Iterable[EvidenceRecord]) -> "EvidenceStore":
        """New store with the extra records appended."""
        extra = EvidenceStore.from_records(self.owner, records, self.feature_names)
        table = {tid: i for i, tid in enumerate(self.target_ids)}
        remap = np.empty(len(extra.target_ids), dtype=np.int32)
        ids = list(self.target_ids)
        for j, tid in enumerate(extra.target_ids):
            if tid not in table:
                table[tid] = len(ids)
                ids.append(tid)
            remap[j] = table[tid]
        codes = np.concatenate([self.codes, remap[extra.codes]]) if len(extra) else self.codes
        contexts = (
            np.vstack([self.contexts, extra.contexts]) if len(extra) else self.contexts
        )
        outcomes = (
            np.concatenate([self.outcomes, extra.outcomes]) if len(extra) else self.outcomes
        )
        return EvidenceStore(self.owner, self.feature_names, ids, codes, contexts, outcomes)


def bernoulli_entropy(p):
    """Entropy in bits of a Bernoulli(p) variable, with 0*log2(0) = 0.

    Accepts a scalar or an array; raises ValueError outside [0, 1].
    """
    arr = np.asarray(p, dtype=np.float64)
    if arr.size and (not np.isfinite(arr).all() or (arr < 0).any() or (arr > 1).any()):
        raise ValueError("probability outside [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.where(arr > 0, arr * np.log2(np.where(arr > 0, arr, 1.0)), 0.0)
        q = 1.0 - arr
        right = np.where(q > 0, q * np.log2(np.where(q > 0, q, 1.0)), 0.0)
    h = -(left + right)
    if np.isscalar(p) or np.ndim(p) == 0:
        return float(h)
    return h


def average_entropy(samples) -> float:
    """Mean Bernoulli entropy of the samples; an empty list is treated as
    fully uninformative and maps to 1.0."""
    arr = np.asarray(samples, dtype=np.float64).ravel()
    if arr.size == 0:
        return 1.0
    return float(np.mean(bernoulli_entropy(arr)))


def write_evidence(store: EvidenceStore, path: str | Path) -> None:
    """Write a store in the shared evidence format:

    one header line naming the context features, then one record per line
    ``target_id,f_1,...,f_k,t`` with t in {0, 1}.
    """
    path = Path(path)
    with path.open("w") as fh:
        fh.write("target_id," + ",".join(store.feature_names) + ",outcome\n")
        for i in range(len(store)):
            feats = ",".join(repr(float(v)) for v in store.contexts[i])
            tid = store.target_ids[store.codes[i]]
            if feats:
                fh.write(f"{tid},{feats},{int(store.outcomes[i])}\n")
            else:
                fh.write(f"{tid},{int(store.outcomes[i])}\n")


def read_evidence(path: str | Path, owner: AgentId | None = None) -> EvidenceStore:
    """Parse an evidence file written by :func:`write_evidence`."""
    path = Path(path)
    owner = owner or AgentId(path.stem, ADVISOR)
    with path.open() as fh:
        header = fh.readline()
        if not header:
            raise EvidenceFormatError(f"{path}: empty file, expected a header line")
        cols = header.rstrip("\n").split(",")
        if len(cols) < 2 or cols[0] != "target_id" or cols[-1] != "outcome":
            raise EvidenceFormatError(
                f"{path}:1: header must be 'target_id,<features...>,outcome'"
            )
        names = cols[1:-1]
        k = len(names)
        table: dict[str, int] = {}
        codes: list[int] = []
        contexts: list[list[float]] = []
        outcomes: list[int] = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != k + 2:
                raise EvidenceFormatError(
                    f"{path}:{lineno}: expected {k + 2} fields, got {len(parts)}"
                )
            try:
                feats = [float(v) for v in parts[1:-1]]
            except ValueError as exc:
                raise EvidenceFormatError(f"{path}:{lineno}: bad feature value ({exc})")
            if not all(np.isfinite(feats)):
                raise EvidenceFormatError(f"{path}:{lineno}: non-finite feature")
            if parts[-1] not in ("0", "1"):
                raise EvidenceFormatError(
                    f"{path}:{lineno}: outcome must be 0 or 1, got {parts[-1]!r}"
                )
            codes.append(table.setdefault(parts[0], len(table)))
            contexts.append(feats)
            outcomes.append(int(parts[-1]))
    return EvidenceStore(
        owner,
        names,
        tuple(table),
        np.asarray(codes, dtype=np.int32),
        np.asarray(contexts, dtype=np.float64).reshape(len(codes), k),
        np.asarray(outcomes, dtype=np.int8),
    )
