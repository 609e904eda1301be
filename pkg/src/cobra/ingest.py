"""Parsing of response-time QoS logs into labeled evidence.

Input lines carry ``user_id service_id time_slice response_time`` split by
whitespace, tabs or commas. A response within the 1-second budget counts
as meeting the service agreement (label 1); anything slower is a
violation (label 0). Non-positive response times are the dataset's
missing-value convention and are rejected rather than labeled. The time
slice (0..63) becomes the single context feature, normalized to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import ADVISOR, AgentId, EvidenceStore

SLA_SECONDS = 1.0
MAX_TIME_SLICE = 63
CONTEXT_FEATURE = "time_slice"


class IngestFormatError(ValueError):
    """Raised when a data file does not look like a response-time log."""


@dataclass(frozen=True)
class ResponseRecord:
    user_id: str
    service_id: str
    time_slice: int
    response_time: float


@dataclass(frozen=True)
class RejectedLine:
    line_no: int
    reason: str
    text: str


def _split(line: str) -> list[str]:
    if "," in line:
        return [p.strip() for p in line.split(",")]
    return line.split()


def parse_records(path: str | Path) -> tuple[list[ResponseRecord], list[RejectedLine]]:
    """Parse all well-formed lines; malformed ones land in the rejects
    report with their line numbers. A file where more than half of the
    non-empty lines are malformed is treated as the wrong format."""
    path = Path(path)
    records: list[ResponseRecord] = []
    rejects: list[RejectedLine] = []
    n_lines = 0
    with path.open() as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            n_lines += 1
            parts = _split(line)
            if len(parts) != 4:
                rejects.append(RejectedLine(line_no, f"expected 4 fields, got {len(parts)}", line))
                continue
            user, service, slice_s, rt_s = parts
            try:
                time_slice = int(slice_s)
                rt = float(rt_s)
            except ValueError:
                rejects.append(RejectedLine(line_no, "non-numeric time slice or response time", line))
                continue
            if time_slice < 0:
                rejects.append(RejectedLine(line_no, "negative time slice", line))
                continue
            if not np.isfinite(rt) or rt <= 0:
                rejects.append(RejectedLine(line_no, "non-positive response time (missing value)", line))
                continue
            records.append(ResponseRecord(user, service, time_slice, rt))
    if n_lines and len(rejects) * 2 > n_lines:
        raise IngestFormatError(
            f"{path}: {len(rejects)} of {n_lines} lines malformed; "
            "this does not look like a response-time log"
        )
    return records, rejects


def label_sla(response_time: float, threshold: float = SLA_SECONDS) -> int:
    """1 when the response met the agreement (at or under the threshold)."""
    if response_time <= 0:
        raise ValueError("response time must be positive")
    return 1 if response_time <= threshold else 0


def group_users(records: Iterable[ResponseRecord]) -> dict[str, list[ResponseRecord]]:
    out: dict[str, list[ResponseRecord]] = {}
    for rec in records:
        out.setdefault(rec.user_id, []).append(rec)
    return out


def to_evidence(
    records: Iterable[ResponseRecord],
    user: AgentId | str,
    threshold: float = SLA_SECONDS,
) -> EvidenceStore:
    """The given user's records as an evidence store: target = service,
    context = normalized time slice, outcome = SLA label."""
    owner = user if isinstance(user, AgentId) else AgentId(str(user), ADVISOR)
    table: dict[str, int] = {}
    codes: list[int] = []
    contexts: list[float] = []
    outcomes: list[int] = []
    for rec in records:
        if rec.user_id != owner.id:
            continue
        codes.append(table.setdefault(rec.service_id, len(table)))
        contexts.append(rec.time_slice / MAX_TIME_SLICE)
        outcomes.append(label_sla(rec.response_time, threshold))
    return EvidenceStore(
        owner=owner,
        feature_names=[CONTEXT_FEATURE],
        target_ids=tuple(table),
        codes=np.asarray(codes, dtype=np.int32),
        contexts=np.asarray(contexts, dtype=np.float64).reshape(len(codes), 1),
        outcomes=np.asarray(outcomes, dtype=np.int8),
    )


def sample_records(
    records: Sequence[ResponseRecord], cap: int, seed: int = 0
) -> list[ResponseRecord]:
    """Seeded uniform subsample of at most ``cap`` records, file order kept."""
    if cap >= len(records):
        return list(records)
    keep = np.sort(np.random.default_rng(seed).permutation(len(records))[:cap])
    return [records[i] for i in keep]


def write_records(records: Iterable[ResponseRecord], path: str | Path) -> None:
    """Re-serialize records in the whitespace-delimited input format."""
    with Path(path).open("w") as fh:
        for r in records:
            fh.write(f"{r.user_id} {r.service_id} {r.time_slice} {r.response_time!r}\n")
