"""Per-(advisor, target) encapsulated classifiers.

Instead of exchanging raw interaction logs, an advisor trains a small
classifier per target on its own evidence and shares only the model
parameters. Two families are supported:

* ``decision_tree`` -- CART with Gini splits, depth capped at 8, at least
  2 records per leaf; leaves hold the empirical positive fraction.
* ``gaussian_nb``  -- per-class per-feature Gaussians with the variance
  floored at 1e-9; prediction is the Bayes posterior of the positive
  class under empirical class priors.

``flipped_wrapper`` inverts another model's output (the lying-advisor
behavior used by the attack simulations); flipping twice unwraps, so the
involution is exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .backend import kernels
from .core import ADVISOR, TARGET, AgentId, EvidenceStore

TREE_MAX_DEPTH = 8
TREE_MIN_LEAF = 2
GNB_VAR_FLOOR = 1e-9

KIND_TREE = "decision_tree"
KIND_GNB = "gaussian_nb"
KIND_FLIPPED = "flipped_wrapper"


class ModelFormatError(ValueError):
    """Raised when a serialized model document cannot be parsed."""


def _as_matrix(records) -> tuple[np.ndarray, np.ndarray]:
    records = list(records)
    if not records:
        raise ValueError("cannot train a model on zero records")
    contexts = []
    outcomes = []
    for ctx, t in records:
        feats = ctx.as_array() if hasattr(ctx, "as_array") else np.asarray(ctx, np.float64)
        contexts.append(np.atleast_1d(feats))
        if t not in (0, 1):
            raise ValueError(f"outcome must be 0 or 1, got {t!r}")
        outcomes.append(float(t))
    width = len(contexts[0])
    if any(len(c) != width for c in contexts):
        raise ValueError("all contexts must share one length")
    return np.asarray(contexts, dtype=np.float64), np.asarray(outcomes, dtype=np.float64)


def _check_width(n_features: int, X: np.ndarray) -> None:
    if X.shape[1] != n_features:
        raise ValueError(
            f"context has {X.shape[1]} features, model was trained on {n_features}"
        )


@dataclass
class DecisionTreeModel:
    owner: AgentId
    subject: AgentId
    n_features: int
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    kind = KIND_TREE

    def predict(self, context) -> float:
        return float(self.predict_batch(np.atleast_2d(np.asarray(context, np.float64)))[0])

    def predict_batch(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        _check_width(self.n_features, X)
        return kernels.tree_predict(
            self.feature, self.threshold, self.left, self.right, self.value, X
        )

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


@dataclass
class GaussianNBModel:
    owner: AgentId
    subject: AgentId
    n_features: int
    count0: int
    count1: int
    mean0: np.ndarray
    var0: np.ndarray
    mean1: np.ndarray
    var1: np.ndarray

    kind = KIND_GNB

    def predict(self, context) -> float:
        return float(self.predict_batch(np.atleast_2d(np.asarray(context, np.float64)))[0])

    def predict_batch(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        _check_width(self.n_features, X)
        if self.count0 == 0:
            return np.ones(X.shape[0])
        if self.count1 == 0:
            return np.zeros(X.shape[0])
        total = self.count0 + self.count1
        return kernels.gnb_posterior(
            self.mean0,
            self.var0,
            self.mean1,
            self.var1,
            math.log(self.count0 / total),
            math.log(self.count1 / total),
            X,
        )


@dataclass
class FlippedModel:
    """Outputs 1 - p where p is the wrapped model's prediction."""

    inner: "Model"

    kind = KIND_FLIPPED

    @property
    def owner(self) -> AgentId:
        return self.inner.owner

    @property
    def subject(self) -> AgentId:
        return self.inner.subject

    @property
    def n_features(self) -> int:
        return self.inner.n_features

    def predict(self, context) -> float:
        return 1.0 - self.inner.predict(context)

    def predict_batch(self, X) -> np.ndarray:
        return 1.0 - self.inner.predict_batch(X)


Model = DecisionTreeModel | GaussianNBModel | FlippedModel


def flip_model(model: Model) -> Model:
    """Wrap a model so it lies; flipping a flipped model unwraps it, so the
    original predictions are restored exactly."""
    if isinstance(model, FlippedModel):
        return model.inner
    return FlippedModel(inner=model)


def train_decision_tree(
    records,
    owner: AgentId,
    subject: AgentId,
    max_depth: int = TREE_MAX_DEPTH,
    min_leaf: int = TREE_MIN_LEAF,
) -> DecisionTreeModel:
    X, y = _as_matrix(records)
    feat, thr, left, right, value = kernels.tree_grow(X, y, max_depth, min_leaf)
    return DecisionTreeModel(
        owner=owner,
        subject=subject,
        n_features=X.shape[1],
        feature=feat,
        threshold=thr,
        left=left,
        right=right,
        value=value,
    )


def train_gaussian_nb(records, owner: AgentId, subject: AgentId) -> GaussianNBModel:
    X, y = _as_matrix(records)
    mask1 = y == 1.0
    n1 = int(mask1.sum())
    n0 = len(y) - n1

    def stats(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if rows.shape[0] == 0:
            return np.zeros(X.shape[1]), np.full(X.shape[1], GNB_VAR_FLOOR)
        mean = rows.mean(axis=0)
        var = np.maximum(rows.var(axis=0), GNB_VAR_FLOOR)
        return mean, var

    mean0, var0 = stats(X[~mask1])
    mean1, var1 = stats(X[mask1])
    return GaussianNBModel(
        owner=owner,
        subject=subject,
        n_features=X.shape[1],
        count0=n0,
        count1=n1,
        mean0=mean0,
        var0=var0,
        mean1=mean1,
        var1=var1,
    )


_TRAINERS = {"dt": train_decision_tree, "gnb": train_gaussian_nb}


@dataclass(frozen=True)
class KindPolicy:
    """Assigns a classifier family to each advisor.

    ``kind`` is ``dt``, ``gnb`` or ``hyb``; the hybrid mode gives a seeded
    random half of the advisors trees and the rest naive Bayes.
    """

    kind: str = "dt"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("dt", "gnb", "hyb"):
            raise ValueError(f"unknown encapsulation kind {self.kind!r}")

    def assign(self, advisor_ids: Sequence[str]) -> dict[str, str]:
        ids = list(advisor_ids)
        if self.kind in ("dt", "gnb"):
            return {a: self.kind for a in ids}
        rng = np.random.default_rng(self.seed)
        shuffled = [ids[i] for i in rng.permutation(len(ids))]
        n_tree = (len(ids) + 1) // 2
        return {a: ("dt" if i < n_tree else "gnb") for i, a in enumerate(shuffled)}


class ModelRepository:
    """Models keyed by (advisor id, subject id); one model per pair."""

    def __init__(self, models: Iterable[Model] = ()) -> None:
        self._models: dict[tuple[str, str], Model] = {}
        for m in models:
            self.put(m)

    def put(self, model: Model) -> None:
        self._models[(model.owner.id, model.subject.id)] = model

    def get(self, advisor, subject) -> Model | None:
        return self._models.get((str(advisor), str(subject)))

    def __len__(self) -> int:
        return len(self._models)

    def __contains__(self, pair) -> bool:
        u, z = pair
        return (str(u), str(z)) in self._models

    def pairs(self) -> list[tuple[str, str]]:
        return sorted(self._models)

    def models(self) -> list[Model]:
        return [self._models[k] for k in self.pairs()]

    def replaced(self, model: Model) -> "ModelRepository":
        out = ModelRepository(self.models())
        out.put(model)
        return out


def build_repository(
    evidence: Mapping[str, EvidenceStore],
    policy: KindPolicy = KindPolicy(),
    min_records: int = 1,
) -> ModelRepository:
    """Train one model per (advisor, target) pair that has enough records.

    Pairs with fewer than ``min_records`` records stay absent, so later
    queries fall back to the no-information placeholder.
    """
    repo = ModelRepository()
    kinds = policy.assign(sorted(evidence))
    for advisor_id in sorted(evidence):
        store = evidence[advisor_id]
        trainer = _TRAINERS[kinds[advisor_id]]
        owner = AgentId(advisor_id, ADVISOR)
        for target_id, rows in store.by_target().items():
            if len(rows) < max(1, min_records):
                continue
            pairs = list(zip(store.contexts[rows], store.outcomes[rows]))
            repo.put(trainer(pairs, owner, AgentId(target_id, TARGET)))
    return repo


def _agent_doc(agent: AgentId) -> dict:
    return {"id": agent.id, "role": agent.role}


def _agent_from(doc, where: str) -> AgentId:
    if not isinstance(doc, dict) or "id" not in doc or "role" not in doc:
        raise ModelFormatError(f"{where}: agent must carry 'id' and 'role'")
    return AgentId(doc["id"], doc["role"])


def _model_doc(model: Model) -> dict:
    if isinstance(model, DecisionTreeModel):
        params = {
            "n_features": model.n_features,
            "feature": model.feature.tolist(),
            "threshold": model.threshold.tolist(),
            "left": model.left.tolist(),
            "right": model.right.tolist(),
            "value": model.value.tolist(),
        }
    elif isinstance(model, GaussianNBModel):
        params = {
            "n_features": model.n_features,
            "count0": model.count0,
            "count1": model.count1,
            "mean0": model.mean0.tolist(),
            "var0": model.var0.tolist(),
            "mean1": model.mean1.tolist(),
            "var1": model.var1.tolist(),
        }
    elif isinstance(model, FlippedModel):
        params = {"inner": _model_doc(model.inner)}
    else:
        raise ModelFormatError(f"cannot serialize model of type {type(model).__name__}")
    return {
        "format": "cobra-model-v1",
        "kind": model.kind,
        "owner": _agent_doc(model.owner),
        "subject": _agent_doc(model.subject),
        "params": params,
    }


def serialize_model(model: Model) -> str:
    """Model as a structured text document (the unit of model sharing)."""
    return json.dumps(_model_doc(model))


def _require(params: dict, name: str, where: str):
    if name not in params:
        raise ModelFormatError(f"{where}: missing field {name!r}")
    return params[name]


def _model_from_doc(doc, where: str = "model") -> Model:
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{where}: expected an object")
    kind = doc.get("kind")
    params = doc.get("params")
    if params is None:
        raise ModelFormatError(f"{where}: missing field 'params'")
    if kind == KIND_FLIPPED:
        return FlippedModel(inner=_model_from_doc(_require(params, "inner", where), where + ".inner"))
    owner = _agent_from(doc.get("owner"), where)
    subject = _agent_from(doc.get("subject"), where)
    try:
        if kind == KIND_TREE:
            return DecisionTreeModel(
                owner=owner,
                subject=subject,
                n_features=int(_require(params, "n_features", where)),
                feature=np.asarray(_require(params, "feature", where), dtype=np.int32),
                threshold=np.asarray(_require(params, "threshold", where), dtype=np.float64),
                left=np.asarray(_require(params, "left", where), dtype=np.int32),
                right=np.asarray(_require(params, "right", where), dtype=np.int32),
                value=np.asarray(_require(params, "value", where), dtype=np.float64),
            )
        if kind == KIND_GNB:
            return GaussianNBModel(
                owner=owner,
                subject=subject,
                n_features=int(_require(params, "n_features", where)),
                count0=int(_require(params, "count0", where)),
                count1=int(_require(params, "count1", where)),
                mean0=np.asarray(_require(params, "mean0", where), dtype=np.float64),
                var0=np.asarray(_require(params, "var0", where), dtype=np.float64),
                mean1=np.asarray(_require(params, "mean1", where), dtype=np.float64),
                var1=np.asarray(_require(params, "var1", where), dtype=np.float64),
            )
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"{where}: malformed parameter ({exc})")
    raise ModelFormatError(f"{where}: unknown model kind {kind!r}")


def deserialize_model(text: str) -> Model:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model document is not valid JSON ({exc})")
    if isinstance(doc, dict) and doc.get("format") != "cobra-model-v1":
        raise ModelFormatError(f"unknown document format {doc.get('format')!r}")
    return _model_from_doc(doc)


def save_repository(repo: ModelRepository, directory: str | Path) -> None:
    """One model file per (advisor, subject) pair."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for u, z in repo.pairs():
        (directory / f"{u}__{z}.model.json").write_text(
            serialize_model(repo.get(u, z))
        )


def load_repository(directory: str | Path) -> ModelRepository:
    directory = Path(directory)
    repo = ModelRepository()
    for path in sorted(directory.glob("*.model.json")):
        repo.put(deserialize_model(path.read_text()))
    return repo
