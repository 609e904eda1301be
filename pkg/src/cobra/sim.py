"""Synthetic multi-agent worlds and the adversarial evaluation grid.

A world has 100 advisors (51 of them malicious), 100 targets and one
advisee. How often an agent interacts with a target is a per-pair draw
from Beta(alpha, beta); sweeping (alpha, beta) over a log-spaced grid
covers everything from near-empty evidence to saturated evidence.

Each target violates its service agreement with a probability that
depends on the interaction context: target z holds a per-feature center
``mu`` and width ``sigma``, and with ``u = sum_f (c_f - mu_f)^2 /
(2 sigma_f^2)`` the violation probability is::

    p_v = exp(-0.5 * (2u)^sharpness)

At ``sharpness=1`` this is a plain product of per-feature Gaussian bumps
(1 at the center, falling to 0 in the tails); higher values keep the same
ridge but steepen its shoulder, so outcomes are nearly deterministic given
the context while still varying strongly across contexts. That separation
is what context-aware scoring can exploit and context-blind scoring
cannot.

Malicious advisors train honest models and then lie at the output: every
model they share predicts ``1 - p`` instead of ``p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from multiprocessing import get_context
from pathlib import Path
from typing import Sequence

import numpy as np

from . import evaluate
from .assembly import column_entropies, init_training_data
from .bnn import TrainHyperparams, build_topology, forward_batch, init_network, train
from .core import ADVISEE, ADVISOR, AgentId, EvidenceStore
from .encap import KindPolicy, ModelRepository, build_repository, flip_model


def default_grid(
    n_alpha: int = 10, n_beta: int = 10, lo: float = 0.25, hi: float = 128.0
) -> tuple[tuple[float, float], ...]:
    """Log-spaced (alpha, beta) cells, alpha-major order."""
    alphas = np.geomspace(lo, hi, n_alpha)
    betas = np.geomspace(lo, hi, n_beta)
    return tuple((float(a), float(b)) for a in alphas for b in betas)


@dataclass
class SimConfig:
    n_advisors_malicious: int = 51
    n_advisors_legit: int = 49
    n_targets: int = 100
    n_context_features: int = 4
    rounds: int = 200
    seed: int = 42
    grid: tuple[tuple[float, float], ...] = field(default_factory=default_grid)
    encap: str = "dt"
    min_records: int = 8
    cv_folds: int = 10
    cv_max_rows: int = 2000
    epochs: int = 15
    learning_rate: float = 0.05
    batch_size: int = 32
    momentum: float = 0.9
    patience: int | None = 3
    sharpness: float = 4.0
    sigma_min: float = 0.5
    sigma_max: float = 1.5

    def __post_init__(self) -> None:
        counts = (
            self.n_advisors_malicious + self.n_advisors_legit,
            self.n_targets,
            self.n_context_features,
            self.rounds,
        )
        if any(c <= 0 for c in counts):
            raise ValueError("agent, target, feature and round counts must be positive")
        if self.n_advisors_malicious < 0 or self.n_advisors_legit < 0:
            raise ValueError("advisor counts must be non-negative")
        if not self.grid or any(a <= 0 or b <= 0 for a, b in self.grid):
            raise ValueError("grid cells need positive alpha and beta")
        if not 0 < self.sigma_min <= self.sigma_max:
            raise ValueError("sigma range must satisfy 0 < min <= max")
        if self.sharpness <= 0:
            raise ValueError("sharpness must be positive")

    @property
    def n_advisors(self) -> int:
        return self.n_advisors_malicious + self.n_advisors_legit

    def hyperparams(self, seed: int, n_train: int | None = None) -> TrainHyperparams:
        """Per-fold hyperparameters.

        Small training sets get proportionally more epochs (bounded, and
        cheap at that size) and skip validation-split early stopping,
        whose handful of held-out rows would be pure noise.
        """
        epochs = self.epochs
        use_val = self.patience is not None
        if n_train is not None and n_train < 1000:
            epochs = min(120, math.ceil(self.epochs * 1000 / max(1, n_train)))
            use_val = False
        return TrainHyperparams(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=epochs,
            momentum=self.momentum,
            seed=seed,
            validation_fraction=0.1 if use_val else 0.0,
            patience=self.patience if use_val else None,
        )


@dataclass(frozen=True)
class TargetProfile:
    """Context-conditioned violation behavior of one target."""

    centers: tuple[float, ...]
    widths: tuple[float, ...]
    sharpness: float = 4.0

    def __post_init__(self) -> None:
        if len(self.centers) != len(self.widths):
            raise ValueError("centers and widths must have equal length")
        if any(w <= 0 for w in self.widths):
            raise ValueError("widths must be positive")


def target_violation_prob(profile: TargetProfile, context) -> float | np.ndarray:
    """Probability the target violates its agreement in this context."""
    ctx = np.asarray(context, dtype=np.float64)
    mu = np.asarray(profile.centers)
    sig = np.asarray(profile.widths)
    if ctx.shape[-1] != len(mu):
        raise ValueError(f"context must have {len(mu)} features")
    u = ((ctx - mu) ** 2 / (2.0 * sig**2)).sum(axis=-1)
    p = np.exp(-0.5 * (2.0 * u) ** profile.sharpness)
    return float(p) if np.ndim(p) == 0 else p


@dataclass
class World:
    """One simulated population plus its ground-truth oracle."""

    advisor_ids: tuple[str, ...]
    malicious_ids: tuple[str, ...]
    target_ids: tuple[str, ...]
    advisee: AgentId
    advisor_evidence: dict[str, EvidenceStore]
    advisee_evidence: EvidenceStore
    profiles: tuple[TargetProfile, ...]
    seed: int

    def violation_prob(self, target_id: str, context) -> float | np.ndarray:
        """Re-derives any record's violation probability exactly."""
        return target_violation_prob(
            self.profiles[self.target_ids.index(target_id)], context
        )


def _agent_evidence(
    rng: np.random.Generator,
    owner: AgentId,
    config: SimConfig,
    alpha: float,
    beta: float,
    target_ids: Sequence[str],
    centers: np.ndarray,
    widths: np.ndarray,
) -> EvidenceStore:
    k = config.n_context_features
    phis = rng.beta(alpha, beta, len(target_ids))
    counts = rng.binomial(config.rounds, phis)
    total = int(counts.sum())
    codes = np.repeat(np.arange(len(target_ids), dtype=np.int32), counts)
    contexts = rng.uniform(-1.0, 1.0, (total, k))
    u = ((contexts - centers[codes]) ** 2 / (2.0 * widths[codes] ** 2)).sum(axis=1)
    p_violate = np.exp(-0.5 * (2.0 * u) ** config.sharpness)
    outcomes = (rng.random(total) >= p_violate).astype(np.int8)
    return EvidenceStore(
        owner=owner,
        feature_names=[f"f{i}" for i in range(k)],
        target_ids=tuple(target_ids),
        codes=codes,
        contexts=contexts,
        outcomes=outcomes,
    )


def gen_world(config: SimConfig, alpha: float, beta: float, seed: int) -> World:
    """Fully seeded world generation; identical seeds give identical worlds."""
    rng = np.random.default_rng(seed)
    n_adv = config.n_advisors
    advisor_ids = tuple(f"a{i:03d}" for i in range(n_adv))
    malicious = advisor_ids[: config.n_advisors_malicious]
    target_ids = tuple(f"t{i:03d}" for i in range(config.n_targets))
    centers = rng.uniform(-1.0, 1.0, (config.n_targets, config.n_context_features))
    widths = rng.uniform(
        config.sigma_min, config.sigma_max, (config.n_targets, config.n_context_features)
    )
    profiles = tuple(
        TargetProfile(tuple(centers[z]), tuple(widths[z]), config.sharpness)
        for z in range(config.n_targets)
    )
    advisor_evidence = {
        a: _agent_evidence(
            rng, AgentId(a, ADVISOR), config, alpha, beta, target_ids, centers, widths
        )
        for a in advisor_ids
    }
    advisee = AgentId("advisee", ADVISEE)
    advisee_evidence = _agent_evidence(
        rng, advisee, config, alpha, beta, target_ids, centers, widths
    )
    return World(
        advisor_ids=advisor_ids,
        malicious_ids=malicious,
        target_ids=target_ids,
        advisee=advisee,
        advisor_evidence=advisor_evidence,
        advisee_evidence=advisee_evidence,
        profiles=profiles,
        seed=seed,
    )


def apply_attack(repo: ModelRepository, malicious: Sequence[str]) -> ModelRepository:
    """Flip every model owned by a malicious advisor; honest models are
    shared untouched. Applying the attack twice restores the originals."""
    bad = {str(m) for m in malicious}
    out = ModelRepository()
    for model in repo.models():
        out.put(flip_model(model) if model.owner.id in bad else model)
    return out


@dataclass
class CellResult:
    alpha: float
    beta: float
    acc: float
    rmse: float
    n_evidence: int
    n_models: int
    status: str
    seed: int

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def run_cell(config: SimConfig, alpha: float, beta: float, seed: int) -> CellResult:
    """Generate, attack and cross-validate one (alpha, beta) cell."""
    world = gen_world(config, alpha, beta, seed)
    repo = build_repository(
        world.advisor_evidence, KindPolicy(config.encap, seed), config.min_records
    )
    repo = apply_attack(repo, world.malicious_ids)
    evidence = world.advisee_evidence
    n_rows = len(evidence)

    def skipped(reason: str) -> CellResult:
        return CellResult(
            alpha, beta, math.nan, math.nan, n_rows, len(repo), f"skipped:{reason}", seed
        )

    if n_rows == 0:
        return skipped("no_advisee_evidence")
    if n_rows < config.cv_folds:
        return skipped("fewer_rows_than_folds")
    if n_rows > config.cv_max_rows:
        pick = np.sort(
            np.random.default_rng(seed + 1).permutation(n_rows)[: config.cv_max_rows]
        )
        evidence = evidence.subset(pick)
    ts = init_training_data(evidence, repo, world.advisor_ids)
    labels = ts.labels.astype(np.float64)
    folds = evaluate.kfold(labels, config.cv_folds, seed)
    scores = np.empty(len(ts))
    for f, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(ts)), test_idx)
        hbar = column_entropies(ts.features[train_idx], ts.n_context)
        topo = build_topology(hbar, ts.input_is_context())
        net = init_network(topo, seed=seed * 1013 + f)
        net, _ = train(
            net,
            ts.features[train_idx],
            labels[train_idx],
            config.hyperparams(seed * 2027 + f, len(train_idx)),
        )
        scores[test_idx] = forward_batch(net, ts.features[test_idx])
    acc, _ = evaluate.accuracy(scores, labels)
    err = evaluate.rmse(scores, labels)
    return CellResult(alpha, beta, acc, err, n_rows, len(repo), "ok", seed)


def _run_cell_job(args) -> CellResult:
    config, alpha, beta, seed = args
    return run_cell(config, alpha, beta, seed)


def run_grid(config: SimConfig, jobs: int = 1) -> list[CellResult]:
    """Evaluate every grid cell; cell i is seeded with ``seed + i`` and the
    cells are independent, so results do not depend on ``jobs``."""
    tasks = [
        (config, alpha, beta, config.seed + i)
        for i, (alpha, beta) in enumerate(config.grid)
    ]
    if jobs <= 1 or len(tasks) == 1:
        return [_run_cell_job(t) for t in tasks]
    with get_context("fork").Pool(min(jobs, len(tasks))) as pool:
        return list(pool.map(_run_cell_job, tasks))


def grid_summary(results: Sequence[CellResult]) -> dict:
    ok = [r for r in results if r.ok]
    return {
        "cells": len(results),
        "ok": len(ok),
        "skipped": len(results) - len(ok),
        "acc_ge_085": sum(1 for r in ok if r.acc >= 0.85),
        "acc_ge_080": sum(1 for r in ok if r.acc >= 0.80),
    }


def write_grid_results(results: Sequence[CellResult], path: str | Path) -> None:
    with Path(path).open("w") as fh:
        fh.write("alpha,beta,acc,rmse,n_evidence,n_models,status\n")
        for r in results:
            fh.write(
                f"{r.alpha!r},{r.beta!r},{r.acc!r},{r.rmse!r},"
                f"{r.n_evidence},{r.n_models},{r.status}\n"
            )


def write_cell_seeds(results: Sequence[CellResult], path: str | Path) -> None:
    with Path(path).open("w") as fh:
        fh.write("cell,alpha,beta,seed\n")
        for i, r in enumerate(results):
            fh.write(f"{i},{r.alpha!r},{r.beta!r},{r.seed}\n")
