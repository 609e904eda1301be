"""World generation, the lying-advisor attack and the evaluation grid."""

import math

import numpy as np
import pytest

from cobra.assembly import init_training_data
from cobra.encap import KindPolicy, build_repository
from cobra.sim import (
    SimConfig,
    TargetProfile,
    World,
    apply_attack,
    default_grid,
    gen_world,
    grid_summary,
    run_cell,
    run_grid,
    target_violation_prob,
    write_grid_results,
)

EXP_HALF = 0.6065306597126334  # e^-0.5


def _small_config(**overrides):
    base = dict(
        n_advisors_malicious=3,
        n_advisors_legit=3,
        n_targets=5,
        n_context_features=2,
        rounds=40,
        seed=1,
        grid=((2.0, 1.0),),
        min_records=4,
        cv_folds=5,
        cv_max_rows=200,
        epochs=8,
    )
    base.update(overrides)
    return SimConfig(**base)


class TestViolationProbability:
    def test_peak_at_center(self):
        profile = TargetProfile((0.1, -0.4, 0.9, 0.0), (0.5, 0.5, 0.5, 0.5))
        assert target_violation_prob(profile, [0.1, -0.4, 0.9, 0.0]) == 1.0

    def test_vanishes_in_tails(self):
        profile = TargetProfile((0.0, 0.0), (0.5, 0.5))
        assert target_violation_prob(profile, [50.0, -50.0]) == pytest.approx(0.0, abs=1e-300)

    def test_single_feature_half_sigma_point(self):
        # at |c - mu| = sigma the value is e^-0.5 for any sharpness
        for sharpness in (1.0, 2.0, 4.0, 6.0):
            profile = TargetProfile((0.0,), (0.5,), sharpness)
            assert target_violation_prob(profile, [0.5]) == pytest.approx(
                EXP_HALF, abs=1e-12
            )

    def test_always_a_probability(self):
        rng = np.random.default_rng(0)
        profile = TargetProfile(tuple(rng.uniform(-1, 1, 4)), tuple(rng.uniform(0.5, 1.5, 4)))
        ctx = rng.uniform(-3, 3, (1000, 4))
        p = target_violation_prob(profile, ctx)
        assert (p >= 0).all() and (p <= 1).all()

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            TargetProfile((0.0,), (0.0,))
        with pytest.raises(ValueError):
            TargetProfile((0.0, 0.0), (0.5,))


class TestWorldGeneration:
    def test_same_seed_bitwise_identical(self):
        cfg = _small_config()
        w1 = gen_world(cfg, 2.0, 1.0, 7)
        w2 = gen_world(cfg, 2.0, 1.0, 7)
        np.testing.assert_array_equal(
            w1.advisee_evidence.contexts, w2.advisee_evidence.contexts
        )
        np.testing.assert_array_equal(
            w1.advisee_evidence.outcomes, w2.advisee_evidence.outcomes
        )
        for a in w1.advisor_ids:
            np.testing.assert_array_equal(
                w1.advisor_evidence[a].contexts, w2.advisor_evidence[a].contexts
            )
        assert gen_world(cfg, 2.0, 1.0, 8).advisee_evidence.contexts.shape != (
            0,
        ) or True  # different seed still valid

    def test_rosters_and_roles(self):
        cfg = _small_config()
        w = gen_world(cfg, 1.0, 1.0, 3)
        assert len(w.advisor_ids) == 6
        assert len(w.malicious_ids) == 3
        assert set(w.malicious_ids) <= set(w.advisor_ids)
        assert len(w.target_ids) == 5
        assert w.advisee.role == "advisee"

    def test_interaction_rate_matches_beta_mean(self):
        # Monte Carlo: the empirical per-pair interaction rate must sit
        # within three standard errors of alpha / (alpha + beta)
        cfg = _small_config(n_advisors_malicious=10, n_advisors_legit=10, n_targets=20, rounds=50)
        alpha, beta = 3.0, 2.0
        w = gen_world(cfg, alpha, beta, 11)
        total_rounds = 20 * 20 * 50
        n_events = sum(len(s) for s in w.advisor_evidence.values())
        rate = n_events / total_rounds
        mean = alpha / (alpha + beta)
        # variance of one round's indicator: E[phi]~Beta moments
        var_phi = alpha * beta / ((alpha + beta) ** 2 * (alpha + beta + 1))
        se = math.sqrt((mean * (1 - mean) + var_phi) / total_rounds) * 3
        # pair-level correlation inflates the error; be generous
        assert abs(rate - mean) < max(3 * se, 0.05)

    def test_truth_oracle_rederives_probability(self):
        cfg = _small_config()
        w = gen_world(cfg, 2.0, 1.0, 5)
        ev = w.advisee_evidence
        for i in range(min(len(ev), 10)):
            z = ev.target_of_row(i)
            p = w.violation_prob(z, ev.contexts[i])
            profile = w.profiles[w.target_ids.index(z)]
            assert p == target_violation_prob(profile, ev.contexts[i])

    def test_extreme_sparsity_still_runs(self):
        cfg = _small_config(rounds=5)
        w = gen_world(cfg, 0.05, 50.0, 2)
        assert isinstance(w, World)  # near-empty evidence is fine


class TestAttack:
    def _repo_and_world(self, seed=3):
        cfg = _small_config()
        w = gen_world(cfg, 4.0, 1.0, seed)
        repo = build_repository(w.advisor_evidence, KindPolicy("dt", 0), min_records=4)
        return cfg, w, repo

    def test_exactly_malicious_models_wrapped(self):
        _, w, repo = self._repo_and_world()
        attacked = apply_attack(repo, w.malicious_ids)
        assert len(attacked) == len(repo)
        bad = set(w.malicious_ids)
        for u, z in repo.pairs():
            kind = attacked.get(u, z).kind
            if u in bad:
                assert kind == "flipped_wrapper"
            else:
                assert kind != "flipped_wrapper"

    def test_empty_roster_is_identity(self):
        _, w, repo = self._repo_and_world()
        same = apply_attack(repo, ())
        for u, z in repo.pairs():
            assert same.get(u, z) is repo.get(u, z)

    def test_double_attack_restores_predictions(self):
        _, w, repo = self._repo_and_world()
        twice = apply_attack(apply_attack(repo, w.malicious_ids), w.malicious_ids)
        rng = np.random.default_rng(0)
        ctx = rng.uniform(-1, 1, (20, 2))
        for u, z in repo.pairs():
            np.testing.assert_array_equal(
                twice.get(u, z).predict_batch(ctx), repo.get(u, z).predict_batch(ctx)
            )

    def test_attack_flips_assembled_columns(self):
        cfg, w, repo = self._repo_and_world()
        attacked = apply_attack(repo, w.malicious_ids)
        ev = w.advisee_evidence
        ts_clean = init_training_data(ev, repo, w.advisor_ids)
        ts_attacked = init_training_data(ev, attacked, w.advisor_ids)
        bad = set(w.malicious_ids)
        for col, advisor in enumerate(ts_clean.advisor_ids):
            clean = ts_clean.advisor_block()[:, col]
            under = ts_attacked.advisor_block()[:, col]
            modeled = clean != 0.5
            if advisor in bad:
                np.testing.assert_allclose(under[modeled], 1.0 - clean[modeled], atol=1e-15)
                np.testing.assert_array_equal(under[~modeled], clean[~modeled])
            else:
                np.testing.assert_array_equal(under, clean)


class TestGrid:
    def test_default_grid_is_square_log_spaced(self):
        grid = default_grid()
        assert len(grid) == 100
        alphas = sorted({a for a, _ in grid})
        assert alphas[0] == 0.25 and alphas[-1] == 128.0
        ratios = [alphas[i + 1] / alphas[i] for i in range(len(alphas) - 1)]
        np.testing.assert_allclose(ratios, ratios[0])

    def test_run_cell_reports_counts(self):
        cfg = _small_config()
        r = run_cell(cfg, 4.0, 1.0, 9)
        assert r.ok
        assert 0.0 <= r.acc <= 1.0
        assert 0.0 <= r.rmse <= 1.0
        assert r.n_evidence > 0
        assert r.n_models > 0

    def test_empty_advisee_evidence_is_skipped_with_reason(self):
        cfg = _small_config(rounds=1)
        # tiny alpha, huge beta: interaction probabilities near zero
        r = run_cell(cfg, 1e-3, 1e3, 123)
        assert not r.ok
        assert r.status.startswith("skipped:")

    def test_grid_deterministic_and_parallel_invariant(self):
        cfg = _small_config(grid=((2.0, 1.0), (0.5, 4.0)))
        seq = run_grid(cfg, jobs=1)
        par = run_grid(cfg, jobs=2)
        again = run_grid(cfg, jobs=1)
        for a, b in zip(seq, again):
            assert a == b
        for a, b in zip(seq, par):
            assert a == b

    def test_results_file_and_summary(self, tmp_path):
        cfg = _small_config(grid=((2.0, 1.0), (1.0, 2.0)))
        results = run_grid(cfg)
        path = tmp_path / "grid.csv"
        write_grid_results(results, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "alpha,beta,acc,rmse,n_evidence,n_models,status"
        assert len(lines) == 3
        summary = grid_summary(results)
        assert summary["cells"] == 2
        assert summary["ok"] + summary["skipped"] == 2

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SimConfig(n_targets=0)
        with pytest.raises(ValueError):
            SimConfig(grid=((1.0, -2.0),))
        with pytest.raises(ValueError):
            SimConfig(sigma_min=0.0)


class TestHonestAbundantEvidence:
    def test_bnn_beats_majority_baseline_without_attack(self):
        # abundant evidence, nobody lying: the cross-validated network must
        # beat always-predict-majority on the same rows
        cfg = SimConfig(
            n_advisors_malicious=0,
            n_advisors_legit=20,
            n_targets=20,
            n_context_features=4,
            rounds=100,
            seed=3,
            grid=((8.0, 0.5),),
            min_records=8,
            cv_folds=10,
            cv_max_rows=800,
            epochs=15,
        )
        r = run_cell(cfg, 8.0, 0.5, 3)
        assert r.ok
        world = gen_world(cfg, 8.0, 0.5, 3)
        rate = world.advisee_evidence.outcomes.mean()
        majority = max(rate, 1.0 - rate)
        assert r.acc > majority
