"""Exchange sampler: swap ratios, crankshaft proposals, bookkeeping."""
import math
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import kstest

from gpds.exchange import (
    ExchangeState,
    _crankshaft,
    _swap_log_ratio,
    exchange_step_control,
    exchange_step_hyper,
    exchange_step_prior,
    init_exchange_state,
    predictive_sample_exchange,
)
from gpds.generate import draw_prior_dataset
from gpds.gp import BASE_JITTER, ConditioningSet, GpHyper, chol, kernel_matrix
from gpds.model import HyperPrior, HyperWalkScales, UniformBox, log_phi

BOX = UniformBox.unit(1)
THETA = GpHyper(amplitude=1.3, lengthscales=[0.3])


def make_state(rng, n=4, theta=THETA, psi=BOX, **kw):
    data = rng.uniform(0, 1, (n, 1))
    return init_exchange_state(data, theta, psi, rng, **kw)


class TestSwapRatio:
    def test_identity_swap_is_one(self):
        g = np.array([0.3, -0.8, 1.2])
        assert _swap_log_ratio(log_phi(g), log_phi(g), log_phi(g), log_phi(g)) == 0.0

    def test_single_point_example(self):
        # phi(ghat(x)) = 0.8, phi(g(x)) = 0.4, phi(g(w)) = phi(ghat(w)) = 0.5
        # gives a = 2, a certain acceptance
        def logit(p):
            return math.log(p / (1 - p))

        log_a = _swap_log_ratio(
            log_phi(np.array([logit(0.8)])), log_phi(np.array([logit(0.4)])),
            log_phi(np.array([logit(0.5)])), log_phi(np.array([logit(0.5)])))
        assert math.exp(log_a) == pytest.approx(2.0, rel=1e-10)


class TestExchangeStepPrior:
    def test_rejection_extends_cond_by_n(self):
        rng = np.random.default_rng(0)
        state = make_state(rng, n=4)
        n_before = len(state.cond)
        rejected_seen = False
        for _ in range(30):
            n_before = len(state.cond)
            state, accepted = exchange_step_prior(state, 100_000, rng)
            if not accepted:
                rejected_seen = True
                assert len(state.cond) == n_before + 4
        assert rejected_seen

    def test_acceptance_adopts_proposal_bookkeeping(self):
        rng = np.random.default_rng(1)
        state = make_state(rng, n=3)
        for _ in range(50):
            state, accepted = exchange_step_prior(state, 100_000, rng)
            if accepted:
                # proposal cond: controls first, then the fantasy loop's
                # proposals; all control values are fresh
                assert len(state.cond) >= len(state.controls) + 3
                assert np.array_equal(state.cond.points[:3], state.data)
                break
        else:
            pytest.fail("no acceptance in 50 prior steps")

    def test_data_values_track_controls(self):
        rng = np.random.default_rng(2)
        state = make_state(rng, n=3)
        for _ in range(10):
            state, _ = exchange_step_prior(state, 100_000, rng)
            assert np.array_equal(state.g_data, state.control_values[:3])
            assert np.array_equal(state.controls[:3], state.data)

    def test_budget_failure_leaves_state_unchanged(self):
        rng = np.random.default_rng(3)
        theta = GpHyper(amplitude=0.3, lengthscales=[0.3], mean=-7.0)
        state = make_state(rng, n=3, theta=theta)
        cond_before = state.cond.points.copy()
        state2, accepted = exchange_step_prior(state, 40, rng)
        assert not accepted
        assert np.array_equal(state2.cond.points, cond_before)
        assert state2.diagnostics["budget_failures"] == 1


class TestCrankshaft:
    def test_eps_zero_is_identity(self):
        rng = np.random.default_rng(4)
        values = np.array([0.5, -0.2])
        mean = np.zeros(2)
        lower = np.linalg.cholesky(np.array([[1.0, 0.3], [0.3, 1.0]]))
        out = _crankshaft(values, mean, lower, 1e-12, rng)
        assert np.allclose(out, values, atol=1e-10)

    def test_eps_one_is_independent_prior_draw(self):
        rng = np.random.default_rng(5)
        values = np.array([100.0, -100.0])  # wild state must not leak through
        mean = np.zeros(2)
        lower = np.linalg.cholesky(np.array([[1.0, 0.3], [0.3, 1.0]]))
        draws = np.array([_crankshaft(values, mean, lower, 1.0, rng) for _ in range(2000)])
        assert abs(draws.mean()) < 5.0 / math.sqrt(2000) * 3

    @pytest.mark.slow
    def test_preserves_gp_prior(self):
        # iterated crankshaft proposals from a prior draw stay prior
        # distributed at the control points
        pts = np.array([[0.2], [0.7]])
        cov = kernel_matrix(pts, pts, THETA)
        factor = chol(cov, BASE_JITTER)
        rng = np.random.default_rng(6)
        g = factor.lower @ rng.standard_normal(2)
        out = np.empty((10_000, 2))
        for i in range(10_000):
            g = _crankshaft(g, np.zeros(2), factor.lower, 0.35, rng)
            out[i] = g
        sd = math.sqrt(cov[0, 0] + factor.jitter)
        for col in range(2):
            assert kstest(out[::10, col], "norm", args=(0.0, sd)).pvalue > 0.01

    def test_control_step_validates_scale(self):
        rng = np.random.default_rng(7)
        state = make_state(rng)
        with pytest.raises(ValueError):
            exchange_step_control(state, 0.0, 1000, rng)
        with pytest.raises(ValueError):
            exchange_step_control(state, 1.5, 1000, rng)

    def test_control_step_runs_with_extra_controls(self):
        rng = np.random.default_rng(8)
        state = make_state(rng, n=3, n_extra_controls=4)
        assert state.controls.shape[0] == 7
        for _ in range(5):
            state, _ = exchange_step_control(state, 0.4, 100_000, rng)
            assert state.controls.shape[0] == 7
            assert np.array_equal(state.controls[:3], state.data)


class TestExchangeStepHyper:
    def test_identity_proposal_always_accepts(self):
        rng = np.random.default_rng(9)
        state = make_state(rng, n=3)
        zero = HyperWalkScales(0.0, 0.0, 0.0, 0.0, 0.0)
        state2, accepted = exchange_step_hyper(state, zero, HyperPrior(), 100_000, rng)
        assert accepted
        assert state2.theta.amplitude == state.theta.amplitude

    def test_support_violation_rejected(self, monkeypatch):
        rng = np.random.default_rng(10)
        state = make_state(rng, n=3)
        x = float(state.data[0, 0])
        bad_box = UniformBox([x + 1e-9], [x + 1.0])
        monkeypatch.setattr("gpds.exchange.propose_hypers",
                            lambda *a, **k: (state.theta, bad_box))
        state2, accepted = exchange_step_hyper(state, HyperWalkScales(),
                                               HyperPrior(), 100_000, rng)
        assert not accepted
        assert state2.psi is state.psi

    def test_moves_hyperparameters(self):
        rng = np.random.default_rng(11)
        state = make_state(rng, n=3)
        amps = {state.theta.amplitude}
        for _ in range(40):
            state, _ = exchange_step_hyper(state, HyperWalkScales(),
                                           HyperPrior(), 100_000, rng)
            amps.add(state.theta.amplitude)
        assert len(amps) > 1


class TestPredictiveSamplesExchange:
    def test_empty(self):
        state = make_state(np.random.default_rng(12))
        out = predictive_sample_exchange(state, 0, rng=np.random.default_rng(0))
        assert out.shape == (0, 1)

    def test_determinism(self):
        state = make_state(np.random.default_rng(13))
        a = predictive_sample_exchange(state, 5, 100_000, np.random.default_rng(1))
        b = predictive_sample_exchange(state, 5, 100_000, np.random.default_rng(1))
        assert np.array_equal(a, b)

    def test_state_not_mutated(self):
        state = make_state(np.random.default_rng(14))
        before = state.cond.points.copy()
        predictive_sample_exchange(state, 10, 100_000, np.random.default_rng(2))
        assert np.array_equal(state.cond.points, before)

    def test_saturated_state_samples_base(self):
        theta = GpHyper(amplitude=0.0, lengthscales=[1.0], mean=40.0)
        data = np.array([[0.5]])
        state = ExchangeState(data=data, cond=ConditioningSet(data, [40.0]),
                              controls=data, control_values=np.array([40.0]),
                              theta=theta, psi=BOX)
        out = predictive_sample_exchange(state, 5000, 100_000,
                                         np.random.default_rng(3))
        assert kstest(out[:, 0], "uniform").pvalue > 0.01


class TestBookkeepingAudit:
    def test_draw_ledger_monotone_per_function(self):
        # every retrospective draw for a live function must condition on at
        # least as much knowledge as the previous draw for that function
        rng = np.random.default_rng(15)
        state = make_state(rng, n=3)
        state.ledger = []
        for _ in range(10):
            marker = len(state.ledger)
            n_cond_entry = len(state.cond)
            state, accepted = exchange_step_prior(state, 100_000, rng)
            events = state.ledger[marker:]
            prop_sizes = [n for tag, n in events if tag == "proposal"]
            # the proposal's conditioning grows by one per retrospective draw
            assert prop_sizes == list(range(len(state.controls),
                                            len(state.controls) + len(prop_sizes)))
            cur_sizes = [n for tag, n in events if tag == "current"]
            assert cur_sizes == [n_cond_entry]

    def test_no_normalizer_evaluation_in_module(self):
        # the whole point of the swap construction: no quadrature anywhere
        src = Path("src/gpds/exchange.py").read_text()
        for needle in ("trapezoid", "trapz", "simpson", "quad("):
            assert needle not in src


class TestFantasyBatch:
    def test_fantasy_count_matches_data(self):
        rng = np.random.default_rng(16)
        state = make_state(rng, n=5)
        from gpds.exchange import _draw_fantasies
        from gpds.gp import prior_mean

        mean_c = prior_mean(state.controls, state.theta)
        factor = chol(kernel_matrix(state.controls, state.controls, state.theta))
        hat_values = mean_c + factor.lower @ rng.standard_normal(5)
        batch, trace = _draw_fantasies(state, state.controls, hat_values,
                                       state.theta, state.psi, 100_000, rng)
        assert batch.fantasies.shape == (5, 1)
        assert batch.g_at_fantasies.shape == (5,)
        assert len(batch.proposal_cond) == 5 + trace.proposal_count
