from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grassrmc.datagen import SyntheticSpec, generate_synthetic, spectral_init
from grassrmc.grassmann import orthonormalize, retract_qr
from grassrmc.objective import ProblemInstance, make_state
from grassrmc.solvers import (
    ContinuationSchedule,
    SolverConfig,
    Status,
    StepResult,
    amanpg_solve,
    amanpgc_solve,
    grad_step_u,
    manpg_solve,
    manpgc_solve,
    prox_step_s,
    soft_threshold,
    stationarity_residual,
    iteration_bound,
)

from conftest import random_instance


def small_problem(seed=0, m=60, n=50, r=3, sampling=0.4, outliers=0.1, gamma=0.1):
    problem, truth = generate_synthetic(SyntheticSpec(m, n, r, sampling, outliers, seed), gamma=gamma)
    U0, S0 = spectral_init(problem.obs, r, seed=seed)
    return problem, truth, U0, S0


def exact_problem(seed=0, m=40, n=30, r=2):
    problem, truth = generate_synthetic(SyntheticSpec(m, n, r, 0.5, 0.0, seed))
    return problem, orthonormalize(truth.U_star)


# -- configuration ----------------------------------------------------------------

def test_config_defaults_and_validation():
    cfg = SolverConfig()
    assert (cfg.t_S, cfg.alpha, cfg.beta, cfg.max_iters) == (1.0, 1.0, 1.0, 500)
    problem, _ = exact_problem()
    assert cfg.step_u(problem.obs) == 2.0 / problem.obs.nnz
    for bad in (dict(t_S=0), dict(t_U=-1.0), dict(alpha=0.5), dict(beta=2.0), dict(epsilon=0), dict(max_iters=0)):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


def test_schedule_defaults():
    sch = ContinuationSchedule()
    assert (sch.gamma0, sch.mu1, sch.mu2) == (10.0, 0.1, 0.1)
    assert [g for g, _ in sch.rounds()] == pytest.approx([10, 1, 0.1, 0.01])


def test_schedule_four_rounds_at_floor_1e3():
    sch = ContinuationSchedule(gamma0=10, mu1=0.1, gamma_min=1e-3, epsilon0=30)
    rounds = sch.rounds()
    assert len(rounds) == 4
    assert [g for g, _ in rounds] == pytest.approx([10, 1, 0.1, 0.01])
    assert [e for _, e in rounds] == pytest.approx([30, 3, 0.3, 0.03])


@pytest.mark.parametrize("bad", [dict(mu1=1.0), dict(mu2=0.0), dict(gamma0=0.0), dict(epsilon0=-1), dict(gamma_min=0)])
def test_schedule_validation(bad):
    with pytest.raises(ValueError):
        ContinuationSchedule(**bad)


# -- steps ------------------------------------------------------------------------

def test_soft_threshold_closed_form():
    assert soft_threshold(np.array([2.0]), 1.0)[0] == 1.0
    assert soft_threshold(np.array([-2.0]), 1.0)[0] == -1.0
    assert soft_threshold(np.array([0.5, -0.5]), 1.0).tolist() == [0.0, 0.0]


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-5, 5), tau=st.floats(0, 3))
def test_soft_threshold_grid_oracle(x, tau):
    grid = np.arange(-8.0, 8.0 + 1e-4, 1e-4)
    best = grid[np.argmin(tau * np.abs(grid) + 0.5 * (grid - x) ** 2)]
    assert abs(soft_threshold(np.array([x]), tau)[0] - best) <= 1e-4


def test_prox_step_examples():
    obs, U, S = random_instance(12, 9, 2, 0.5, 1)
    st_ = make_state(obs, U, np.zeros(obs.nnz), 1e-8)
    g = st_.residual
    dS = prox_step_s(st_, 1.0, 1.0)
    np.testing.assert_allclose(dS, soft_threshold(-g, 1.0))
    # one entry with S = 0 and gradient -2 steps to +1
    k = int(np.argmin(g))
    assert dS[k] == pytest.approx(max(-g[k] - 1.0, 0.0))


def test_prox_fixed_point_at_zero():
    problem, U = exact_problem(2)
    st_ = make_state(problem.obs, U, np.zeros(problem.obs.nnz), problem.lam)
    assert np.max(np.abs(prox_step_s(st_, 1.0, 1.0))) == 0.0


def test_grad_step_u_scaling_and_zero():
    obs, U, S = random_instance(20, 15, 3, 0.4, 3)
    st_ = make_state(obs, U, S, 1e-8)
    a, b = grad_step_u(st_, 0.1), grad_step_u(st_, 0.2)
    assert np.array_equal(2 * a, b)
    zero = obs.with_values(np.zeros(obs.nnz))
    st0 = make_state(zero, U, np.zeros(obs.nnz), 1e-8)
    assert not grad_step_u(st0, 1.0).any()


@pytest.mark.parametrize("seed", range(3))
def test_small_u_step_decreases_f(seed):
    obs, U, S = random_instance(30, 20, 3, 0.4, 10 + seed, min_per_col=3)
    st_ = make_state(obs, U, S, 1e-8)
    F0 = st_.objective(1.0)
    t = 1e-3
    new = make_state(obs, retract_qr(U, grad_step_u(st_, t)), S, 1e-8)
    assert new.objective(1.0) <= F0


def test_stationarity_residual():
    assert stationarity_residual(StepResult.from_steps(np.zeros(3), np.zeros((4, 2)))) == 0.0
    dS = np.zeros(5)
    dS[2] = 3.0
    assert stationarity_residual(StepResult.from_steps(dS, np.zeros((4, 2)))) == 9.0
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal(7), rng.standard_normal((6, 2))
    step = StepResult.from_steps(a, b)
    assert stationarity_residual(step) == pytest.approx(float(np.sum(a**2) + np.sum(b**2)), rel=1e-14)
    assert step.norm_dS_sq == pytest.approx(float(np.sum(a**2)), rel=1e-14)


# -- solvers --------------------------------------------------------------------

@pytest.mark.parametrize("solve", [manpg_solve, amanpg_solve])
def test_stationary_start(solve):
    problem, U = exact_problem(4)
    sol = solve(problem, SolverConfig(), U, np.zeros(problem.obs.nnz))
    assert sol.status is Status.CONVERGED
    assert sol.iterations <= 2
    assert stationarity_residual(sol.final_step) <= 1e-12


@pytest.mark.parametrize("solve", [manpg_solve, amanpg_solve])
def test_converged_meets_threshold(solve):
    problem, _, U0, S0 = small_problem(5)
    cfg = SolverConfig(epsilon=1e-2, t_U=0.5 / problem.obs.nnz)
    sol = solve(problem, cfg, U0, S0)
    assert sol.status is Status.CONVERGED
    assert stationarity_residual(sol.final_step) <= cfg.epsilon**2
    rec = sol.records[-1]
    assert rec.norm_dU_sq + rec.norm_dS_sq <= cfg.epsilon**2


def test_iteration_cap_status():
    problem, _, U0, S0 = small_problem(6)
    sol = amanpg_solve(problem, SolverConfig(epsilon=1e-12, max_iters=3), U0, S0)
    assert sol.status is Status.ITERATION_CAP and sol.iterations == 3
    assert [r.iter for r in sol.records] == [1, 2, 3]


def test_records_ordered_and_log_every():
    problem, _, U0, S0 = small_problem(7)
    sol = amanpg_solve(problem, SolverConfig(epsilon=1e-12, max_iters=10, log_every=4), U0, S0)
    assert [r.iter for r in sol.records] == [4, 8, 10]
    el = [r.elapsed for r in sol.records]
    assert el == sorted(el)


@pytest.mark.parametrize("solve", [manpg_solve, amanpg_solve])
def test_monotone_under_conservative_steps(solve):
    problem, _, U0, S0 = small_problem(8)
    sol = solve(problem, SolverConfig(conservative=True, epsilon=1e-6, max_iters=60), U0, S0)
    F = [sol.initial_objective] + [r.F for r in sol.records]
    assert all(b <= a for a, b in zip(F, F[1:]))


def test_sufficient_decrease_per_iteration():
    problem, _, U0, S0 = small_problem(9)
    seen = []

    def check(info):
        s = info.step
        seen.append((
            info.F_mid - info.F_prev + 0.5 * s.norm_dS_sq,
            info.F - info.F_mid + 0.5 * info.lipschitz_u * s.norm_dU_sq,
        ))

    amanpg_solve(problem, SolverConfig(conservative=True, max_iters=40, epsilon=1e-8), U0, S0, on_iteration=check)
    assert seen
    for s_gap, u_gap in seen:
        assert s_gap <= 1e-10
        assert u_gap <= 1e-10


def test_amanpg_reuses_factor():
    # the U step must see V re-solved at (U^k, S^{k+1}); compare against a manual step
    problem, _, U0, S0 = small_problem(10)
    cfg = SolverConfig(max_iters=1, epsilon=1e-12, t_U=0.5 / problem.obs.nnz)
    sol = amanpg_solve(problem, cfg, U0, S0)
    st0 = make_state(problem.obs, U0, S0, problem.lam)
    S1 = S0 + prox_step_s(st0, 1.0, problem.gamma)
    mid = make_state(problem.obs, U0, S1, problem.lam)
    U1 = retract_qr(U0, grad_step_u(mid, cfg.t_U))
    np.testing.assert_allclose(sol.U.basis, U1.basis, atol=1e-13)
    jac = manpg_solve(problem, cfg, U0, S0)
    U1j = retract_qr(U0, grad_step_u(st0, cfg.t_U))
    np.testing.assert_allclose(jac.U.basis, U1j.basis, atol=1e-13)
    np.testing.assert_allclose(jac.S, S1, atol=0)


def test_callback_stop_and_metric():
    problem, truth, U0, S0 = small_problem(11)
    calls = []
    sol = amanpg_solve(problem, SolverConfig(epsilon=1e-12), U0, S0,
                       metric=lambda U, V: 0.5, on_iteration=lambda info: calls.append(info.iteration) or len(calls) == 3)
    assert sol.status is Status.STOPPED and sol.iterations == 3
    assert [r.rel_diff for r in sol.records] == [0.5] * 3


def test_deterministic_records():
    problem, _, U0, S0 = small_problem(12)
    cfg = SolverConfig(epsilon=1e-4, max_iters=50, t_U=1.0 / problem.obs.nnz)
    a = amanpgc_solve(problem, ContinuationSchedule(epsilon0=1.0), cfg, U0, S0)
    b = amanpgc_solve(problem, ContinuationSchedule(epsilon0=1.0), cfg, U0, S0)
    strip = lambda recs: [replace(r, elapsed=0.0) for r in recs]  # noqa: E731
    assert strip(a.records) == strip(b.records)
    assert np.array_equal(a.U.basis, b.U.basis)


def test_continuation_zero_rounds():
    problem, _, U0, S0 = small_problem(13)
    sch = ContinuationSchedule(gamma0=1.0, gamma_min=1.0)
    sol = amanpgc_solve(problem, sch, SolverConfig(), U0, S0)
    assert sol.rounds == 0 and sol.iterations == 0 and sol.records == []
    assert sol.U is U0 and np.array_equal(sol.S, S0)
    np.testing.assert_array_equal(sol.V, make_state(problem.obs, U0, S0, problem.lam).V)


@pytest.mark.parametrize("solve", [manpgc_solve, amanpgc_solve])
def test_continuation_logs_rounds(solve):
    problem, _, U0, S0 = small_problem(14)
    sch = ContinuationSchedule(gamma0=1.0, gamma_min=1e-3, epsilon0=1.0)
    sol = solve(problem, sch, SolverConfig(max_iters=30, t_U=0.5 / problem.obs.nnz), U0, S0)
    assert sol.rounds == 3
    gammas = sorted({r.gamma for r in sol.records}, reverse=True)
    assert gammas == pytest.approx([1.0, 0.1, 0.01])
    iters = [r.iter for r in sol.records]
    assert iters == list(range(1, sol.iterations + 1))
    for r in sol.records:
        assert r.epsilon == pytest.approx(r.gamma)  # epsilon0 = gamma0 and mu1 = mu2 here


def test_continuation_callback_ends_round_only():
    problem, _, U0, S0 = small_problem(15)
    sch = ContinuationSchedule(gamma0=1.0, gamma_min=1e-2, epsilon0=1e-6)
    sol = amanpgc_solve(problem, sch, SolverConfig(max_iters=50), U0, S0, on_iteration=lambda info: True)
    assert sol.rounds == 2 and sol.iterations == 2
    assert [r.gamma for r in sol.records] == pytest.approx([1.0, 0.1])


def test_iteration_bound_formula():
    assert iteration_bound(3.0, 1.0, 0.1) == 600
    assert iteration_bound(0.0, 1.0, 0.1) == 0


def test_problem_gamma_used_by_single_runs():
    obs, U, S = random_instance(20, 15, 2, 0.5, 16)
    p1 = ProblemInstance(obs, 2, gamma=1.0)
    p2 = replace(p1, gamma=2.0)
    a = amanpg_solve(p1, SolverConfig(max_iters=1, epsilon=1e-12), U, np.zeros(obs.nnz))
    b = amanpg_solve(p2, SolverConfig(max_iters=1, epsilon=1e-12), U, np.zeros(obs.nnz))
    assert b.initial_objective == a.initial_objective
    assert not np.array_equal(a.S, b.S)
