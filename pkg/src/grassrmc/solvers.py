"""ManPG, alternating ManPG, and their continuation wrappers.

One iteration takes a proximal gradient step in ``S`` and a Riemannian gradient
step in ``U`` followed by a QR retraction; ``V`` is always the exact inner
minimizer. ManPG computes both steps from ``(U^k, S^k)`` (Jacobi order);
AManPG re-solves ``V`` at ``(U^k, S^{k+1})`` before the ``U`` step (Gauss-Seidel
order), reusing the block factorization since it depends only on ``U``.
"""
from dataclasses import dataclass, field, replace
import enum
import logging
import math
import time

import numpy as np

from .grassmann import retract_qr
from .objective import grad_s, grad_u, make_state

logger = logging.getLogger(__name__)

# Lipschitz constant of the S-gradient: the reduced Hessian in S is a
# contraction of the mask projector
LIPSCHITZ_S = 1.0


class Status(enum.Enum):
    CONVERGED = "converged"
    ITERATION_CAP = "iteration_cap"
    STOPPED = "stopped"


@dataclass(frozen=True)
class SolverConfig:
    """Step sizes and stopping rule for a single (A)ManPG run.

    ``t_U=None`` means ``2 / |Omega|``. The run stops once
    ``||dU||^2 + ||dS||^2 <= epsilon^2``. With ``conservative=True`` the step
    sizes become ``t_S = 1 / L_S`` and ``t_U = 1 / L_U``, where ``L_U`` is probed
    by backtracking from ``lipschitz_u0`` and doubled whenever the sufficient
    decrease in ``U`` fails.
    """

    t_S: float = 1.0
    t_U: float | None = None
    alpha: float = 1.0
    beta: float = 1.0
    epsilon: float = 1e-3
    max_iters: int = 500
    log_every: int = 1
    conservative: bool = False
    lipschitz_u0: float = 1.0

    def __post_init__(self):
        if not self.t_S > 0:
            raise ValueError("t_S must be positive")
        if self.t_U is not None and not self.t_U > 0:
            raise ValueError("t_U must be positive")
        if self.alpha != 1.0 or self.beta != 1.0:
            raise ValueError("alpha and beta are fixed at 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1 or self.log_every < 1:
            raise ValueError("max_iters and log_every must be >= 1")

    def step_u(self, obs):
        return 2.0 / obs.nnz if self.t_U is None else self.t_U


@dataclass(frozen=True)
class ContinuationSchedule:
    """Geometric decrease of gamma and epsilon between warm-started runs.

    ``gamma_min=None`` means ``1e-4 * gamma0``, which gives four rounds
    (gamma = 10, 1, 0.1, 0.01) at the defaults.
    """

    gamma0: float = 10.0
    gamma_min: float | None = None
    mu1: float = 0.1
    mu2: float = 0.1
    epsilon0: float = 30.0

    def __post_init__(self):
        if not self.gamma0 > 0 or not self.epsilon0 > 0:
            raise ValueError("gamma0 and epsilon0 must be positive")
        if self.gamma_min is not None and not self.gamma_min > 0:
            raise ValueError("gamma_min must be positive")
        if not (0 < self.mu1 < 1 and 0 < self.mu2 < 1):
            raise ValueError("mu1 and mu2 must lie in (0, 1)")

    @property
    def floor(self):
        return 1e-4 * self.gamma0 if self.gamma_min is None else self.gamma_min

    def rounds(self):
        """``(gamma, epsilon)`` for every round, in order."""
        out = []
        gamma, eps = self.gamma0, self.epsilon0
        # relative slack so that e.g. 10 * 0.1**3 counts as equal to 0.01
        while gamma > self.floor * (1 + 1e-9):
            out.append((gamma, eps))
            gamma *= self.mu1
            eps *= self.mu2
        return out


@dataclass(frozen=True)
class StepResult:
    delta_S: np.ndarray
    delta_U: np.ndarray
    norm_dS_sq: float
    norm_dU_sq: float

    @classmethod
    def from_steps(cls, delta_S, delta_U):
        return cls(delta_S, delta_U, float(np.dot(delta_S, delta_S)), float(np.vdot(delta_U, delta_U)))


@dataclass(frozen=True)
class ConvergenceRecord:
    iter: int
    elapsed: float
    F: float
    norm_dU_sq: float
    norm_dS_sq: float
    gamma: float
    epsilon: float
    rel_diff: float | None = None


@dataclass
class IterationInfo:
    """What an ``on_iteration`` callback sees after each completed iteration."""

    iteration: int
    U_prev: object
    V_prev: np.ndarray
    U: object
    V: np.ndarray
    S: np.ndarray
    F: float
    F_prev: float
    F_mid: float | None
    step: StepResult
    lipschitz_u: float | None
    gamma: float | None = None


@dataclass
class Solution:
    U: object
    V: np.ndarray
    S: np.ndarray
    records: list
    status: Status
    iterations: int
    objective: float
    initial_objective: float
    final_step: StepResult | None = None
    rounds: int = 1
    lipschitz_u: list = field(default_factory=list)


def soft_threshold(x, tau):
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def prox_step_s(state, t_S, gamma):
    """Proximal l1 step on the observed set: ``soft(S - t_S g, gamma t_S) - S``."""
    g = grad_s(state)
    return soft_threshold(state.S - t_S * g, gamma * t_S) - state.S


def grad_step_u(state, t_U):
    return -t_U * grad_u(state)


def stationarity_residual(step):
    return step.norm_dS_sq + step.norm_dU_sq


def manpg_solve(problem, config, U0, S0, metric=None, on_iteration=None):
    """ManPG with Jacobi ordering: both steps use the gradient at ``(U^k, S^k)``."""
    return _solve(problem, config, U0, S0, False, metric, on_iteration)


def amanpg_solve(problem, config, U0, S0, metric=None, on_iteration=None):
    """AManPG with Gauss-Seidel ordering: the U step uses ``(U^k, S^{k+1})``.

    ``metric(U, V)`` fills the ``rel_diff`` column of the records. If
    ``on_iteration(info)`` returns true the run stops with status ``STOPPED``.
    """
    return _solve(problem, config, U0, S0, True, metric, on_iteration)


def _sufficient_decrease_tol(F):
    return 64 * np.finfo(float).eps * max(1.0, abs(F))


def _probe_u_step(problem, state, g, S_new, F_ref, L, backtrack):
    """Find ``L_U`` with ``F(Retr(-g/L), S_new) <= F_ref - L/2 ||g/L||^2``.

    Doubles ``L`` until the inequality holds; with ``backtrack`` it first
    halves ``L`` while the inequality keeps holding.
    """
    obs, lam, gamma = problem.obs, problem.lam, problem.gamma
    tol = _sufficient_decrease_tol(F_ref)

    def attempt(L):
        dU = -g / L
        new = make_state(obs, retract_qr(state.U, dU), S_new, lam)
        F_new = new.objective(gamma)
        ok = F_new <= F_ref - 0.5 * L * float(np.vdot(dU, dU)) + tol
        return ok, dU, new, F_new

    best = attempt(L)
    if backtrack and best[0]:
        for _ in range(60):
            trial = attempt(L / 2)
            if not trial[0]:
                break
            L, best = L / 2, trial
    for _ in range(200):
        if best[0]:
            break
        L *= 2
        best = attempt(L)
    _, dU, new, F_new = best
    return L, dU, new, F_new


def _solve(problem, config, U0, S0, alternating, metric, on_iteration,
           iter_offset=0, clock=None, epsilon_log=None):
    obs, lam, gamma = problem.obs, problem.lam, problem.gamma
    t_S = 1.0 / LIPSCHITZ_S if config.conservative else config.t_S
    t_U = config.step_u(obs)
    L_U = config.lipschitz_u0
    threshold = config.epsilon**2
    eps_log = config.epsilon if epsilon_log is None else epsilon_log
    start = time.perf_counter() if clock is None else clock
    paused = 0.0

    state = make_state(obs, U0, S0, lam)
    F = state.objective(gamma)
    F0 = F
    records = []
    L_history = []
    status = Status.ITERATION_CAP
    step = None

    for k in range(config.max_iters):
        dS = prox_step_s(state, t_S, gamma)
        S_new = state.S + config.alpha * dS
        F_mid = None
        if alternating or config.conservative:
            # A depends only on U: reuse the factorization
            mid = make_state(obs, state.U, S_new, lam, factor=state.factor)
            F_mid = mid.objective(gamma)
        g = grad_u(mid if alternating else state)

        if config.conservative:
            if not g.any():
                dU, new, F_new = np.zeros_like(g), mid, F_mid
            else:
                L_U, dU, new, F_new = _probe_u_step(problem, state, g, S_new, F_mid, L_U, backtrack=(k == 0))
            L_history.append(L_U)
        else:
            dU = -t_U * g
            U_new = retract_qr(state.U, config.beta * dU)
            if U_new is state.U and F_mid is not None:
                new = mid
            else:
                new = make_state(obs, U_new, S_new, lam)
            F_new = new.objective(gamma)

        step = StepResult.from_steps(dS, dU)
        prev, F_prev = state, F
        state, F = new, F_new
        res = stationarity_residual(step)
        done = res <= threshold
        it = iter_offset + k + 1
        last = done or k + 1 == config.max_iters

        stop = False
        if on_iteration is not None:
            t0 = time.perf_counter()
            stop = bool(on_iteration(IterationInfo(
                it, prev.U, prev.V, state.U, state.V, state.S, F, F_prev, F_mid, step,
                L_U if config.conservative else None, problem.gamma,
            )))
            paused += time.perf_counter() - t0

        if (k + 1) % config.log_every == 0 or last or stop:
            elapsed = time.perf_counter() - start - paused
            rel = None
            if metric is not None:
                t0 = time.perf_counter()
                rel = float(metric(state.U, state.V))
                paused += time.perf_counter() - t0
            records.append(ConvergenceRecord(it, elapsed, F, step.norm_dU_sq, step.norm_dS_sq, gamma, eps_log, rel))
            logger.debug("iter %d F=%.10e res=%.3e", it, F, res)

        if done:
            status = Status.CONVERGED
            break
        if stop:
            status = Status.STOPPED
            break

    return Solution(
        U=state.U, V=state.V, S=state.S, records=records, status=status,
        iterations=k + 1, objective=F, initial_objective=F0, final_step=step,
        lipschitz_u=L_history,
    )


def manpgc_solve(problem, schedule, config, U0, S0, metric=None, on_iteration=None):
    """Continuation on gamma around :func:`manpg_solve`."""
    return _continuation(problem, schedule, config, U0, S0, False, metric, on_iteration)


def amanpgc_solve(problem, schedule, config, U0, S0, metric=None, on_iteration=None):
    """Continuation on gamma around :func:`amanpg_solve`.

    Each round solves with ``(gamma_l, epsilon_l)`` warm-started from the
    previous round, then shrinks both by ``mu1`` and ``mu2``. ``problem.gamma``
    is ignored. A true return from ``on_iteration`` ends the current round
    only; the schedule still runs to completion.
    """
    return _continuation(problem, schedule, config, U0, S0, True, metric, on_iteration)


def _continuation(problem, schedule, config, U0, S0, alternating, metric, on_iteration):
    start = time.perf_counter()
    U, S = U0, np.asarray(S0, dtype=np.float64)
    rounds = schedule.rounds()
    if not rounds:
        state = make_state(problem.obs, U, S, problem.lam)
        F = state.objective(problem.gamma)
        return Solution(state.U, state.V, state.S, [], Status.CONVERGED, 0, F, F, rounds=0)

    records, L_hist = [], []
    total = 0
    F0 = None
    sol = None
    for gamma, eps in rounds:
        sub = replace(problem, gamma=gamma)
        cfg = replace(config, epsilon=eps)
        sol = _solve(sub, cfg, U, S, alternating, metric, on_iteration,
                     iter_offset=total, clock=start)
        if F0 is None:
            F0 = sol.initial_objective
        logger.info("gamma=%.3g eps=%.3g: %d iterations, %s", gamma, eps, sol.iterations, sol.status.value)
        records.extend(sol.records)
        L_hist.extend(sol.lipschitz_u)
        total += sol.iterations
        U, S = sol.U, sol.S
        if config.conservative:
            config = replace(config, lipschitz_u0=sol.lipschitz_u[-1]) if sol.lipschitz_u else config

    return Solution(
        U=sol.U, V=sol.V, S=sol.S, records=records, status=sol.status, iterations=total,
        objective=sol.objective, initial_objective=F0, final_step=sol.final_step,
        rounds=len(rounds), lipschitz_u=L_hist,
    )


def iteration_bound(F0, L, epsilon):
    """``ceil(2 L (F0 - F*) / epsilon^2)`` with ``F* = 0``."""
    return math.ceil(2.0 * L * F0 / epsilon**2)
