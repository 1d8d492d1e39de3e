"""Primal best-response / dual projected-gradient dynamics over the L1 ball.

The dual player runs additive gradient steps on nonnegative multiplier
pairs (lambda+, lambda-) projected onto the ball ||lambda||_1 <= C; the
primal player best-responds with a closed-form threshold rule.  The uniform
mixture over all rounds' rules is the returned randomized classifier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from .core import (
    BaseRates,
    Cell,
    CellDistribution,
    FairnessNotion,
    MixtureClassifier,
    ThresholdRule,
    decide_batch,
    pointwise_values,
)
from .metrics import base_rates, positive_probs

__all__ = [
    "DualState",
    "SolverConfig",
    "TrajectoryRecord",
    "SolveResult",
    "BudgetExceededError",
    "iteration_budget",
    "sample_size",
    "best_response",
    "dual_gradient",
    "project_l1",
    "lagrangian_value",
    "run",
    "run_sampled",
]


class BudgetExceededError(RuntimeError):
    """Raised when T * n_cells would exceed the configured work cap."""


@dataclass(frozen=True)
class DualState:
    """Nonnegative multiplier pairs with an L1 budget C."""

    lambda_plus: np.ndarray
    lambda_minus: np.ndarray
    bound_C: float

    def __post_init__(self):
        object.__setattr__(self, "lambda_plus", np.asarray(self.lambda_plus, dtype=float))
        object.__setattr__(self, "lambda_minus", np.asarray(self.lambda_minus, dtype=float))
        if self.bound_C <= 0:
            raise ValueError("bound_C must be positive")
        if np.any(self.lambda_plus < 0) or np.any(self.lambda_minus < 0):
            raise ValueError("dual variables must be nonnegative")

    @property
    def lam(self) -> np.ndarray:
        return self.lambda_plus - self.lambda_minus

    def l1(self) -> float:
        return float(self.lambda_plus.sum() + self.lambda_minus.sum())


@dataclass
class SolverConfig:
    notion: Union[str, FairnessNotion] = FairnessNotion.FP
    gamma: float = 0.05
    C: float = 10.0
    eta: Union[str, float] = "auto"
    T: Union[str, int] = "auto"
    projection_mode: str = "euclidean_l1"
    beta_mode: str = "from_scores"
    record_every: int = 100
    work_cap: float = 5e9
    compute_gap: bool = False

    def __post_init__(self):
        self.notion = FairnessNotion.coerce(self.notion)
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.C <= 0:
            raise ValueError("C must be positive")
        if self.projection_mode not in ("euclidean_l1", "rescale"):
            raise ValueError(f"unknown projection mode {self.projection_mode!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")
        if self.work_cap <= 0:
            raise ValueError("work_cap must be positive")


@dataclass(frozen=True)
class TrajectoryRecord:
    t: int
    err_hat: float
    max_violation_hat: float
    lambda_l1: float
    duality_gap_estimate: Optional[float] = None


@dataclass
class SolveResult:
    mixture: MixtureClassifier
    final_dual: DualState
    trajectory: List[TrajectoryRecord]
    theorem_bounds: dict
    base: BaseRates
    T: int
    eta: float
    estimation_deviations: Optional[np.ndarray] = None


def iteration_budget(C: float, group_count: int) -> int:
    """Round budget T = ceil(C^2 (C^2 + 4|G|)^2 / 4)."""
    if C <= 0 or group_count < 1:
        raise ValueError("C must be positive and group_count >= 1")
    return math.ceil(0.25 * C * C * (C * C + 4.0 * group_count) ** 2)


def sample_size(T: int, group_count: int, epsilon: float, delta: float) -> int:
    """Per-round i.i.d. sample size for epsilon-accurate rate estimates.

    Hoeffding plus a union bound over T rounds and the per-group
    estimates: m = ceil(ln(2 |G| T / delta) / (2 eps^2)).
    """
    if T < 1 or group_count < 1:
        raise ValueError("T and group_count must be positive")
    if not (0 < epsilon <= 1 and 0 < delta <= 1):
        raise ValueError("epsilon and delta must lie in (0, 1]")
    return math.ceil(math.log(2.0 * group_count * T / delta) / (2.0 * epsilon * epsilon))


def best_response(lam, cell: Cell, notion, base: BaseRates,
                  tiebreak_positive: bool = True) -> int:
    """Closed-form pointwise Lagrangian minimizer for one cell."""
    rule = ThresholdRule(tuple(lam), FairnessNotion.coerce(notion), base, tiebreak_positive)
    return rule.decide(cell)


def _rate_terms(notion: FairnessNotion, f: np.ndarray, h: np.ndarray,
                masses: np.ndarray, G: np.ndarray):
    """(rho_g vector, rho_0 aggregate) of the notion's surrogate rate."""
    if notion is FairnessNotion.FP:
        u = masses * (1.0 - f) * h
    elif notion is FairnessNotion.FN:
        u = masses * f * (1.0 - h)
    elif notion is FairnessNotion.ERR:
        u = masses * (f + h * (1.0 - 2.0 * f))
    else:
        u = masses * h
    return G @ u, float(u.sum())


def dual_gradient(h_t, dist: CellDistribution, notion, base: BaseRates,
                  gamma: float, scores_as_f: bool = True):
    """Gradient of the Lagrangian in (lambda+, lambda-) at a fixed classifier.

    grad_plus[g] = rho_g - beta_g * rho_0 - gamma and grad_minus is its
    mirror; for SP the rule-side beta of one makes this the E[h(g-1)] form
    of the statistical-parity Lagrangian.
    """
    notion = FairnessNotion.coerce(notion)
    p = positive_probs(h_t, dist)
    f = dist.scores if scores_as_f else dist.require_labels()
    rho_g, rho0 = _rate_terms(notion, f, p, dist.masses, dist.group_matrix)
    centered = rho_g - base.beta * rho0
    return centered - gamma, -centered - gamma


def _project_euclidean(v: np.ndarray, C: float) -> np.ndarray:
    """Euclidean projection of a nonnegative vector onto {x >= 0, sum x <= C}."""
    total = v.sum()
    if total <= C:
        return v
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, len(u) + 1)
    rho = np.nonzero(u * idx > (css - C))[0][-1]
    theta = (css[rho] - C) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_l1(dual: DualState, mode: str = "euclidean_l1") -> DualState:
    """Bring the concatenated (lambda+, lambda-) vector back into the L1 ball."""
    v = np.concatenate([dual.lambda_plus, dual.lambda_minus])
    if mode == "euclidean_l1":
        w = _project_euclidean(v, dual.bound_C)
    elif mode == "rescale":
        total = v.sum()
        w = v * (dual.bound_C / total) if total > dual.bound_C else v
    else:
        raise ValueError(f"unknown projection mode {mode!r}")
    g = len(dual.lambda_plus)
    return DualState(w[:g], w[g:], dual.bound_C)


def _solver_constraints(notion: FairnessNotion, f, p, masses, G, beta):
    """Per-group signed constraint values in the Lagrangian's own form."""
    rho_g, rho0 = _rate_terms(notion, f, p, masses, G)
    return rho_g - beta * rho0


def lagrangian_value(h, dual: DualState, dist: CellDistribution, notion,
                     base: BaseRates, gamma: float, scores_as_f: bool = True,
                     verify: bool = False) -> float:
    """Lagrangian of the parity-constrained program at (h, lambda).

    With verify=True the definitional form is checked against the
    distributed-out expansion to 1e-10 before returning.
    """
    notion = FairnessNotion.coerce(notion)
    p = positive_probs(h, dist)
    f = dist.scores if scores_as_f else dist.require_labels()
    m = dist.masses
    lam_p, lam_m = dual.lambda_plus, dual.lambda_minus

    objective = float(m @ (f * (1.0 - p) + (1.0 - f) * p))
    cons = _solver_constraints(notion, f, p, m, dist.group_matrix, base.beta)
    penalty = float(lam_p @ (cons - gamma) + lam_m @ (-cons - gamma))
    value = objective + penalty

    if verify:
        lam = lam_p - lam_m
        S = lam @ (dist.group_matrix - base.beta[:, None])
        budget = gamma * float(lam_p.sum() + lam_m.sum())
        if notion is FairnessNotion.FP:
            expanded = float(m @ (p * (1.0 + S) - f * (-(1.0 - p) + p * (1.0 + S))))
        elif notion is FairnessNotion.FN:
            expanded = float(m @ (p + f * (-p + (1.0 - p) * (1.0 + S))))
        elif notion is FairnessNotion.ERR:
            expanded = float(m @ (p * (1.0 + S) + f * (1.0 + S) * (1.0 - 2.0 * p)))
        else:
            expanded = float(m @ (f * (1.0 - 2.0 * p) + p + p * S))
        expanded -= budget
        if abs(expanded - value) > 1e-10:
            raise RuntimeError(
                f"Lagrangian forms disagree: {value!r} vs {expanded!r}")
    return value


def _resolve_schedule(config: SolverConfig, n_groups: int, n_cells: int):
    T = iteration_budget(config.C, n_groups) if config.T == "auto" else int(config.T)
    if T < 1:
        raise ValueError("T must be at least 1")
    if T * n_cells > config.work_cap:
        raise BudgetExceededError(
            f"budget exceeded: T*cells = {T * n_cells:.3g} > work cap "
            f"{config.work_cap:.3g}; lower C or raise work_cap")
    eta = (config.C / math.sqrt(2.0 * n_groups * T)
           if config.eta == "auto" else float(config.eta))
    if eta <= 0:
        raise ValueError("eta must be positive")
    return T, eta


def _theorem_bounds(C: float, epsilon: float = 0.0) -> dict:
    v = 1.0 / C
    return {
        "err_slack": 2.0 / C + 8.0 * epsilon,
        "violation_slack": 1.0 / C + 2.0 / (C * C) + 8.0 * epsilon / C,
        # equilibrium form (1 + 2v)/C at v = 1/C; coincides with the above
        "violation_slack_equilibrium": (1.0 + 2.0 * v) / C + 8.0 * epsilon / C,
    }


def _run_loop(dist: CellDistribution, config: SolverConfig, scores_as_f: bool,
              sampler=None, record_deviation: bool = False) -> SolveResult:
    notion = config.notion
    base = base_rates(dist, notion, config.beta_mode)
    f = dist.scores if scores_as_f else dist.require_labels()
    masses = dist.masses
    G = dist.group_matrix
    n_groups, n_cells = G.shape
    T, eta = _resolve_schedule(config, n_groups, n_cells)

    beta = base.beta
    viol_mult = base.w if notion is FairnessNotion.SP else base.beta
    memb = G - beta[:, None]
    gamma, C = config.gamma, config.C

    lam_p = np.zeros(n_groups)
    lam_m = np.zeros(n_groups)
    lam_hist = np.empty((T, n_groups))
    dec_sum = np.zeros(n_cells)
    sum_lam_p = np.zeros(n_groups)
    sum_lam_m = np.zeros(n_groups)
    trajectory: List[TrajectoryRecord] = []
    deviations = np.empty((T, n_groups)) if record_deviation else None

    for t in range(1, T + 1):
        lam = lam_p - lam_m
        lam_hist[t - 1] = lam
        S = lam @ memb
        h = decide_batch(S, f, notion).astype(float)
        dec_sum += h

        if sampler is None:
            eval_masses = masses
        else:
            eval_masses = sampler(t)
        rho_g, rho0 = _rate_terms(notion, f, h, eval_masses, G)
        if record_deviation:
            pop_rho_g, _ = _rate_terms(notion, f, h, masses, G)
            deviations[t - 1] = np.abs(rho_g - pop_rho_g)
        centered = rho_g - beta * rho0

        if config.compute_gap:
            sum_lam_p += lam_p
            sum_lam_m += lam_m

        lam_p = np.maximum(0.0, lam_p + eta * (centered - gamma))
        lam_m = np.maximum(0.0, lam_m + eta * (-centered - gamma))
        total = lam_p.sum() + lam_m.sum()
        if total > C:
            projected = project_l1(DualState(lam_p, lam_m, C), config.projection_mode)
            lam_p, lam_m = projected.lambda_plus, projected.lambda_minus

        if (t - 1) % config.record_every == 0:
            err_hat = float(eval_masses @ (f + h * (1.0 - 2.0 * f)))
            viol_g = rho_g - viol_mult * rho0
            gap = None
            if config.compute_gap:
                gap = _gap_estimate(
                    dec_sum / t, sum_lam_p / t, sum_lam_m / t, f, masses, G,
                    memb, beta, notion, gamma, C)
            trajectory.append(TrajectoryRecord(
                t=t,
                err_hat=err_hat,
                max_violation_hat=float(np.abs(viol_g).max()),
                lambda_l1=float(lam_p.sum() + lam_m.sum()),
                duality_gap_estimate=gap,
            ))

    mixture = MixtureClassifier(lam_hist, notion, base)
    return SolveResult(
        mixture=mixture,
        final_dual=DualState(lam_p, lam_m, C),
        trajectory=trajectory,
        theorem_bounds=_theorem_bounds(C),
        base=base,
        T=T,
        eta=eta,
        estimation_deviations=deviations,
    )


def _gap_estimate(p_bar, avg_lam_p, avg_lam_m, f, masses, G, memb, beta,
                  notion, gamma, C) -> float:
    """Upper minus lower estimate of the bounded game's value.

    Upper: the running mixture against the best vertex of the dual ball.
    Lower: the dual function at the averaged played dual (best response).
    """
    err_bar = float(masses @ (f + p_bar * (1.0 - 2.0 * f)))
    cons_bar = _solver_constraints(notion, f, p_bar, masses, G, beta)
    upper = err_bar + max(0.0, C * (float(np.abs(cons_bar).max()) - gamma))

    avg_lam = avg_lam_p - avg_lam_m
    S = avg_lam @ memb
    h_br = decide_batch(S, f, notion).astype(float)
    cons_br = _solver_constraints(notion, f, h_br, masses, G, beta)
    err_br = float(masses @ (f + h_br * (1.0 - 2.0 * f)))
    lower = err_br + float(avg_lam_p @ (cons_br - gamma) + avg_lam_m @ (-cons_br - gamma))
    return upper - lower


def run(dist: CellDistribution, config: SolverConfig,
        scores_as_f: bool = True) -> SolveResult:
    """Run the full deterministic dynamics over exact cell expectations.

    With scores_as_f=False the distribution is re-based so that cell scores
    equal the (grid-snapped) label means first; threshold rules always cut
    on the cell score, so the dynamics and the returned mixture agree.
    """
    if not scores_as_f:
        dist = dist.with_scores_from_labels()
    return _run_loop(dist, config, scores_as_f=True)


def run_sampled(population: CellDistribution, sampler_seed: int,
                config: SolverConfig, epsilon: float, delta: float,
                scores_as_f: bool = True,
                record_deviation: bool = False) -> SolveResult:
    """Dynamics with each round's rates estimated from a fresh i.i.d. sample.

    Per-round sample size comes from sample_size(T, |G|, epsilon, delta);
    the theorem slacks widen by the 8*epsilon terms.
    """
    if not (0 < epsilon < 1 and 0 < delta < 1):
        raise ValueError("epsilon and delta must lie in (0, 1)")
    if not scores_as_f:
        population = population.with_scores_from_labels()
        scores_as_f = True
    n_groups, n_cells = population.group_matrix.shape
    T, _ = _resolve_schedule(config, n_groups, n_cells)
    m = sample_size(T, n_groups, epsilon, delta)
    rng = np.random.Generator(np.random.PCG64(sampler_seed))
    masses = population.masses / population.masses.sum()

    def sampler(_t: int) -> np.ndarray:
        counts = rng.multinomial(m, masses)
        return counts / m

    result = _run_loop(population, config, scores_as_f, sampler=sampler,
                       record_deviation=record_deviation)
    result.theorem_bounds = _theorem_bounds(config.C, epsilon)
    return result
