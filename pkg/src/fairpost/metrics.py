"""Error rates, group rates, base-rate constants, and parity constraint values.

All expectations are exact mass-weighted sums over cells; nothing here
samples.  Classifiers are accepted as threshold rules, mixtures, or raw
per-cell positive-probability arrays, since every quantity is linear in the
positive probability.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import (
    BaseRates,
    CellDistribution,
    FairnessNotion,
    MixtureClassifier,
    ThresholdRule,
)

__all__ = [
    "RateReport",
    "base_rates",
    "positive_probs",
    "surrogate_group_rate",
    "surrogate_error",
    "constraint_lhs",
    "constraint_vector",
    "true_rates",
]

ClassifierLike = Union[ThresholdRule, MixtureClassifier, np.ndarray, list]


def positive_probs(h: ClassifierLike, dist: CellDistribution) -> np.ndarray:
    """Normalize a classifier to its per-cell positive probability array."""
    if isinstance(h, ThresholdRule):
        return h.decisions(dist)
    if isinstance(h, MixtureClassifier):
        return h.positive_prob_vector(dist)
    p = np.asarray(h, dtype=float)
    if p.shape != (dist.n_cells,):
        raise ValueError("positive-probability array has wrong shape")
    if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
        raise ValueError("positive probabilities must lie in [0, 1]")
    return p


def _f_array(dist: CellDistribution, scores_as_f: bool) -> np.ndarray:
    return dist.scores if scores_as_f else dist.require_labels()


def base_rates(dist: CellDistribution, notion, mode: str = "from_scores") -> BaseRates:
    """Per-group beta and w constants for a fairness notion.

    mode="from_scores" estimates label marginals from the scores (the
    unlabeled-data path); mode="from_labels" uses label_mean.
    """
    notion = FairnessNotion.coerce(notion)
    if mode not in ("from_scores", "from_labels"):
        raise ValueError(f"unknown mode {mode!r}")
    q = dist.scores if mode == "from_scores" else dist.require_labels()
    m = dist.masses
    G = dist.group_matrix
    if notion is FairnessNotion.FP:
        denom = float(m @ (1.0 - q))
        if denom <= 0.0:
            raise ValueError("degenerate label marginal: Pr[y=0] = 0")
        w = G @ (m * (1.0 - q))
        beta = w / denom
    elif notion is FairnessNotion.FN:
        denom = float(m @ q)
        if denom <= 0.0:
            raise ValueError("degenerate label marginal: Pr[y=1] = 0")
        w = G @ (m * q)
        beta = w / denom
    elif notion is FairnessNotion.ERR:
        w = G @ m
        beta = w.copy()
    else:  # SP: the rule consumes the constant 1; w is the group mass
        w = G @ m
        beta = np.ones(dist.n_groups)
    beta = np.clip(beta, 0.0, 1.0)
    return BaseRates(notion=notion, beta=beta, w=w)


def surrogate_group_rate(h: ClassifierLike, g: Optional[int], dist: CellDistribution,
                         scores_as_f: bool = True, notion=FairnessNotion.FP) -> float:
    """Surrogate rate E[loss-part * g(x) * f-part] for one group.

    g=None drops the group factor and yields the aggregate the constraint
    compares against.
    """
    notion = FairnessNotion.coerce(notion)
    p = positive_probs(h, dist)
    f = _f_array(dist, scores_as_f)
    m = dist.masses
    gvec = np.ones(dist.n_cells) if g is None else dist.group_matrix[g]
    if notion is FairnessNotion.FP:
        integrand = p * (1.0 - f)
    elif notion is FairnessNotion.FN:
        integrand = (1.0 - p) * f
    elif notion is FairnessNotion.ERR:
        integrand = (1.0 - p) * f + p * (1.0 - f)
    else:
        integrand = p
    return float(m @ (gvec * integrand))


def surrogate_error(h: ClassifierLike, dist: CellDistribution,
                    scores_as_f: bool = True) -> float:
    """Score-weighted misclassification rate E[f(1-p) + (1-f)p]."""
    p = positive_probs(h, dist)
    f = _f_array(dist, scores_as_f)
    return float(dist.masses @ (f * (1.0 - p) + (1.0 - f) * p))


def _constraint_multiplier(base: BaseRates) -> np.ndarray:
    # SP reports against the group-mass weight; the other notions compare
    # against the same beta the threshold rule consumes.
    if base.notion is FairnessNotion.SP:
        return base.w
    return base.beta


def constraint_vector(h: ClassifierLike, dist: CellDistribution, notion,
                      base: BaseRates, scores_as_f: bool = True) -> np.ndarray:
    """Signed constraint left-hand sides for every group at once."""
    notion = FairnessNotion.coerce(notion)
    if base.notion is not notion:
        raise ValueError("base rates were computed for a different notion")
    p = positive_probs(h, dist)
    f = _f_array(dist, scores_as_f)
    m = dist.masses
    if notion is FairnessNotion.FP:
        integrand = p * (1.0 - f)
    elif notion is FairnessNotion.FN:
        integrand = (1.0 - p) * f
    elif notion is FairnessNotion.ERR:
        integrand = (1.0 - p) * f + p * (1.0 - f)
    else:
        integrand = p
    per_group = dist.group_matrix @ (m * integrand)
    aggregate = float(m @ integrand)
    return per_group - _constraint_multiplier(base) * aggregate


def constraint_lhs(h: ClassifierLike, g: int, dist: CellDistribution, notion,
                   base: BaseRates, scores_as_f: bool = True) -> float:
    """Signed constraint value for group g; |value| <= gamma means satisfied."""
    return float(constraint_vector(h, dist, notion, base, scores_as_f)[g])


@dataclass(frozen=True)
class RateReport:
    """True error and per-group parity violations of a classifier."""

    notion: FairnessNotion
    err: float
    rho_overall: float
    rho_by_group: np.ndarray
    violation_by_group: np.ndarray
    max_violation: float
    degenerate_groups: tuple = ()


def true_rates(h: ClassifierLike, dist: CellDistribution, notion) -> RateReport:
    """Exact rates against the conditional label means.

    Groups with zero conditioning mass report rate 0 and violation 0; the
    w_g factor makes the violation vanish there anyway.
    """
    notion = FairnessNotion.coerce(notion)
    q = dist.require_labels()
    p = positive_probs(h, dist)
    m = dist.masses
    G = dist.group_matrix

    err = float(m @ (q * (1.0 - p) + (1.0 - q) * p))
    if notion is FairnessNotion.FP:
        cond = m * (1.0 - q)
        stat = p
    elif notion is FairnessNotion.FN:
        cond = m * q
        stat = 1.0 - p
    elif notion is FairnessNotion.ERR:
        cond = m
        stat = q * (1.0 - p) + (1.0 - q) * p
    else:
        cond = m
        stat = p

    w = G @ cond
    num = G @ (cond * stat)
    total = float(np.sum(cond))
    rho_overall = float(np.sum(cond * stat) / total) if total > 0 else 0.0

    degenerate = tuple(int(g) for g in np.flatnonzero(w <= 0.0))
    rho = np.zeros(dist.n_groups)
    nonzero = w > 0.0
    rho[nonzero] = num[nonzero] / w[nonzero]
    violation = w * np.abs(rho - rho_overall)
    violation[~nonzero] = 0.0
    return RateReport(
        notion=notion,
        err=err,
        rho_overall=rho_overall,
        rho_by_group=rho,
        violation_by_group=violation,
        max_violation=float(violation.max()),
        degenerate_groups=degenerate,
    )
