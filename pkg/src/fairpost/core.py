"""Cell-aggregated distributions, group systems, and randomized threshold classifiers.

Every quantity the solver and the metrics need depends on a point x only
through its score f(x) and its group-membership vector, so all distributions
are aggregated into (score, group-mask) cells.  Cell objects are immutable
after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence, Union

import numpy as np

__all__ = [
    "FairnessNotion",
    "GroupSystem",
    "Cell",
    "CellDistribution",
    "BaseRates",
    "ThresholdRule",
    "MixtureClassifier",
    "build_cells",
    "positive_prob",
    "snap_to_grid",
    "mask_from_bits",
    "bits_from_mask",
    "pointwise_values",
    "decide_batch",
]

MASS_TOL = 1e-9


class FairnessNotion(str, Enum):
    """Which group rate the parity constraint equalizes."""

    FP = "fp"    # false positive rate
    FN = "fn"    # false negative rate
    ERR = "err"  # raw error rate
    SP = "sp"    # positive classification rate (statistical parity)

    @classmethod
    def coerce(cls, value: Union[str, "FairnessNotion"]) -> "FairnessNotion":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


def snap_to_grid(x: float, m: int) -> float:
    """Round x in [0,1] to the nearest grid point k/m; half values round up."""
    k = math.floor(x * m + 0.5)
    k = min(max(k, 0), m)
    return k / m


def mask_from_bits(bits: Sequence[int]) -> int:
    """Pack a 0/1 membership vector (group index 0 first) into an int mask."""
    mask = 0
    for i, b in enumerate(bits):
        if b not in (0, 1):
            raise ValueError(f"group indicator must be 0 or 1, got {b!r}")
        if b:
            mask |= 1 << i
    return mask


def bits_from_mask(mask: int, count: int) -> tuple:
    return tuple((mask >> i) & 1 for i in range(count))


@dataclass(frozen=True)
class GroupSystem:
    """Ordered collection of group indicators, optionally containing the
    all-ones group I."""

    names: tuple
    includes_all_group: bool = False

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(set(names)) != len(names):
            raise ValueError("group names must be unique")
        if not names:
            raise ValueError("at least one group is required")

    @property
    def count(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class Cell:
    """One (score, group-mask) atom of probability mass.

    ``groups`` is an unsigned bitmask, bit i set iff the cell belongs to
    group i.  Python ints are unbounded, so systems with more than 64
    groups need no special casing.
    """

    score: float
    groups: int
    mass: float
    label_mean: Optional[float] = None

    def __post_init__(self):
        if self.mass < 0:
            raise ValueError("cell mass must be nonnegative")
        if self.label_mean is not None and not 0.0 <= self.label_mean <= 1.0:
            raise ValueError("label_mean must lie in [0, 1]")

    def key(self):
        return (self.score, self.groups)

    def in_group(self, g: int) -> bool:
        return bool((self.groups >> g) & 1)


class CellDistribution:
    """A probability distribution over (score, group-mask) cells.

    Scores live on the grid {0, 1/m, ..., 1}; cell keys are unique and
    masses sum to one.  Arrays derived from the cells (scores, masses,
    group membership matrix) are precomputed for vectorized consumers.
    """

    def __init__(self, grid_m: int, groups: GroupSystem, cells: Sequence[Cell]):
        if grid_m < 1:
            raise ValueError("grid_m must be a positive integer")
        cells = tuple(cells)
        if not cells:
            raise ValueError("empty dataset")
        keys = [c.key() for c in cells]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (score, groups) cell keys")
        total = math.fsum(c.mass for c in cells)
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"cell masses sum to {total!r}, expected 1")
        for c in cells:
            if abs(c.score - snap_to_grid(c.score, grid_m)) > 1e-12:
                raise ValueError(f"score {c.score!r} is not on the 1/{grid_m} grid")
        self.grid_m = grid_m
        self.groups = groups
        self.cells = cells

        self.scores = np.array([c.score for c in cells], dtype=float)
        self.masses = np.array([c.mass for c in cells], dtype=float)
        if all(c.label_mean is not None for c in cells):
            self.label_means = np.array([c.label_mean for c in cells], dtype=float)
        else:
            self.label_means = None
        g = groups.count
        self.group_matrix = np.zeros((g, len(cells)), dtype=float)
        for j, c in enumerate(cells):
            for i in range(g):
                if (c.groups >> i) & 1:
                    self.group_matrix[i, j] = 1.0
        if groups.includes_all_group and not np.any(self.group_matrix.min(axis=1) == 1.0):
            raise ValueError("includes_all_group set but no group covers every cell")

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_groups(self) -> int:
        return self.groups.count

    def has_labels(self) -> bool:
        return self.label_means is not None

    def require_labels(self) -> np.ndarray:
        if self.label_means is None:
            raise ValueError("operation requires label_mean on every cell")
        return self.label_means

    def mask_array(self) -> np.ndarray:
        return np.array([c.groups for c in self.cells], dtype=object)

    def with_scores_from_labels(self) -> "CellDistribution":
        """Replace every cell score by its label_mean snapped to the grid.

        Cells whose new keys collide are merged mass-weightedly.
        """
        q = self.require_labels()
        rows = {}
        for c, qi in zip(self.cells, q):
            key = (snap_to_grid(float(qi), self.grid_m), c.groups)
            mass, wq = rows.get(key, (0.0, 0.0))
            rows[key] = (mass + c.mass, wq + c.mass * qi)
        cells = [
            Cell(score=s, groups=g, mass=mass, label_mean=(wq / mass if mass > 0 else 0.0))
            for (s, g), (mass, wq) in sorted(rows.items())
        ]
        return CellDistribution(self.grid_m, self.groups, cells)


@dataclass(frozen=True)
class BaseRates:
    """Per-group constants entering the threshold rules and constraints.

    ``beta`` is the multiplier inside the rule's group sum (conditional
    group frequency for FP/FN, marginal group frequency for ERR, the
    constant one for SP).  ``w`` is the reporting weight of the parity
    constraint.
    """

    notion: FairnessNotion
    beta: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))
        if np.any(self.beta < -1e-12) or np.any(self.beta > 1 + 1e-12):
            raise ValueError("beta entries must lie in [0, 1]")
        if np.any(self.w < -1e-12) or np.any(self.w > 1 + 1e-12):
            raise ValueError("w entries must lie in [0, 1]")


def pointwise_values(S, f, notion: FairnessNotion):
    """Per-point Lagrangian contribution at decisions 0 and 1.

    S is the group-weighted sum sum_g lambda_g * (g(x) - beta_g) (with the
    notion's beta).  Returns (value_at_0, value_at_1); both are arrays when
    the inputs are arrays.
    """
    S = np.asarray(S, dtype=float)
    f = np.asarray(f, dtype=float)
    if notion is FairnessNotion.FP:
        return f + 0.0 * S, (1.0 + S) * (1.0 - f)
    if notion is FairnessNotion.FN:
        return f * (1.0 + S), (1.0 - f) + 0.0 * S
    if notion is FairnessNotion.ERR:
        return f * (1.0 + S), (1.0 + S) * (1.0 - f)
    if notion is FairnessNotion.SP:
        return f + 0.0 * S, (1.0 - f) + S
    raise ValueError(f"unknown notion {notion!r}")


def decide_batch(S, f, notion: FairnessNotion, tiebreak_positive: bool = True):
    """Vectorized closed-form best response: argmin of the pointwise values.

    Exact value ties go to 1 (0 with tiebreak_positive=False), which
    reproduces the per-sign tie cases of the four gradient-descent
    algorithm listings, including the zero-denominator rows.
    """
    v0, v1 = pointwise_values(S, f, notion)
    if tiebreak_positive:
        return v1 <= v0
    return v1 < v0


@dataclass(frozen=True)
class ThresholdRule:
    """Deterministic classifier thresholding the score at a group-dependent value."""

    lam: tuple
    notion: FairnessNotion
    base: BaseRates
    tiebreak_positive: bool = True

    def __post_init__(self):
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))
        object.__setattr__(self, "notion", FairnessNotion.coerce(self.notion))
        if len(self.lam) != len(self.base.beta):
            raise ValueError("lambda length must match group count")

    def group_sum(self, mask: int) -> float:
        bits = bits_from_mask(mask, len(self.lam))
        return float(
            sum(l * (b - bta) for l, b, bta in zip(self.lam, bits, self.base.beta))
        )

    def decide(self, cell_or_score, mask: Optional[int] = None) -> int:
        """Decision in {0,1} for a Cell, or for an explicit (score, mask) pair."""
        if mask is None:
            score, mask = cell_or_score.score, cell_or_score.groups
        else:
            score = float(cell_or_score)
        S = self.group_sum(mask)
        return int(decide_batch(np.array([S]), np.array([score]), self.notion,
                                self.tiebreak_positive)[0])

    def decisions(self, dist: CellDistribution) -> np.ndarray:
        lam = np.asarray(self.lam, dtype=float)
        S = lam @ (dist.group_matrix - self.base.beta[:, None])
        return decide_batch(S, dist.scores, self.notion, self.tiebreak_positive).astype(float)


class MixtureClassifier:
    """Uniform mixture over T threshold rules (the randomized classifier).

    The rules share one (notion, base) pair; only their dual snapshots
    differ, so the mixture is stored as a (T, n_groups) array of lambdas.
    """

    def __init__(self, lambdas, notion: FairnessNotion, base: BaseRates,
                 tiebreak_positive: bool = True):
        lambdas = np.asarray(lambdas, dtype=float)
        if lambdas.ndim != 2:
            raise ValueError("lambdas must be a (T, n_groups) array")
        if lambdas.shape[0] == 0:
            raise ValueError("mixture must contain at least one rule")
        self.lambdas = lambdas
        self.notion = FairnessNotion.coerce(notion)
        self.base = base
        self.tiebreak_positive = tiebreak_positive

    def __len__(self) -> int:
        return self.lambdas.shape[0]

    def rule(self, i: int) -> ThresholdRule:
        return ThresholdRule(tuple(self.lambdas[i]), self.notion, self.base,
                             self.tiebreak_positive)

    @property
    def rules(self) -> list:
        return [self.rule(i) for i in range(len(self))]

    def _decision_matrix(self, scores: np.ndarray, masks: Sequence[int]) -> np.ndarray:
        g = self.lambdas.shape[1]
        memb = np.array([bits_from_mask(m, g) for m in masks], dtype=float).T
        S = self.lambdas @ (memb - self.base.beta[:, None])  # (T, n)
        return decide_batch(S, np.asarray(scores, dtype=float)[None, :], self.notion,
                            self.tiebreak_positive)

    def positive_prob(self, cell_or_score, mask: Optional[int] = None) -> float:
        """Fraction of the constituent rules classifying the point as 1."""
        if mask is None:
            score, mask = cell_or_score.score, cell_or_score.groups
        else:
            score = float(cell_or_score)
        dec = self._decision_matrix(np.array([score]), [mask])
        return float(dec.mean(axis=0)[0])

    def positive_prob_points(self, scores, masks) -> np.ndarray:
        """Positive probabilities for a batch of (score, mask) points."""
        return self._decision_matrix(np.asarray(scores, dtype=float), list(masks)
                                     ).mean(axis=0)

    def positive_prob_vector(self, dist: CellDistribution, chunk: int = 65536) -> np.ndarray:
        """Per-cell positive probability over a whole distribution."""
        memb = dist.group_matrix - self.base.beta[:, None]
        counts = np.zeros(dist.n_cells, dtype=float)
        T = len(self)
        for start in range(0, T, chunk):
            lam = self.lambdas[start:start + chunk]
            S = lam @ memb
            dec = decide_batch(S, dist.scores[None, :], self.notion, self.tiebreak_positive)
            counts += dec.sum(axis=0)
        return counts / T


def positive_prob(h: MixtureClassifier, cell: Cell) -> float:
    """Probability that the randomized classifier h labels the cell 1."""
    return h.positive_prob(cell)


def build_cells(rows: Iterable, grid_m: int,
                group_names: Optional[Sequence[str]] = None) -> CellDistribution:
    """Aggregate raw (score, group bits, optional label) rows into cells.

    Scores are snapped to the nearest 1/grid_m grid point (half up), masses
    are empirical frequencies, and label_mean is the within-cell mean label
    when every row carries one.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("empty dataset")
    if grid_m < 1:
        raise ValueError("grid_m must be a positive integer")

    width = None
    agg = {}
    n_labels = 0
    for idx, row in enumerate(rows):
        score, bits, label = row
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"row {idx}: score {score!r} outside [0, 1]")
        bits = tuple(bits)
        if width is None:
            width = len(bits)
        elif len(bits) != width:
            raise ValueError(f"row {idx}: inconsistent group vector length")
        key = (snap_to_grid(float(score), grid_m), mask_from_bits(bits))
        cnt, lab_sum, lab_cnt = agg.get(key, (0, 0.0, 0))
        if label is not None:
            if label not in (0, 1):
                raise ValueError(f"row {idx}: label must be 0 or 1")
            lab_sum += label
            lab_cnt += 1
            n_labels += 1
        agg[key] = (cnt + 1, lab_sum, lab_cnt)

    if 0 < n_labels < len(rows):
        raise ValueError("labels must be present on all rows or none")

    n = len(rows)
    cells = []
    for (score, mask), (cnt, lab_sum, lab_cnt) in sorted(agg.items()):
        label_mean = (lab_sum / lab_cnt) if lab_cnt else None
        cells.append(Cell(score=score, groups=mask, mass=cnt / n, label_mean=label_mean))

    if group_names is None:
        group_names = tuple(f"g{i}" for i in range(width))
    all_ones = [
        i for i in range(width)
        if all((c.groups >> i) & 1 for c in cells)
    ]
    system = GroupSystem(tuple(group_names), includes_all_group=len(all_ones) == 1)
    return CellDistribution(grid_m, system, cells)
