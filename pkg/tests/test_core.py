import math

import numpy as np
import pytest

from fairpost import (
    BaseRates,
    Cell,
    CellDistribution,
    FairnessNotion,
    GroupSystem,
    MixtureClassifier,
    ThresholdRule,
    build_cells,
    positive_prob,
    snap_to_grid,
)
from fairpost.core import mask_from_bits

from conftest import make_dist


def test_snap_to_grid_half_rounds_up():
    assert snap_to_grid(0.37, 10) == 0.4
    assert snap_to_grid(0.05, 10) == 0.1
    assert snap_to_grid(0.0, 10) == 0.0
    assert snap_to_grid(1.0, 10) == 1.0


def test_build_cells_rounds_and_averages_labels():
    dist = build_cells([(0.37, (1, 0), 1), (0.37, (1, 0), 0)], grid_m=10)
    assert dist.n_cells == 1
    cell = dist.cells[0]
    assert cell.score == 0.4
    assert cell.groups == mask_from_bits((1, 0))
    assert cell.mass == 1.0
    assert cell.label_mean == 0.5


def test_build_cells_two_cells_equal_mass():
    dist = build_cells([(0.0, (1,), None), (1.0, (0,), None)], grid_m=1)
    assert dist.n_cells == 2
    assert all(c.mass == 0.5 for c in dist.cells)
    assert dist.label_means is None


def test_build_cells_matches_independent_recount(rng):
    # independent aggregation pass over raw rows, dict-keyed by (score, mask)
    rows = []
    for _ in range(1000):
        score = rng.uniform()
        bits = tuple(int(b) for b in rng.integers(0, 2, size=3))
        rows.append((score, bits, int(rng.uniform() < 0.5)))
    dist = build_cells(rows, grid_m=10)

    recount = {}
    for score, bits, label in rows:
        key = (round(math.floor(score * 10 + 0.5)) / 10, bits)
        recount[key] = recount.get(key, 0) + 1
    assert dist.n_cells == len(recount)
    assert abs(sum(c.mass for c in dist.cells) - 1.0) <= 1e-12
    for cell in dist.cells:
        bits = tuple((cell.groups >> i) & 1 for i in range(3))
        assert cell.mass == recount[(cell.score, bits)] / 1000


def test_build_cells_order_invariant(rng):
    rows = [(rng.uniform(), (int(rng.integers(2)),), None) for _ in range(200)]
    a = build_cells(rows, 20)
    b = build_cells(list(reversed(rows)), 20)
    assert [(c.score, c.groups, c.mass) for c in a.cells] == \
           [(c.score, c.groups, c.mass) for c in b.cells]


def test_build_cells_errors():
    with pytest.raises(ValueError, match="empty dataset"):
        build_cells([], 10)
    with pytest.raises(ValueError, match="inconsistent"):
        build_cells([(0.2, (1, 0), None), (0.3, (1,), None)], 10)
    with pytest.raises(ValueError, match="labels"):
        build_cells([(0.2, (1,), 1), (0.3, (1,), None)], 10)


def test_cell_distribution_invariants():
    system = GroupSystem(("I",), includes_all_group=True)
    with pytest.raises(ValueError, match="sum"):
        CellDistribution(10, system, [Cell(0.5, 1, 0.7)])
    with pytest.raises(ValueError, match="duplicate"):
        CellDistribution(10, system, [Cell(0.5, 1, 0.5), Cell(0.5, 1, 0.5)])
    with pytest.raises(ValueError, match="grid"):
        CellDistribution(10, system, [Cell(0.55, 1, 1.0)])


def _fp_base(n_groups):
    return BaseRates(FairnessNotion.FP, np.full(n_groups, 0.5), np.full(n_groups, 0.5))


def test_positive_prob_counts_rules():
    base = _fp_base(1)
    # lambda values picked so exactly three of four rules fire on f=0.55
    lams = [[0.0], [0.0], [0.0], [5.0]]
    mix = MixtureClassifier(np.array(lams), FairnessNotion.FP, base)
    cell = Cell(0.55, 1, 1.0)
    decisions = [mix.rule(i).decide(cell) for i in range(4)]
    assert sum(decisions) == 3
    assert positive_prob(mix, cell) == 0.75


def test_positive_prob_identical_rules_is_binary():
    base = _fp_base(1)
    mix = MixtureClassifier(np.zeros((5, 1)), FairnessNotion.FP, base)
    for score in (0.2, 0.5, 0.8):
        assert positive_prob(mix, Cell(score, 1, 1.0)) in (0.0, 1.0)


def test_positive_prob_matches_per_rule_enumeration(rng):
    dist, _ = make_dist(21, n_cells=12, n_groups=2)
    base = _fp_base(dist.n_groups)
    lams = rng.standard_normal((40, dist.n_groups))
    mix = MixtureClassifier(lams, FairnessNotion.FP, base)
    p = mix.positive_prob_vector(dist)
    for j, cell in enumerate(dist.cells):
        manual = sum(mix.rule(i).decide(cell) for i in range(len(mix))) / len(mix)
        assert p[j] == manual


def test_positive_prob_affine_in_concatenation(rng):
    dist, _ = make_dist(22, n_cells=6, n_groups=1)
    base = _fp_base(dist.n_groups)
    lam1 = rng.standard_normal((3, dist.n_groups))
    lam2 = rng.standard_normal((7, dist.n_groups))
    m1 = MixtureClassifier(lam1, FairnessNotion.FP, base)
    m2 = MixtureClassifier(lam2, FairnessNotion.FP, base)
    both = MixtureClassifier(np.vstack([lam1, lam2]), FairnessNotion.FP, base)
    for cell in dist.cells:
        p1, p2 = m1.positive_prob(cell), m2.positive_prob(cell)
        expect = (3 * p1 + 7 * p2) / 10
        assert abs(both.positive_prob(cell) - expect) <= 1e-15


def test_rule_is_function_of_score_and_mask(rng):
    base = _fp_base(2)
    rule = ThresholdRule((0.8, -0.3), FairnessNotion.FP, base)
    c1 = Cell(0.6, 3, 0.25, label_mean=0.1)
    c2 = Cell(0.6, 3, 0.75, label_mean=0.9)
    assert rule.decide(c1) == rule.decide(c2)


def test_group_system_validation():
    with pytest.raises(ValueError, match="unique"):
        GroupSystem(("a", "a"))
    system = GroupSystem(("I", "g"), includes_all_group=True)
    with pytest.raises(ValueError, match="covers"):
        CellDistribution(2, system, [Cell(0.5, 1, 0.5), Cell(0.0, 2, 0.5)])
