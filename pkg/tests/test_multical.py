import math

import numpy as np
import pytest

from fairpost import (
    Cell,
    CellDistribution,
    CheckFunction,
    FairnessNotion,
    GroupSystem,
    SolverConfig,
    ThresholdRule,
    audit,
    base_rates,
    best_response,
    brier,
    build_cells,
    calibrate,
    d_of_v,
    default_checks,
    run,
    threshold_eval,
)
from fairpost.multical import apply_patches, assignment_from_scores

from conftest import make_dist, rand_lambda


def test_d_of_v_values():
    assert d_of_v("fp", 0.5) == 0.0
    assert d_of_v("sp", 0.5) == 0.0
    assert d_of_v("fp", 2 / 3) == pytest.approx(1.0)
    assert d_of_v("fn", 0.25) == pytest.approx(2.0)
    assert d_of_v("err", 0.25) == pytest.approx(-1.0)


def test_d_of_v_singularities():
    assert d_of_v("fp", 1.0) == math.inf
    assert d_of_v("fn", 0.0) == math.inf
    assert d_of_v("err", 0.5) == math.inf


def _base(dist, notion):
    return base_rates(dist, notion, "from_labels")


def test_threshold_eval_zero_dual_tracks_bayes_rule():
    # at lambda = 0 the check must agree with thresholding the score at 1/2
    dist, _ = make_dist(40, n_cells=6, n_groups=1)
    base = _base(dist, "fp")
    lam = np.zeros(dist.n_groups)
    assert threshold_eval(lam, base, 1, 0.6, "fp") == 1
    assert threshold_eval(lam, base, 1, 0.4, "fp") == 0
    assert threshold_eval(lam, base, 1, 0.5, "fp") == 1  # tie goes positive


def test_threshold_eval_equals_best_response_fp(rng):
    # the identity of the check family with the rule, positive denominators
    for trial in range(50):
        dist, _ = make_dist(500 + trial, n_cells=10, n_groups=2, grid_m=30)
        base = _base(dist, "fp")
        lam = rand_lambda(rng, dist.n_groups, 5.0)
        for cell in dist.cells:
            bits = np.array([(cell.groups >> i) & 1 for i in range(dist.n_groups)])
            S = float(lam @ (bits - base.beta))
            if 2.0 + S <= 0:
                continue
            assert threshold_eval(lam, base, cell.groups, cell.score, "fp") == \
                best_response(lam, cell, "fp", base)


def test_threshold_eval_equals_best_response_fn_and_sp(rng):
    for trial in range(20):
        dist, _ = make_dist(600 + trial, n_cells=10, n_groups=2, grid_m=30)
        lam = rand_lambda(rng, dist.n_groups, 5.0)
        base_fn = _base(dist, "fn")
        base_sp = _base(dist, "sp")
        for cell in dist.cells:
            bits = np.array([(cell.groups >> i) & 1 for i in range(dist.n_groups)])
            if 2.0 + float(lam @ (bits - base_fn.beta)) > 0:
                assert threshold_eval(lam, base_fn, cell.groups, cell.score, "fn") == \
                    best_response(lam, cell, "fn", base_fn)
            assert threshold_eval(lam, base_sp, cell.groups, cell.score, "sp") == \
                best_response(lam, cell, "sp", base_sp)


def test_threshold_eval_monotone_in_v(rng):
    # the acceptance region in v: once the check fires it stays on (FP/FN/SP)
    dist, _ = make_dist(41, n_cells=6, n_groups=2)
    grid = np.linspace(0, 1, 21)
    for notion in ["fp", "fn", "sp"]:
        base = _base(dist, notion)
        for _ in range(20):
            lam = rand_lambda(rng, dist.n_groups, 4.0)
            mask = int(dist.cells[rng.integers(dist.n_cells)].groups)
            vals = [threshold_eval(lam, base, mask, v, notion) for v in grid]
            assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_audit_zero_when_scores_are_label_means():
    dist, _ = make_dist(42, n_cells=12, n_groups=2)
    base = _base(dist, "fp")
    checks = default_checks(dist, base, n_random=16, C=5.0, seed=0)
    assignment = assignment_from_scores(dist, dist.grid_m)
    per_check, max_violation = audit(assignment, checks, dist)
    assert max_violation <= 1e-12


def test_audit_constant_check_calibrated_levels():
    system = GroupSystem(("I",), includes_all_group=True)
    # the assignment pools the first two cells into one level whose
    # conditional mean equals the level value
    dist = CellDistribution(10, system, [
        Cell(0.2, 1, 0.3, 0.2), Cell(0.4, 1, 0.2, 0.45),
        Cell(0.7, 1, 0.5, 0.7),
    ])
    assignment = np.array([0.3, 0.3, 0.7])
    # level 0.3: mean = (0.3*0.2 + 0.2*0.45)/0.5 = 0.3
    _, max_violation = audit(assignment, [CheckFunction("group", 0)], dist)
    assert max_violation <= 1e-12


def test_audit_matches_per_sample_brute_force(rng):
    # build the distribution from raw labeled rows, then recompute every
    # check's violation by direct row-level summation
    rows = []
    for _ in range(3000):
        score = round(int(rng.integers(0, 11)) / 10, 10)
        bits = (1, int(rng.integers(2)), int(rng.integers(2)))
        rows.append((score, bits, int(rng.uniform() < 0.3 + 0.5 * score)))
    dist = build_cells(rows, 10)
    base = _base(dist, "fp")
    checks = default_checks(dist, base, n_random=8, C=5.0, seed=3)
    assignment = assignment_from_scores(dist, dist.grid_m)
    per_check, _ = audit(assignment, checks, dist)

    level_of = {c.key(): a for c, a in zip(dist.cells, assignment)}
    n = len(rows)
    for check, got in zip(checks, per_check):
        sums = {}
        for score, bits, y in rows:
            mask = sum(b << i for i, b in enumerate(bits))
            v = level_of[(score, mask)]
            if check.eval_point(score, mask, v):
                sums[v] = sums.get(v, 0.0) + (v - y) / n
        total = sum(abs(acc) for acc in sums.values())
        assert got == pytest.approx(total, abs=1e-12)


def test_audit_invariant_under_cell_permutation(rng):
    dist, _ = make_dist(43, n_cells=15, n_groups=2, miscalibration=0.3)
    base = _base(dist, "fp")
    checks = default_checks(dist, base, n_random=4, C=3.0, seed=1)
    assignment = assignment_from_scores(dist, dist.grid_m)
    per, _ = audit(assignment, checks, dist)

    order = rng.permutation(dist.n_cells)
    shuffled = CellDistribution(dist.grid_m, dist.groups,
                                [dist.cells[i] for i in order])
    per2, _ = audit(assignment[order], checks, shuffled)
    assert np.allclose(per, per2, atol=1e-15)


def test_brier_values():
    system = GroupSystem(("I",), includes_all_group=True)
    dist = CellDistribution(2, system, [Cell(0.0, 1, 0.5, 0.0), Cell(1.0, 1, 0.5, 1.0)])
    assert brier(np.array([0.0, 1.0]), dist) == 0.0
    assert brier(np.array([0.5, 0.5]), dist) == 0.25

    dist2, _ = make_dist(44, n_cells=8, n_groups=1)
    assert brier(np.full(dist2.n_cells, 0.5), dist2) == pytest.approx(0.25)


def test_brier_matches_monte_carlo(rng):
    dist, _ = make_dist(45, n_cells=9, n_groups=1)
    a = rng.uniform(size=dist.n_cells)
    want = brier(a, dist)
    n = 1_000_000
    cells = rng.choice(dist.n_cells, size=n, p=dist.masses / dist.masses.sum())
    y = (rng.uniform(size=n) < dist.label_means[cells]).astype(float)
    mc = float(np.mean((y - a[cells]) ** 2))
    assert abs(mc - want) <= 3 * 0.5 / math.sqrt(n) + 1e-12


def test_calibrate_identity_when_already_calibrated():
    dist, _ = make_dist(46, n_cells=10, n_groups=2, grid_m=100)
    base = _base(dist, "fp")
    checks = default_checks(dist, base, n_random=8, C=5.0, seed=2)
    result = calibrate(dist.scores, checks, dist, alpha=0.01)
    assert result.rounds == 0
    assert np.array_equal(result.assignment, result.initial_assignment)


def test_calibrate_single_patch_closed_form():
    # one level set, one constant check, f=0.9 against true mean 0.1
    system = GroupSystem(("I",), includes_all_group=True)
    dist = CellDistribution(100, system, [Cell(0.9, 1, 1.0, 0.1)])
    result = calibrate(np.array([0.9]), [CheckFunction("group", 0)], dist, alpha=0.01)
    assert result.rounds == 1
    assert result.assignment[0] == pytest.approx(0.1)
    drop = brier(result.initial_assignment, dist) - result.final_potential
    assert drop == pytest.approx(0.64, abs=1e-12)


def test_calibrate_guarantees_on_miscalibrated_fixture():
    exact, pert = make_dist(9, n_cells=60, n_groups=3, grid_m=20, miscalibration=0.5)
    base = _base(pert, "fp")
    cfg = SolverConfig(notion="fp", gamma=0.01, C=10.0, T=200, record_every=50)
    traj = run(pert, cfg).mixture.lambdas[::20][:10]
    checks = default_checks(pert, base, n_random=16, C=10.0, seed=9,
                            trajectory_lambdas=traj)
    alpha = 0.01
    result = calibrate(pert.scores, checks, pert, alpha)
    assert 0 < result.rounds <= 4 / alpha ** 2

    # replay the patch history and recompute the potential independently
    assign = result.initial_assignment.copy()
    prev = brier(assign, pert)
    for rec in result.history:
        comp = checks[rec.check_index].compile(pert)
        sel = comp.evaluate(assign) & (assign == rec.level)
        assign = assign.copy()
        assign[sel] = rec.v_prime
        pot = brier(assign, pert)
        assert pot <= prev - alpha ** 2 / 4
        assert pot == pytest.approx(rec.potential, abs=1e-15)
        prev = pot
    assert np.array_equal(assign, result.assignment)

    _, max_violation = audit(result.assignment, checks, pert)
    assert max_violation <= math.sqrt(alpha)


def test_calibrate_patch_ties_pick_lowest_level():
    # two offending levels with exactly equal squared-violation mass
    # (0.25 and 0.75 against a 0.5 mean are exact in binary): the patch
    # must repair the lower level first
    system = GroupSystem(("I",), includes_all_group=True)
    dist = CellDistribution(4, system, [
        Cell(0.25, 1, 0.5, 0.5), Cell(0.75, 1, 0.5, 0.5),
    ])
    result = calibrate(dist.scores, [CheckFunction("group", 0)], dist, alpha=0.05)
    assert result.history[0].level == 0.25


def test_threshold_eval_err_ignores_v_away_from_half():
    dist, _ = make_dist(48, n_cells=6, n_groups=2)
    base = _base(dist, "err")
    lam = np.array([0.5, -0.25, 0.1])
    mask = int(dist.cells[0].groups)
    vals = {threshold_eval(lam, base, mask, v, "err")
            for v in (0.0, 0.1, 0.3, 0.7, 0.9, 1.0)}
    assert len(vals) == 1  # constant away from the singular level 1/2


def test_calibrate_alpha_validation():
    dist, _ = make_dist(47, n_cells=5, n_groups=1)
    with pytest.raises(ValueError, match="alpha"):
        calibrate(dist.scores, [], dist, alpha=0.0)


def test_apply_patches_replays_training_assignment():
    _, pert = make_dist(9, n_cells=30, n_groups=2, grid_m=20, miscalibration=0.5)
    base = _base(pert, "fp")
    checks = default_checks(pert, base, n_random=8, C=5.0, seed=4)
    result = calibrate(pert.scores, checks, pert, alpha=0.02)
    replayed = np.array([
        apply_patches(cell.score, cell.groups, result, checks)
        for cell in pert.cells
    ])
    assert np.array_equal(replayed, result.assignment)
