import math

import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from regtree.errors import NotApplicable, NotDiscrete, OutOfRange
from regtree.reduced import (Cutoff, EdgePiece, Interface, Sampling, build_reduced_problem,
                             eigenvalues_below, lowest_eigenvalues, oscillation_count, propagators,
                             s_transform, transformed_count, transformed_eigenvalues, truncated_counts)
from regtree.tree import Potential, TreeSpec, branching_function


def _roots(f, grid):
    vals = [f(x) for x in grid]
    return [brentq(f, a, b, xtol=1e-14, rtol=1e-14)
            for a, b, fa, fb in zip(grid, grid[1:], vals, vals[1:]) if fa * fb < 0]


def _shoot_free(lam, branch, T):
    """u(T) for -u'' = lam u with u(0)=0, u'(0)=1 and g u' continuous at integer vertices."""
    s = math.sqrt(lam)
    u, du = 0.0, 1.0
    t = 0.0
    while t < T:
        ell = min(1.0, T - t)
        u, du = u * math.cos(s * ell) + du * math.sin(s * ell) / s, -u * s * math.sin(s * ell) + du * math.cos(s * ell)
        t += ell
        if t < T:
            du /= branch
    return u


def test_interface_propagator():
    p = propagators(1.0, Interface(4))
    assert np.allclose(p.m, np.diag([2.0, 0.5]), atol=0)
    assert p.det == pytest.approx(1.0, abs=1e-15)


def test_edge_propagator_half_period():
    p = propagators(math.pi ** 2, EdgePiece(1.0, 0.0))
    assert np.abs(p.m + np.eye(2)).max() < 1e-12


def test_edge_propagator_hyperbolic_and_free():
    p = propagators(0.0, EdgePiece(1.0, 1.0))
    c, s = math.cosh(1.0), math.sinh(1.0)
    assert np.allclose(p.m, [[c, s], [s, c]], rtol=1e-15)
    assert np.allclose(propagators(2.0, EdgePiece(0.5, 2.0)).m, [[1.0, 0.5], [0.0, 1.0]])


def test_propagator_rejects_bad_segments():
    with pytest.raises(OutOfRange):
        propagators(1.0, EdgePiece(0.0))
    with pytest.raises(OutOfRange):
        propagators(1.0, Interface(1))


def test_unit_edge_count():
    p = build_reduced_problem(TreeSpec.homogeneous(2), 0, None, Cutoff(1.0))
    assert oscillation_count(p, 50.0) == 2
    assert oscillation_count(p, 0.0) == 0
    assert oscillation_count(p, -5.0) == 0


def test_unit_edge_eigenvalues():
    p = build_reduced_problem(TreeSpec.homogeneous(2), 0, None, Cutoff(1.0))
    ev = eigenvalues_below(p, 50.0)
    assert ev == pytest.approx([math.pi ** 2, 4 * math.pi ** 2], rel=1e-10)
    ev = lowest_eigenvalues(p, 20)
    assert ev == pytest.approx([(n * math.pi) ** 2 for n in range(1, 21)], rel=1e-9)


def test_unit_edge_neumann_cut():
    p = build_reduced_problem(TreeSpec.homogeneous(2), 0, None, Cutoff(1.0, "neumann"))
    ev = lowest_eigenvalues(p, 5)
    assert ev == pytest.approx([((n - 0.5) * math.pi) ** 2 for n in range(1, 6)], rel=1e-9)


def test_last_generation_of_truncated_tree_is_unit_interval():
    p = build_reduced_problem(TreeSpec.homogeneous(2), 2, None, Cutoff(3.0))
    assert lowest_eigenvalues(p, 1)[0] == pytest.approx(math.pi ** 2, rel=1e-10)


@pytest.mark.parametrize("branch,T", [(2, 3.0), (3, 2.5)])
def test_truncated_tree_matches_shooting_oracle(branch, T):
    roots = _roots(lambda lam: _shoot_free(lam, branch, T), np.linspace(0.05, 150.0, 6000))
    p = build_reduced_problem(TreeSpec.homogeneous(branch), 0, None, Cutoff(T))
    assert len(eigenvalues_below(p, 150.0)) == len(roots)
    assert lowest_eigenvalues(p, len(roots)) == pytest.approx(roots, rel=1e-9)


def _shoot_linear(lam, T=3.0):
    u, du = 0.0, 1.0
    for n in range(int(T)):
        sol = solve_ivp(lambda t, y: [y[1], (t - lam) * y[0]], (n, n + 1), [u, du],
                        rtol=1e-12, atol=1e-14, method="DOP853")
        u, du = sol.y[:, -1]
        if n + 1 < T:
            du /= 2
    return u


def test_potential_sampling_converges_at_second_order():
    roots = _roots(_shoot_linear, np.linspace(0.5, 25.0, 400))[:2]
    errs = []
    for step in (0.2, 0.1, 0.05):
        p = build_reduced_problem(TreeSpec.homogeneous(2), 0, Potential.power(1.0, 1.0), Cutoff(3.0),
                                  sampling=Sampling(max_phase_step=step))
        ev = lowest_eigenvalues(p, 2, tol=1e-12)
        errs.append(max(abs(a - b) / b for a, b in zip(ev, roots)))
    assert errs[-1] < 5e-5
    for coarse, fine in zip(errs, errs[1:]):
        assert 3.0 < coarse / fine < 5.0


def test_forced_dirichlet_when_total_length_infinite():
    p = build_reduced_problem(TreeSpec.geometric(0.5, 2), 0, None, "neumann")
    assert p.right_bc == "forced_dirichlet_at_R"
    assert p.right == 1.0


def test_neumann_accepted_for_finite_length():
    p = build_reduced_problem(TreeSpec.geometric(0.25, 2), 0, None, "neumann")
    assert p.right_bc == "neumann"


def test_infinite_radius_without_growth_is_not_discrete():
    with pytest.raises(NotDiscrete):
        build_reduced_problem(TreeSpec.homogeneous(2), 0, None)
    with pytest.raises(NotDiscrete):
        build_reduced_problem(TreeSpec.homogeneous(2), 0, Potential.table([0, 1], [0, 5]))
    p = build_reduced_problem(TreeSpec.homogeneous(2), 0, Potential.power(1.0, 2.0))
    assert p.right == math.inf


def test_cutoff_outside_interval():
    with pytest.raises(OutOfRange):
        build_reduced_problem(TreeSpec.homogeneous(2), 2, None, Cutoff(1.5))
    with pytest.raises(OutOfRange):
        build_reduced_problem(TreeSpec.geometric(0.5, 2), 0, None, Cutoff(1.0))
    with pytest.raises(OutOfRange):
        build_reduced_problem(TreeSpec.homogeneous(2), -1, None)


def test_self_similar_counts():
    tree = TreeSpec.geometric(0.5, 2)
    p0 = build_reduced_problem(tree, 0)
    p1 = build_reduced_problem(tree, 1)
    for lam in (3.0, 40.0, 170.0, 900.0, 5000.0):
        assert oscillation_count(p1, lam) == oscillation_count(p0, lam / 4)


def test_self_similar_eigenvalues():
    tree = TreeSpec.geometric(0.5, 2)
    e0 = lowest_eigenvalues(build_reduced_problem(tree, 0), 20)
    e2 = lowest_eigenvalues(build_reduced_problem(tree, 2), 20)
    assert np.allclose(np.array(e2), 16 * np.array(e0), rtol=1e-8, atol=0)


def test_truncation_brackets_are_ordered_and_stabilize():
    p = build_reduced_problem(TreeSpec.geometric(0.5, 2), 0)
    lam = 777.0
    exact = oscillation_count(p, lam)
    lows, highs = [], []
    for K in range(1, 14):
        lo, hi = truncated_counts(p, lam, K)
        assert lo <= hi
        lows.append(lo)
        highs.append(hi)
    assert lows == sorted(lows)
    assert lows[-1] == exact
    # once the tail is short, the Neumann cut is an upper bound and sits within one of the limit
    assert all(exact <= hi <= exact + 1 for hi in highs[4:])


def test_neumann_radius_count_dominates_dirichlet():
    tree = TreeSpec.geometric(0.25, 2)
    pd = build_reduced_problem(tree, 0, None, "dirichlet")
    pn = build_reduced_problem(tree, 0, None, "neumann")
    for lam in np.geomspace(1.0, 1e5, 25):
        assert oscillation_count(pd, lam) <= oscillation_count(pn, lam) <= oscillation_count(pd, lam) + 1


def test_growing_potential_counts_against_harmonic_oscillator():
    # generation 2 of the quadratic tree never branches again after t=4: a sanity bound only
    tree = TreeSpec.homogeneous(2)
    p = build_reduced_problem(tree, 0, Potential.power(1.0, 2.0))
    counts = [oscillation_count(p, lam) for lam in (1.0, 10.0, 100.0, 1000.0)]
    assert counts == sorted(counts)
    assert counts[0] == 0


def test_unit_interval_s_transform():
    st = s_transform(build_reduced_problem(TreeSpec.homogeneous(2), 0, None, Cutoff(1.0)))
    assert st.L == pytest.approx(1.0, rel=1e-15)
    assert np.all(st.W == 1.0)


def test_geometric_transformed_length():
    st = s_transform(build_reduced_problem(TreeSpec.geometric(0.5, 2), 0))
    assert st.L == pytest.approx(2 / 3, rel=1e-10)


def test_geometric_sqrt_w_integral():
    st = s_transform(build_reduced_problem(TreeSpec.geometric(0.25, 2), 0))
    assert float(np.sum(np.sqrt(st.W) * st.ds)) == pytest.approx(1.0, rel=1e-10)


def test_s_transform_mass_identity_against_quadrature():
    tree = TreeSpec.explicit([0, 1, 3], [1, 2, 3])
    st = s_transform(build_reduced_problem(tree, 1, None, Cutoff(8.5)))
    lhs = float(np.sum(st.W * st.ds))
    pts = [tree.t(n) for n in range(2, 4)]
    rhs = quad(lambda t: branching_function(tree, 1, t), 1.0, 8.5, points=pts, limit=200)[0]
    assert lhs == pytest.approx(rhs, rel=1e-10)
    assert np.all(np.diff(st.W) >= 0)
    assert st.L <= 8.5 - 1.0


def test_transformed_spectrum_matches():
    p = build_reduced_problem(TreeSpec.homogeneous(2), 0, None, Cutoff(3.5))
    assert transformed_eigenvalues(p, 10) == pytest.approx(lowest_eigenvalues(p, 10), rel=1e-8)
    assert transformed_count(p, 60.0) == oscillation_count(p, 60.0)


def test_transformed_count_needs_cutoff():
    with pytest.raises(NotApplicable):
        transformed_count(build_reduced_problem(TreeSpec.geometric(0.5, 2), 0), 10.0)
