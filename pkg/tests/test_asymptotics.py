import math

import numpy as np
import pytest

from regtree.asymptotics import (band_angle, band_structure, discriminant, discriminant_closed_form,
                                 growing_diagnostics, growing_potential_check, hardy_functional,
                                 j_integral, log_weyl_check, renewal_profile, weyl_component_ratio,
                                 weyl_total_check)
from regtree.assembly import counting_function
from regtree.errors import NotApplicable
from regtree.reduced import Cutoff, build_reduced_problem
from regtree.tree import Potential, TreeSpec


def test_unit_interval_component_ratio():
    p = build_reduced_problem(TreeSpec.homogeneous(2), 0, None, Cutoff(1.0))
    for lam in (50.0, 1234.5, 1e5):
        expected = math.pi * math.floor(math.sqrt(lam) / math.pi) / math.sqrt(lam)
        assert weyl_component_ratio(p, lam) == pytest.approx(expected, rel=1e-14)


def test_component_ratios_trend_to_remaining_length():
    tree = TreeSpec.geometric(0.25, 2)
    for k in range(4):
        p = build_reduced_problem(tree, k)
        target = 0.25 ** k
        errs = [abs(weyl_component_ratio(p, lam) - target) for lam in (1e4, 1e5, 1e6)]
        assert errs[-1] < 0.05 * target + 2 * math.pi / 1e3
        assert errs[-1] <= errs[0]


def test_weyl_targets():
    tree = TreeSpec.geometric(0.25, 2)
    full = weyl_total_check(tree, None, [1e3, 1e4], "full")
    assert full.target == pytest.approx(1.5)
    assert full.to_csv().splitlines()[0] == "lambda,ratio,target"
    tilde = weyl_total_check(tree, None, [1e3], "tilde")
    assert tilde.target == pytest.approx(4 / 3)
    assert abs(full.ratios[1] - 1.5) < abs(full.ratios[0] - 1.5)


def test_weyl_not_applicable_for_infinite_length():
    with pytest.raises(NotApplicable):
        weyl_total_check(TreeSpec.geometric(0.5, 2), None, [100.0], "full")
    with pytest.raises(NotApplicable):
        weyl_component_ratio(build_reduced_problem(TreeSpec.homogeneous(2), 0, Potential.power(1, 2)), 10.0)


def test_band_angle_b2():
    assert band_angle(2) == pytest.approx(math.acos(2 * math.sqrt(2) / 3), abs=1e-15)
    assert band_angle(2) == pytest.approx(0.3398369, abs=1e-7)


def test_first_band_and_gap_b2():
    bs = band_structure(2, 200.0)
    lo, hi = bs.bands[0]
    assert lo == pytest.approx(0.115489, abs=1e-6)
    assert hi == pytest.approx(7.849836, abs=1e-6)
    assert bs.bands[1][0] == pytest.approx(12.1203, abs=1e-4)
    assert bs.in_gap(math.pi ** 2)
    assert bs.to_csv().splitlines()[0] == "l,lower,upper"


def test_discriminant_value_in_band():
    d = discriminant(2, 1.0)
    assert d == pytest.approx(math.cos(1.0) / math.cos(band_angle(2)), rel=1e-12)
    assert d == pytest.approx(0.57307, abs=1e-5)
    assert abs(d) <= 1


@pytest.mark.parametrize("b", [2, 3, 5])
def test_band_edges_recovered(b):
    bs = band_structure(b, (5 * math.pi) ** 2)
    flat = [e for band in bs.bands[:5] for e in band]
    assert len(bs.recovered_edges) >= len(flat)
    assert np.max(np.abs(np.array(bs.recovered_edges[:len(flat)]) - flat)) < 1e-10


@pytest.mark.parametrize("b", [2, 3, 5])
def test_points_sit_in_gaps(b):
    bs = band_structure(b, 400.0)
    for lam in bs.point_eigenvalues:
        assert abs(discriminant_closed_form(b, lam)) == pytest.approx((math.sqrt(b) + 1 / math.sqrt(b)) / 2)
        assert abs(discriminant(b, lam)) > 1
        assert bs.in_gap(lam)


def test_hardy_homogeneous():
    res = hardy_functional(TreeSpec.homogeneous(2))
    assert res.verdict == "finite"
    assert 2.2 <= res.sup <= 2.25
    late = [s for n, s in res.history if n >= 32]
    assert max(late) - min(late) < 1e-6
    # positive bottom of the spectrum agrees with a finite Hardy constant
    assert band_structure(2, 1.0).bands[0][0] > 0


def test_hardy_divergent_tree():
    tree = TreeSpec.explicit([0, 1], [1, 2], tail="exponential", r=2)
    assert hardy_functional(tree).verdict == "divergent"


def test_hardy_needs_infinite_radius():
    with pytest.raises(NotApplicable):
        hardy_functional(TreeSpec.geometric(0.5, 2))


def test_renewal_constants():
    rp = renewal_profile(0.5, 3, math.log(1e3), math.log(1e4), bins=16)
    assert rp.beta == pytest.approx(math.log2(3), rel=1e-14)
    assert rp.eta == pytest.approx(2 * math.log(2), rel=1e-14)
    assert rp.to_csv().splitlines()[0] == "mu,phi,folded_bin,psi_estimate"


def test_renewal_matches_assembled_counts():
    rp = renewal_profile(0.5, 3, math.log(500.0), math.log(2000.0), bins=8)
    tree = TreeSpec.geometric(0.5, 3)
    for mu, phi in list(zip(rp.mu, rp.phi))[::3]:
        lam = math.exp(mu)
        assert phi * lam ** (rp.beta / 2) == pytest.approx(counting_function(tree, None, lam), rel=1e-12)


def test_renewal_needs_bq_above_one():
    with pytest.raises(NotApplicable):
        renewal_profile(0.5, 2, 1.0, 5.0)


def test_log_weyl_target_and_zero():
    tab = log_weyl_check(2, [2.0, 1e3])
    assert tab.target == pytest.approx(0.3606738, abs=1e-7)
    assert tab.ratios[0] == 0.0


def test_j_integral_quarter_circle():
    assert j_integral(Potential.power(1.0, 2.0), 0.0, 4.0) == pytest.approx(math.pi, abs=1e-9)
    assert j_integral(Potential.power(1.0, 2.0), 3.0, 4.0) == 0.0


def test_j_integral_linear_closed_form():
    # ∫_a^λ (λ - t)^{1/2} dt = (2/3)(λ - a)^{3/2}
    assert j_integral(Potential.power(1.0, 1.0), 2.0, 11.0) == pytest.approx(18.0, rel=1e-12)


def test_growing_diagnostics_trend_rule():
    good = growing_diagnostics(TreeSpec.power(2, 2), Potential.power(1.0, 1.0), 10.0)
    assert good["psi_trend_decreasing"]
    bad = growing_diagnostics(TreeSpec.power(0.5, 2), Potential.power(1.0, 0.5), 10.0)
    assert not bad["psi_trend_decreasing"]


def test_growing_check_small_lambda():
    rep = growing_potential_check(TreeSpec.power(2, 2), Potential.power(1.0, 1.0), [100.0])
    row = rep.rows[0]
    assert row.ratio == pytest.approx(math.pi * row.N_tilde / row.J_sum)
    assert abs(row.ratio - 1) < 0.3
    assert rep.to_csv().splitlines()[0] == "lambda,J_sum,N_tilde,ratio"


def test_growing_check_errors():
    with pytest.raises(NotApplicable):
        growing_potential_check(TreeSpec.geometric(0.5, 2), Potential.power(1.0, 1.0), [10.0])
    with pytest.raises(NotApplicable):
        growing_potential_check(TreeSpec.homogeneous(2), Potential.table([0, 1], [0, 1]), [10.0])
