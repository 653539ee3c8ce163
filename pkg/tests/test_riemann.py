import numpy as np
import pytest

from boundary_riemann.errors import InvalidParams
from boundary_riemann.layers import default_s_max, membership
from boundary_riemann.models import builtin
from boundary_riemann.riemann import (
    boundary_map,
    compare_limits,
    evaluate_fan,
    l1_distance,
    shock_speeds,
    solve_boundary_riemann,
)
from boundary_riemann.selfsim import MeshPolicy, solve_profile
from boundary_riemann.spectral import spectral_at
from boundary_riemann.wavefan import fan_curve, lax_oracle

U0_P = np.array([1.0, 0.0])


def test_trivial_data(psys):
    fan = solve_boundary_riemann(psys, U0_P, U0_P)
    assert np.all(fan.S == 0) and np.all(fan.strengths == 0)
    assert fan.pieces == ()
    np.testing.assert_array_equal(fan.trace_U_bar, U0_P)
    np.testing.assert_array_equal(evaluate_fan(fan, 0.7), U0_P)


def test_linear_closed_form(linear_coupled):
    U0 = np.array([0.02, -0.01])
    Ub = np.array([0.05, 0.03])
    sd = spectral_at(linear_coupled, U0)
    c = np.linalg.solve(sd.R, Ub - U0)
    fan = solve_boundary_riemann(linear_coupled, U0, Ub)
    np.testing.assert_allclose(fan.S, c[:1], atol=1e-8)
    np.testing.assert_allclose(fan.strengths, c[1:], atol=1e-8)
    np.testing.assert_allclose(fan.trace_U_bar, U0 + c[1] * sd.R[:, 1], atol=1e-8)
    (piece,) = fan.pieces
    assert piece.speed_lo == pytest.approx(sd.lambdas[1], abs=1e-8)
    np.testing.assert_allclose(piece.right_state - piece.left_state, -c[1] * sd.R[:, 1], atol=1e-8)


def test_p_system_hugoniot_datum_is_a_single_shock(psys):
    shock = lax_oracle(psys, 2, -0.03, U0_P)
    fan = solve_boundary_riemann(psys, U0_P, shock.endpoint, provider="lax")
    assert np.max(np.abs(fan.S)) <= 1e-7
    (piece,) = fan.pieces
    assert piece.type == "shock" and piece.speed_lo == pytest.approx(shock.speeds[0], rel=1e-9)
    assert piece.speed_lo > 0


@pytest.mark.parametrize("name,provider", [("p_system", "envelope"), ("p_system", "lax"),
                                           ("noncons_demo", "envelope")])
def test_round_trip(name, provider, rng):
    m = builtin(name)
    U0 = m.domain.center + 0.01
    smax = 0.5 * default_s_max(m)
    for _ in range(3):
        S = rng.uniform(-smax, smax, size=m.k)
        s = rng.uniform(-0.03, 0.03, size=m.n - m.k)
        Ub = boundary_map(m, U0, S, s, provider)
        fan = solve_boundary_riemann(m, U0, Ub, provider)
        np.testing.assert_allclose(fan.S, S, atol=1e-6)
        np.testing.assert_allclose(fan.strengths, s, atol=1e-6)
        assert fan.residual <= 1e-9


def test_fan_invariants(noncons):
    U0 = np.array([0.02, 0.01])
    Ub = boundary_map(noncons, U0, [0.004], [0.02])
    fan = solve_boundary_riemann(noncons, U0, Ub)
    # trace recomputed from the curves
    recomputed = fan_curve(noncons, None, 2, float(fan.strengths[0]), U0).endpoint
    np.testing.assert_allclose(recomputed, fan.trace_U_bar, atol=1e-9)
    for a, b in zip(fan.pieces[:-1], fan.pieces[1:]):
        assert a.speed_hi <= b.speed_lo
    assert all(p.speed_lo > 0 for p in fan.pieces)
    assert membership(noncons, fan.trace_U_bar, Ub).residual <= 1e-9


def test_evaluate_fan_regions(psys):
    # family-2 rarefaction right of a boundary layer
    Ub = boundary_map(psys, U0_P, [0.004], [0.03])
    fan = solve_boundary_riemann(psys, U0_P, Ub)
    (piece,) = fan.pieces
    assert piece.type == "rarefaction"
    curve = fan.curves[0]
    np.testing.assert_array_equal(evaluate_fan(fan, piece.speed_hi + 0.1), U0_P)
    np.testing.assert_array_equal(evaluate_fan(fan, 0.5 * piece.speed_lo), fan.trace_U_bar)
    j = 300
    np.testing.assert_allclose(evaluate_fan(fan, curve.xi[j]), curve.V[j], atol=1e-14)
    # monotone along the rarefaction: v decreases with speed on this curve
    speeds = np.linspace(piece.speed_lo, piece.speed_hi, 200)
    v = np.array([evaluate_fan(fan, x)[0] for x in speeds])
    assert np.all(np.diff(v) * np.sign(v[-1] - v[0]) >= 0)


def test_evaluate_fan_trace_limit_and_right_continuity(psys):
    Ub = boundary_map(psys, U0_P, [0.004], [-0.03], "lax")
    fan = solve_boundary_riemann(psys, U0_P, Ub, "lax")
    np.testing.assert_array_equal(evaluate_fan(fan, 0.0), fan.trace_U_bar)
    np.testing.assert_array_equal(evaluate_fan(fan, 1e-300), fan.trace_U_bar)
    (sigma,) = shock_speeds(fan)
    np.testing.assert_array_equal(evaluate_fan(fan, sigma), U0_P)
    np.testing.assert_array_equal(evaluate_fan(fan, np.nextafter(sigma, 0)), fan.trace_U_bar)
    with pytest.raises(InvalidParams):
        evaluate_fan(fan, -1.0)


def test_provider_consistency_cubic(psys):
    # away from the O(s^2) window between the two shock speeds the fans
    # differ by O(s^3)
    diffs = []
    for s in (0.04, 0.02, 0.01):
        Ub = boundary_map(psys, U0_P, [0.005], [-s], "lax")
        fa = solve_boundary_riemann(psys, U0_P, Ub, "envelope")
        fl = solve_boundary_riemann(psys, U0_P, Ub, "lax")
        lo, hi = sorted(shock_speeds(fa) + shock_speeds(fl))
        speeds = [x for x in np.linspace(0, 3, 601) if not lo - 1e-12 <= x <= hi + 1e-12]
        diffs.append(max(np.max(np.abs(evaluate_fan(fa, x) - evaluate_fan(fl, x))) for x in speeds))
        assert diffs[-1] <= 0.1 * s**3
    assert np.log2(diffs[0] / diffs[1]) >= 2.5 and np.log2(diffs[1] / diffs[2]) >= 2.5


def test_solver_guards(psys):
    with pytest.raises(InvalidParams):
        solve_boundary_riemann(psys, U0_P, [1.2, 0.0])
    with pytest.raises(InvalidParams):
        solve_boundary_riemann(psys, U0_P, [1.01, 0.0], provider="roe")


def test_compare_trivial(psys):
    rep = compare_limits(psys, U0_P, U0_P, [0.1, 0.05])
    for row in rep.rows:
        assert row.l1_fan_dist < 1e-8 and row.sup_inner_dist < 1e-8 and row.weighted_tail < 1e-8


def test_linear_l1_matches_contact_oracle():
    # the fan has a single contact; its viscous profile is an erf of width
    # sqrt(eps), so the L1 gap is |jump| sqrt(2 eps / pi)
    m = builtin("linear", {"A": [[-1.0, 0.0], [0.0, 2.0]]})
    U0 = np.array([0.0, 0.0])
    Ub = np.array([0.03, 0.02])
    fan = solve_boundary_riemann(m, U0, Ub)
    for eps in (0.01, 0.0025):
        prof = solve_profile(m, eps, Ub, U0, 4.0, MeshPolicy(refine_levels=0))
        l1 = l1_distance(prof, fan, 3 * eps * abs(np.log(eps)))
        assert l1 == pytest.approx(0.02 * np.sqrt(2 * eps / np.pi), rel=5e-3)


def test_compare_p_system_layer_and_shock(psys):
    Ub = boundary_map(psys, U0_P, [0.01], [-0.05], "lax")
    eps = [0.1 * 2.0**-j for j in range(5)]
    rep = compare_limits(psys, U0_P, Ub, eps, provider="lax")
    assert rep.sup_nonincreasing and rep.l1_nonincreasing
    assert rep.rows[-1].sup_inner_dist < 1e-3
    assert rep.S_fit[0] == pytest.approx(rep.layer_S[0], abs=1e-3)
    assert len(rep.column("epsilon")) == 5
