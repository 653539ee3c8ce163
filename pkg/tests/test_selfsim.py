import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import ndtr

from boundary_riemann.errors import ContinuationFailure, InvalidParams, MeshExhausted, RangeExceeded
from boundary_riemann.models import builtin
from boundary_riemann.riemann import loglog_slope
from boundary_riemann.selfsim import (
    MeshPolicy,
    build_mesh,
    continuation_ladder,
    inner_rescale,
    solve_profile,
    transition_width,
)

A_DIAG = [[-1.0, 0.0], [0.0, 2.0]]
U_B = np.array([0.3, -0.2])
U_R = np.array([-0.1, 0.4])
XI = 3.0


@pytest.fixture(scope="module")
def diag_wide():
    return builtin("linear", {"A": A_DIAG, "radius": 1.0})


def _ramp(a, eps, t):
    """int_0^t exp((a s - s^2/2)/eps) ds up to a positive factor, via the normal cdf."""
    r = np.sqrt(eps)
    if a >= 0:
        return ndtr((t - a) / r) - ndtr(-a / r)
    # same integral, rewritten so neither term rounds to 1
    return ndtr(a / r) - ndtr((a - t) / r)


def scalar_exact(a, eps, q0, q1, Xi, x):
    return q0 + (q1 - q0) * _ramp(a, eps, x) / _ramp(a, eps, Xi)


def test_closed_form_matches_quadrature():
    # the oracle itself against adaptive quadrature of the integrand
    for a in (-1.0, 2.0):
        eps = 0.1
        f = lambda s: np.exp((a * s - 0.5 * s * s) / eps)
        for t in (0.5, 2.0):
            num = quad(f, 0, t, epsabs=0, epsrel=1e-12, limit=200)[0] / quad(f, 0, XI, epsabs=0,
                                                                              epsrel=1e-12, limit=200)[0]
            assert num == pytest.approx(_ramp(a, eps, t) / _ramp(a, eps, XI), rel=1e-9)


def test_constant_data(psys):
    prof = solve_profile(psys, 0.01, [1.0, 0.0], [1.0, 0.0], 3.0)
    assert prof.residual_norm == 0.0
    assert np.all(prof.Q == [1.0, 0.0])
    rungs = continuation_ladder(psys, [1.0, 0.0], [1.0, 0.0], [0.1, 0.05], 3.0)
    assert all(np.all(r.Q == [1.0, 0.0]) for r in rungs)
    inner = inner_rescale(rungs[-1], 20.0)
    assert np.all(inner.V == [1.0, 0.0]) and np.all(inner.dV == 0)


def test_diagonal_model_matches_scalar_closed_forms(diag_wide):
    prof = solve_profile(diag_wide, 0.1, U_B, U_R, XI, MeshPolicy(uniform=8000))
    for c, a in enumerate((-1.0, 2.0)):
        exact = scalar_exact(a, 0.1, U_B[c], U_R[c], XI, prof.xi)
        assert np.max(np.abs(prof.Q[:, c] - exact)) <= 1e-6
    assert prof.Q[0].tolist() == U_B.tolist() and prof.Q[-1].tolist() == U_R.tolist()
    assert prof.residual_norm <= 1e-9


def test_mesh_refinement_order(diag_wide):
    errs = []
    for n in (1000, 2000, 4000):
        prof = solve_profile(diag_wide, 0.1, U_B, U_R, XI, MeshPolicy(uniform=n))
        exact = np.column_stack([scalar_exact(a, 0.1, U_B[c], U_R[c], XI, prof.xi)
                                 for c, a in enumerate((-1.0, 2.0))])
        errs.append(np.max(np.abs(prof.Q - exact)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.8)


def test_graded_mesh_solution(diag_wide):
    # default graded mesh: coarser, still second-order accurate around the layers
    prof = solve_profile(diag_wide, 0.01, U_B, U_R, XI)
    exact = np.column_stack([scalar_exact(a, 0.01, U_B[c], U_R[c], XI, prof.xi)
                             for c, a in enumerate((-1.0, 2.0))])
    assert np.max(np.abs(prof.Q - exact)) <= 1e-3
    assert np.all(np.diff(prof.xi) > 0)


def test_discrete_maximum_principle(diag_wide):
    for eps in (0.1, 0.01, 0.001):
        prof = solve_profile(diag_wide, eps, U_B, U_R, XI)
        for c in range(2):
            lo, hi = sorted((U_B[c], U_R[c]))
            assert prof.Q[:, c].min() >= lo - 1e-8 and prof.Q[:, c].max() <= hi + 1e-8


def test_profile_stays_in_inflated_box(psys):
    prof = solve_profile(psys, 0.01, [0.95, 0.05], [1.05, 0.0], 3.0)
    assert psys.domain.contains(prof.Q, inflate=1.1)


def test_linear_ladder_newton_iterations(linear_coupled):
    eps = [0.1 * 2.0**-j for j in range(6)]
    rungs = continuation_ladder(linear_coupled, [0.05, 0.03], [0.02, -0.01], eps, 4.0)
    assert all(r.newton_iterations <= 5 for r in rungs[1:])
    # consecutive rungs approach each other
    d = [np.max(np.abs(b.Q[-1] - a.Q[-1])) + np.max(np.abs(np.interp(1.0, b.xi, b.Q[:, 0])
                                                          - np.interp(1.0, a.xi, a.Q[:, 0])))
         for a, b in zip(rungs[:-1], rungs[1:])]
    assert d[-1] <= d[0]


def test_p_system_shock_width_scales_with_eps():
    # a strong 2-shock: width ~ eps once eps << (lambda jump)^2
    m = builtin("p_system", {"gamma": 3.0, "center": [1.0, 0.3], "radius": 0.6})
    p = lambda v: v**-3.0
    sigma = np.sqrt(-(p(0.75) - p(1.0)) / (0.75 - 1.0))
    eps = [0.1 * 2.0**-j for j in range(7)]
    rungs = continuation_ladder(m, [0.75, 0.25 * sigma], [1.0, 0.0], eps, 14.0)
    widths = [transition_width(r, xi_min=1.0) for r in rungs]
    assert loglog_slope(eps, widths) == pytest.approx(1.0, abs=0.2)


def test_ladder_validation(psys):
    with pytest.raises(InvalidParams):
        continuation_ladder(psys, [1.0, 0.0], [1.01, 0.0], [], 3.0)
    with pytest.raises(InvalidParams):
        continuation_ladder(psys, [1.0, 0.0], [1.01, 0.0], [0.1, 0.1], 3.0)
    with pytest.raises(InvalidParams):
        continuation_ladder(psys, [1.0, 0.0], [1.01, 0.0], [0.1, 0.01], 3.0)


def test_ladder_failure_keeps_partial(psys):
    with pytest.raises(ContinuationFailure) as info:
        continuation_ladder(psys, [1.0, 0.0], [1.05, 0.0], [0.1, 0.05, 0.025], 3.0,
                            MeshPolicy(max_nodes=600))
    assert info.value.rung >= 1 and len(info.value.partial) == info.value.rung


def test_solve_guards(psys):
    with pytest.raises(InvalidParams):
        solve_profile(psys, 1e-5, [1.0, 0.0], [1.05, 0.0], 3.0)
    with pytest.raises(InvalidParams):
        solve_profile(psys, 0.01, [1.0, 0.0], [1.05, 0.0], 1.0)
    with pytest.raises(MeshExhausted):
        build_mesh(psys, 1e-4, 3.0, MeshPolicy(max_nodes=100))


def test_inner_rescale_matches_closed_form(diag_wide):
    eps = 0.1
    prof = solve_profile(diag_wide, eps, U_B, U_R, XI, MeshPolicy(uniform=8000))
    inner = inner_rescale(prof, 20.0)
    exact = scalar_exact(-1.0, eps, U_B[0], U_R[0], XI, eps * inner.zeta)
    assert np.max(np.abs(inner.V[:, 0] - exact)) <= 1e-6
    assert np.all(inner.V[0] == U_B)


def test_inner_rescale_range(psys):
    prof = solve_profile(psys, 0.1, [1.0, 0.0], [1.02, 0.0], 3.0)
    with pytest.raises(RangeExceeded):
        inner_rescale(prof, 31.0)
    with pytest.raises(InvalidParams):
        inner_rescale(prof, 10.0, n_nodes=100)


def test_transition_width_of_erf_profile():
    # a contact profile: |Q'| is Gaussian with FWHM 2 sqrt(2 ln 2 eps)
    m = builtin("linear", {"A": [[-1.0, 0.0], [0.0, 1.5]], "radius": 1.0})
    eps = 0.001
    prof = solve_profile(m, eps, [0.0, 0.2], [0.0, 0.0], 3.0)
    w = transition_width(prof, xi_min=0.5)
    assert w == pytest.approx(2 * np.sqrt(2 * np.log(2) * eps), rel=1e-3)


def test_ladder_with_drifting_right_state(psys):
    d = np.array([0.5, -0.2])
    rungs = continuation_ladder(psys, [1.02, 0.0], [1.0, 0.0], [0.1, 0.05], 3.0, drift=d)
    for r in rungs:
        np.testing.assert_array_equal(r.Q[-1], np.array([1.0, 0.0]) + r.epsilon * d)
