import numpy as np
import pytest
from scipy.integrate import solve_ivp

from boundary_riemann import layers
from boundary_riemann.errors import (
    InsufficientTail,
    IntegrationEscape,
    InvalidParams,
    NonCharacteristicViolation,
    NotInManifold,
)
from boundary_riemann.layers import (
    decay_report,
    default_s_max,
    fit_layer_seed,
    layer_from_seed,
    membership,
    phi_s,
    stable_basis,
)
from boundary_riemann.models import builtin


def test_stable_basis_linear(linear_diag):
    (lam, r), = stable_basis(linear_diag, [0.1, -0.1]).pairs()
    assert lam == -1.0
    np.testing.assert_allclose(r, [1.0, 0.0])


def test_stable_basis_p_system(psys):
    (lam, r), = stable_basis(psys, [1.0, 0.0]).pairs()
    assert lam == pytest.approx(-np.sqrt(2), rel=1e-14)
    np.testing.assert_allclose(r, np.array([1.0, np.sqrt(2)]) / np.sqrt(3), atol=1e-14)


def test_stable_basis_symmetric_orthogonal():
    A = [[-2.0, 0.3, 0.1], [0.3, -1.0, 0.2], [0.1, 0.2, 1.5]]
    m = builtin("linear", {"A": A})
    basis = stable_basis(m, np.zeros(3))
    assert basis.R.shape == (3, 2)
    assert abs(basis.R[:, 0] @ basis.R[:, 1]) < 1e-12


def test_stable_basis_gap_violation(linear_diag):
    m = builtin("linear", {"A": [[-1.0, 0.0], [0.0, 2.0]], "gap_c": 0.9})
    object.__setattr__(m, "gap_c", 1.5)  # simulate a mis-declared gap
    with pytest.raises(NonCharacteristicViolation):
        stable_basis(m, [0.0, 0.0])


def test_zero_seed_is_constant(psys):
    traj = layer_from_seed(psys, [1.0, 0.0], [0.0])
    assert np.all(traj.V == [1.0, 0.0]) and np.all(traj.W == 0)
    np.testing.assert_array_equal(phi_s(psys, [1.0, 0.0], [0.0]), [1.0, 0.0])


def test_linear_closed_form(linear_coupled):
    U_bar = np.array([0.01, -0.02])
    S = np.array([0.004])
    traj = layer_from_seed(linear_coupled, U_bar, S)
    (lam, r), = stable_basis(linear_coupled, U_bar).pairs()
    exact = U_bar + np.outer(S[0] * np.exp(lam * traj.zeta), r)
    np.testing.assert_allclose(traj.V, exact, atol=1e-8)
    np.testing.assert_allclose(traj.endpoint, U_bar + S[0] * r, atol=1e-8)


def test_p_system_decay_rate(psys):
    traj = layer_from_seed(psys, [1.0, 0.0], [0.005])
    rate = decay_report(traj, psys.gap_c).fitted_rate
    assert rate == pytest.approx(-np.sqrt(2), rel=0.1)


def test_seed_guards(psys):
    with pytest.raises(InvalidParams):
        layer_from_seed(psys, [1.0, 0.0], [2 * default_s_max(psys)])
    with pytest.raises(InvalidParams):
        layer_from_seed(psys, [1.0, 0.0], [0.001], horizon_Y=5.0 / psys.gap_c)
    with pytest.raises(InvalidParams):
        layer_from_seed(psys, [1.0, 0.0], [0.001, 0.0])


def test_escape_detected(psys):
    with pytest.raises(IntegrationEscape):
        layer_from_seed(psys, [1.0, 0.0], [0.4], s_max=1.0)


def test_trajectory_invariants(noncons):
    S = np.array([0.008])
    traj = layer_from_seed(noncons, [0.02, 0.01], S)
    assert np.linalg.norm(traj.W[-1]) <= np.linalg.norm(S)
    dV = np.gradient(traj.V, traj.zeta, axis=0, edge_order=2)
    assert np.max(np.abs(dV[1:-1] - traj.W[1:-1])) < 1e-3 * np.max(np.abs(traj.W))
    weighted = np.linalg.norm(traj.W, axis=1) * np.exp(noncons.gap_c * traj.zeta / 4)
    assert np.argmax(weighted) < 0.5 * traj.zeta.size


def test_hermite_interpolation(linear_coupled):
    traj = layer_from_seed(linear_coupled, [0.0, 0.0], [0.01], n_nodes=201)
    (lam, r), = stable_basis(linear_coupled, [0.0, 0.0]).pairs()
    z = np.array([0.123, 3.3, 17.0])
    np.testing.assert_allclose(traj.at(z), np.outer(0.01 * np.exp(lam * z), r), atol=1e-7)
    with pytest.raises(ValueError):
        traj.at(-1.0)


@pytest.mark.parametrize("name", ["p_system", "noncons_demo"])
def test_tangency_second_order(name):
    m = builtin(name)
    U_bar = m.domain.center
    basis = stable_basis(m, U_bar)
    res = []
    for s in (0.01, 0.005, 0.0025):
        res.append(np.linalg.norm(phi_s(m, U_bar, [s]) - U_bar - s * basis.R[:, 0]))
    assert res[0] / res[1] >= 3.5 and res[1] / res[2] >= 3.5


def test_forward_reintegration(psys):
    # forward integration amplifies the unstable mode; use the short horizon
    Y = 10.0 / psys.gap_c
    traj = layer_from_seed(psys, [1.0, 0.0], [0.01], Y, n_nodes=201)

    def rhs(_z, y):
        return np.concatenate([y[2:], psys.matrices(y[:2]) @ y[2:]])

    sol = solve_ivp(rhs, (0.0, Y), np.concatenate([traj.V[0], traj.W[0]]), method="DOP853",
                    rtol=1e-13, atol=1e-15)
    end = sol.y[:2, -1]
    assert np.max(np.abs(end - traj.V[-1])) < 1e-5
    assert np.max(np.abs(end - [1.0, 0.0])) < 1e-4


def test_membership_trivial(psys):
    res = membership(psys, [1.0, 0.0], [1.0, 0.0])
    assert res.residual == 0.0 and np.all(res.S == 0)


@pytest.mark.parametrize("name", ["p_system", "noncons_demo", "linear"])
def test_membership_round_trip(name, rng):
    m = builtin(name)
    U_bar = m.domain.center + 0.02
    for _ in range(3):
        S = rng.uniform(-0.5, 0.5, size=m.k) * default_s_max(m)
        U_b = phi_s(m, U_bar, S)
        res = membership(m, U_bar, U_b)
        np.testing.assert_allclose(res.S, S, atol=1e-6)
        assert res.residual <= 1e-9


@pytest.mark.parametrize("name", ["p_system", "noncons_demo", "linear"])
def test_membership_rejects_unstable_direction(name):
    m = builtin(name)
    U_bar = m.domain.center
    R = layers.spectral_at(m, U_bar).R
    with pytest.raises(NotInManifold) as info:
        membership(m, U_bar, U_bar + 0.01 * R[:, -1])
    assert info.value.residual >= 0.005


def test_membership_sign_convention_invariant(psys, monkeypatch):
    U_bar = np.array([1.0, 0.0])
    U_b = phi_s(psys, U_bar, [0.006])
    base = membership(psys, U_bar, U_b)
    original = layers.stable_basis

    def flipped(model, U):
        b = original(model, U)
        return layers.StableBasis(b.lambdas, -b.R)

    monkeypatch.setattr(layers, "stable_basis", flipped)
    alt = membership(psys, U_bar, U_b)
    np.testing.assert_allclose(alt.S, -base.S, atol=1e-9)
    np.testing.assert_allclose(phi_s(psys, U_bar, alt.S), U_b, atol=1e-9)


def test_membership_too_far(psys):
    with pytest.raises(InvalidParams):
        membership(psys, [1.0, 0.0], [1.3, 0.0])


def test_decay_linear_rate(linear_diag):
    traj = layer_from_seed(linear_diag, [0.0, 0.0], [0.01])
    rep = decay_report(traj, linear_diag.gap_c)
    assert rep.fitted_rate == pytest.approx(-1.0, abs=0.05)
    assert rep.meets_contract


def test_decay_zero_seed(linear_diag):
    rep = decay_report(layer_from_seed(linear_diag, [0.0, 0.0], [0.0]), linear_diag.gap_c)
    assert rep.weighted_sup_tail == 0.0


def test_decay_weighted_decreasing_last_decade(psys):
    traj = layer_from_seed(psys, [1.0, 0.0], [0.01])
    rep = decay_report(traj, psys.gap_c)
    last = traj.zeta >= 0.9 * traj.zeta[-1]
    assert np.all(np.diff(rep.weighted[last]) < 0)


def test_decay_needs_tail(psys):
    traj = layer_from_seed(psys, [1.0, 0.0], [0.01], n_nodes=20)
    with pytest.raises(InsufficientTail):
        decay_report(traj, psys.gap_c)


def test_fit_layer_seed(psys):
    traj = layer_from_seed(psys, [1.0, 0.0], [0.007])
    z = np.linspace(0, 15, 60)
    S = fit_layer_seed(psys, [1.0, 0.0], z, traj.at(z), S0=[0.005])
    assert S[0] == pytest.approx(0.007, abs=1e-9)
