"""Boundary layers: decaying solutions of V' = W, W' = A(V) W near (U_bar, 0).

The stable manifold is traced by backward integration. A seed coordinate S
is placed on the linear stable subspace at the far end ``zeta = Y`` with
amplitude ``S_i * exp(lambda_i * Y)``, so that to leading order the
trajectory reaches ``U_bar + sum_i S_i R_i(U_bar)`` at ``zeta = 0``. This
makes ``phi_s(., U_bar)`` tangent to the stable eigenvectors with unit
scale, independently of the horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import odeint
from scipy.interpolate import CubicHermiteSpline

from .errors import (
    InsufficientTail,
    IntegrationEscape,
    InvalidParams,
    NewtonDivergence,
    NonCharacteristicViolation,
    NotInManifold,
    ToleranceFailure,
)
from .models import HyperbolicModel
from .spectral import spectral_at

RTOL = 1e-12
HORIZON_FACTOR = 40.0
SEED_FRACTION = 0.05


@dataclass(frozen=True, eq=False)
class LayerTrajectory:
    zeta: np.ndarray
    V: np.ndarray
    W: np.ndarray
    U_bar: np.ndarray
    S: np.ndarray
    horizon: float

    @property
    def endpoint(self) -> np.ndarray:
        """phi_s(S, U_bar) = V(0)."""
        return self.V[0]

    def at(self, zeta) -> np.ndarray:
        """Hermite interpolation of V using W = V' as slope data."""
        zeta = np.asarray(zeta, dtype=float)
        if np.any(zeta < 0) or np.any(zeta > self.horizon * (1 + 1e-12)):
            raise ValueError("zeta outside [0, horizon]")
        return CubicHermiteSpline(self.zeta, self.V, self.W, axis=0)(zeta)


@dataclass(frozen=True)
class StableBasis:
    lambdas: np.ndarray
    R: np.ndarray  # n x k, columns are stable eigenvectors

    def pairs(self):
        return [(float(l), self.R[:, i].copy()) for i, l in enumerate(self.lambdas)]


@dataclass(frozen=True)
class MembershipResult:
    S: np.ndarray
    residual: float
    iterations: int


@dataclass(frozen=True)
class DecayReport:
    fitted_rate: float
    weighted_sup_tail: float
    weighted: np.ndarray
    c: float

    @property
    def meets_contract(self) -> bool:
        return self.fitted_rate <= -self.c


def default_horizon(model: HyperbolicModel) -> float:
    return HORIZON_FACTOR / model.gap_c


def default_s_max(model: HyperbolicModel) -> float:
    return SEED_FRACTION * model.domain.radius


def stable_basis(model: HyperbolicModel, U_bar) -> StableBasis:
    """Eigenpairs of A(U_bar) with negative eigenvalue."""
    sd = spectral_at(model, U_bar)
    if np.any(np.abs(sd.lambdas) < model.gap_c):
        raise NonCharacteristicViolation(
            f"|lambda| below gap_c={model.gap_c:g} at U_bar: {sd.lambdas.tolist()}"
        )
    neg = sd.lambdas < 0
    if int(np.sum(neg)) != model.k:
        raise NonCharacteristicViolation(f"found {int(np.sum(neg))} stable directions, model.k={model.k}")
    return StableBasis(sd.lambdas[neg].copy(), sd.R[:, neg].copy())


def _seed(basis: StableBasis, U_bar, S, Y):
    amp = np.asarray(S, dtype=float) * np.exp(basis.lambdas * Y)
    return basis.R @ amp, basis.R @ (amp * basis.lambdas)


def _integrate_backward(model, U_bar, D0, W0, Y, zeta_desc, rtol):
    """Integrate the deviation D = V - U_bar and W from zeta=Y down to ``zeta_desc``.

    Returns V = U_bar + D and W at the requested nodes.
    """
    n = model.n
    matrix = model.matrix_eval

    def rhs(y, _t):
        W = y[n:]
        return np.concatenate([W, matrix(U_bar + y[:n]) @ W])

    y0 = np.concatenate([D0, W0])
    d_scale = max(float(np.max(np.abs(D0))), 1e-300)
    w_scale = max(float(np.max(np.abs(W0))), 1e-300)
    atol = np.concatenate([np.full(n, 1e-14 * d_scale), np.full(n, 1e-14 * w_scale)])
    y, info = odeint(rhs, y0, zeta_desc, rtol=rtol, atol=atol, full_output=True, mxstep=200000)
    if info["message"] != "Integration successful.":
        raise ToleranceFailure(f"layer integration failed: {info['message']}")
    if not np.all(np.isfinite(y)):
        raise ToleranceFailure("layer integration produced non-finite values")
    return U_bar + y[:, :n], y[:, n:]


def _check_inside(model, V):
    if not model.domain.contains(V):
        worst = float(np.max(np.abs(V - model.domain.center)))
        raise IntegrationEscape(
            f"layer trajectory leaves the domain box (sup deviation {worst:.4g} > {model.domain.radius:g})"
        )


def layer_from_seed(model: HyperbolicModel, U_bar, S, horizon_Y: float | None = None, *,
                    n_nodes: int = 2001, s_max: float | None = None,
                    rtol: float = RTOL) -> LayerTrajectory:
    """Boundary layer through the stable-manifold seed S, sampled on [0, Y]."""
    U_bar = model.check_domain(np.asarray(U_bar, dtype=float))
    S = np.atleast_1d(np.asarray(S, dtype=float))
    if S.size != model.k:
        raise InvalidParams(f"S must have {model.k} components")
    s_max = default_s_max(model) if s_max is None else s_max
    if np.linalg.norm(S) > s_max * (1 + 1e-12):
        raise InvalidParams(f"|S|={np.linalg.norm(S):.4g} exceeds s_max={s_max:.4g}")
    Y = default_horizon(model) if horizon_Y is None else float(horizon_Y)
    if Y < 10.0 / model.gap_c * (1 - 1e-12):
        raise InvalidParams(f"horizon {Y:g} shorter than 10/gap_c")
    zeta = np.linspace(0.0, Y, n_nodes)
    basis = stable_basis(model, U_bar)
    if not np.any(S):
        V = np.tile(U_bar, (n_nodes, 1))
        return LayerTrajectory(zeta, V, np.zeros_like(V), U_bar, S, Y)
    D0, W0 = _seed(basis, U_bar, S, Y)
    V, W = _integrate_backward(model, U_bar, D0, W0, Y, zeta[::-1], rtol)
    V, W = V[::-1], W[::-1]
    _check_inside(model, V)
    return LayerTrajectory(zeta, V, W, U_bar, S, Y)


def phi_s(model: HyperbolicModel, U_bar, S, horizon_Y: float | None = None, *,
          rtol: float = RTOL, basis: StableBasis | None = None) -> np.ndarray:
    """Endpoint V(0) of the layer with seed S (no s_max guard)."""
    U_bar = np.asarray(U_bar, dtype=float)
    S = np.atleast_1d(np.asarray(S, dtype=float))
    if not np.any(S):
        return U_bar.copy()
    Y = default_horizon(model) if horizon_Y is None else float(horizon_Y)
    basis = stable_basis(model, U_bar) if basis is None else basis
    D0, W0 = _seed(basis, U_bar, S, Y)
    V, _ = _integrate_backward(model, U_bar, D0, W0, Y, np.array([Y, 0.0]), rtol)
    # odeint does not return intermediate states here; check the end state
    _check_inside(model, V[-1])
    return V[-1]


def membership(model: HyperbolicModel, U_bar, U_b, tol: float = 1e-9, *,
               horizon_Y: float | None = None, max_iter: int = 50,
               fd_step: float | None = None) -> MembershipResult:
    """Solve phi_s(S, U_bar) = U_b for S by Gauss-Newton.

    Raises NotInManifold (carrying the best S and residual) when the
    least-squares residual stays above ``tol``.
    """
    U_bar = model.check_domain(np.asarray(U_bar, dtype=float))
    U_b = np.asarray(U_b, dtype=float)
    if np.max(np.abs(U_b - U_bar)) > model.domain.radius:
        raise InvalidParams("|U_b - U_bar| exceeds the box radius")
    basis = stable_basis(model, U_bar)
    h = 1e-6 * model.domain.radius if fd_step is None else fd_step
    target = U_b - U_bar
    S = np.linalg.lstsq(basis.R, target, rcond=None)[0]

    def F(S):
        return phi_s(model, U_bar, S, horizon_Y, basis=basis) - U_b

    r = F(S)
    res = float(np.linalg.norm(r))
    stalled = 0
    it = 0
    J = None
    for it in range(1, max_iter + 1):
        if res == 0.0:
            break
        if J is None or stalled:
            J = np.empty((model.n, model.k))
            for i in range(model.k):
                e = np.zeros(model.k)
                e[i] = h
                J[:, i] = (F(S + e) - r) / h
        dS = np.linalg.lstsq(J, -r, rcond=None)[0]
        t = 1.0
        while True:
            try:
                r_new = F(S + t * dS)
                res_new = float(np.linalg.norm(r_new))
            except IntegrationEscape:
                r_new, res_new = None, np.inf
            if res_new <= res or t < 1e-4:
                break
            t *= 0.5
        if r_new is None:
            raise NewtonDivergence("Gauss-Newton step left the domain box", [res])
        step = t * float(np.linalg.norm(dS))
        progress = res - res_new
        S, r, res = S + t * dS, r_new, res_new
        if step <= 1e-13 * (1.0 + float(np.linalg.norm(S))):
            break
        # a stale Jacobian is refreshed once before declaring stagnation
        stalled = stalled + 1 if progress <= 1e-3 * (res + progress) else 0
        if stalled >= 2:
            break
    else:
        if res > tol:
            raise NewtonDivergence(
                f"Gauss-Newton did not settle in {max_iter} iterations (residual {res:.3e})")
    if res <= tol:
        return MembershipResult(S, res, it)
    raise NotInManifold(
        f"U_b is not on the stable manifold of U_bar (residual {res:.3e} > tol {tol:.1e})",
        S=S, residual=res,
    )


def fit_layer_seed(model: HyperbolicModel, U_bar, zeta, V_samples, S0=None,
                   horizon_Y: float | None = None) -> np.ndarray:
    """Seed whose layer best matches sampled states V_samples(zeta) in least squares."""
    from scipy.optimize import least_squares

    U_bar = np.asarray(U_bar, dtype=float)
    V_samples = np.asarray(V_samples, dtype=float)
    basis = stable_basis(model, U_bar)
    if S0 is None:
        S0 = np.linalg.lstsq(basis.R, V_samples[0] - U_bar, rcond=None)[0]
    big = 10 * default_s_max(model)

    def resid(S):
        traj = layer_from_seed(model, U_bar, S, horizon_Y, s_max=big, n_nodes=801)
        return (traj.at(zeta) - V_samples).ravel()

    fit = least_squares(resid, np.atleast_1d(S0), method="lm", xtol=1e-14, ftol=1e-14)
    return fit.x


def decay_report(traj: LayerTrajectory, c: float) -> DecayReport:
    """Tail decay rate of |W| and the weighted sup of |W| exp(c zeta / 4).

    The tail is the second half of the sampled interval.
    """
    zeta = traj.zeta
    if np.sum(zeta > 2.0 / c) < 20:
        raise InsufficientTail("fewer than 20 nodes past zeta = 2/c")
    wnorm = np.linalg.norm(traj.W, axis=1)
    weighted = wnorm * np.exp(c * zeta / 4.0)
    tail = zeta >= 0.5 * zeta[-1]
    if not np.any(wnorm[tail] > 0):
        return DecayReport(-np.inf, 0.0, weighted, c)
    z, w = zeta[tail], wnorm[tail]
    ok = w > 0
    rate = float(np.polyfit(z[ok], np.log(w[ok]), 1)[0])
    return DecayReport(rate, float(np.max(weighted[tail])), weighted, c)
