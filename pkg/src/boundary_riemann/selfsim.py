"""Self-similar viscous profiles: eps Q'' = (A(Q) - xi I) Q' on [0, Xi].

Second-order central differences on a mesh graded toward xi = 0, solved by
damped Newton with a sparse block-tridiagonal Jacobian. A continuation
ladder in eps warm-starts each rung from the previous profile.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import PchipInterpolator
from scipy.sparse.linalg import spsolve

from .errors import (
    ContinuationFailure,
    InvalidParams,
    MeshExhausted,
    NewtonDivergence,
    RangeExceeded,
)
from .models import HyperbolicModel

EPS_FLOOR = 1e-4
NEWTON_TOL = 1e-9


@dataclass(frozen=True)
class MeshPolicy:
    """Geometric grading from h0 = h0_factor * eps near xi = 0, growing by
    ``ratio`` per cell until capped by the cell Peclet bound
    h <= pe_max * 2 eps / max|lambda - xi|.  ``refine_levels`` rounds of
    bisection are applied where the converged profile varies fastest.
    ``uniform`` overrides everything with that many equal cells.
    """

    h0_factor: float = 0.01
    ratio: float = 1.03
    pe_max: float = 0.25
    h_max_fraction: float = 0.01
    refine_levels: int = 0
    refine_fraction: float = 0.1
    max_nodes: int = 400_000
    uniform: int | None = None


@dataclass(frozen=True, eq=False)
class ViscousProfile:
    epsilon: float
    xi: np.ndarray
    Q: np.ndarray
    U_b: np.ndarray
    U_right: np.ndarray
    residual_norm: float
    newton_iterations: int
    damping: tuple = ()

    @property
    def Xi(self) -> float:
        return float(self.xi[-1])

    def derivative(self) -> np.ndarray:
        """dQ/dxi at the nodes (second-order, one-sided at the ends)."""
        return np.gradient(self.Q, self.xi, axis=0, edge_order=2)


@dataclass(frozen=True, eq=False)
class InnerProfile:
    zeta: np.ndarray
    V: np.ndarray
    dV: np.ndarray  # dV/dzeta


def _speed_bounds(model: HyperbolicModel):
    pts = model.domain.grid(5)
    lam = np.linalg.eigvals(model.matrices(pts)).real
    return float(lam.min()), float(lam.max())


def state_speed_bounds(model: HyperbolicModel, states, margin: float = 0.05):
    """Extreme eigenvalues over ``states``, widened by ``margin`` of their spread."""
    lam = np.linalg.eigvals(model.matrices(np.asarray(states, float))).real
    lo, hi = float(lam.min()), float(lam.max())
    pad = margin * (hi - lo)
    return lo - pad, hi + pad


def build_mesh(model: HyperbolicModel, epsilon: float, Xi: float,
               policy: MeshPolicy = MeshPolicy(), speeds=None) -> np.ndarray:
    """Graded mesh on [0, Xi].

    ``speeds`` = (lo, hi) bounds the characteristic speeds of the solution
    (default: the whole box). Past hi + 10 sqrt(eps) the profile is flat to
    roundoff and cells grow geometrically up to h_max.
    """
    if policy.uniform is not None:
        return np.linspace(0.0, Xi, policy.uniform + 1)
    lo, hi = _speed_bounds(model) if speeds is None else speeds
    x_free = hi + 10.0 * np.sqrt(epsilon)
    h = policy.h0_factor * epsilon
    h_max = policy.h_max_fraction * Xi
    nodes = [0.0]
    x = 0.0
    while x < Xi:
        if x <= x_free:
            spread = max(x - lo, hi - x, 1e-12)
            cap = min(policy.pe_max * 2.0 * epsilon / spread, h_max)
        else:
            cap = h_max
        h = min(h * policy.ratio, cap) if len(nodes) > 1 else min(h, cap)
        x += h
        nodes.append(x)
        if len(nodes) > policy.max_nodes:
            raise MeshExhausted(f"graded mesh needs more than {policy.max_nodes} nodes")
    mesh = np.asarray(nodes)
    # stretch so that the last node lands on Xi exactly
    mesh *= Xi / mesh[-1]
    mesh[-1] = Xi
    return mesh


def _stencils(x):
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    D = hp * hm * (hp + hm)
    # first derivative: a*Q[j-1] + b*Q[j] + c*Q[j+1]
    d1 = (-hp**2 / D, (hp**2 - hm**2) / D, hm**2 / D)
    # second derivative
    d2 = (2.0 / (hm * (hp + hm)), -2.0 / (hp * hm), 2.0 / (hp * (hp + hm)))
    return d1, d2


def _residual(model, eps, x, Q, d1, d2):
    Qm, Q0, Qp = Q[:-2], Q[1:-1], Q[2:]
    dQ = d1[0][:, None] * Qm + d1[1][:, None] * Q0 + d1[2][:, None] * Qp
    ddQ = d2[0][:, None] * Qm + d2[1][:, None] * Q0 + d2[2][:, None] * Qp
    A = model.matrices(Q0)
    adv = np.einsum("jab,jb->ja", A, dQ) - x[1:-1, None] * dQ
    return eps * ddQ - adv, A, dQ


def _jacobian(model, eps, x, Q, A, dQ, d1, d2, fd=1e-7):
    m, n = Q.shape[0] - 2, Q.shape[1]
    Q0 = Q[1:-1]
    # dA/du_l applied to Q': C[j, a, l] = sum_b dA_ab/du_l dQ_b
    C = np.empty((m, n, n))
    for l in range(n):
        e = np.zeros(n)
        e[l] = fd
        dA = (model.matrices(Q0 + e) - model.matrices(Q0 - e)) / (2 * fd)
        C[:, :, l] = np.einsum("jab,jb->ja", dA, dQ)
    I = np.eye(n)
    Ashift = A - x[1:-1, None, None] * I
    lower = eps * d2[0][:, None, None] * I - d1[0][:, None, None] * Ashift
    diag = eps * d2[1][:, None, None] * I - d1[1][:, None, None] * Ashift - C
    upper = eps * d2[2][:, None, None] * I - d1[2][:, None, None] * Ashift
    # unknown block j couples to j-1, j, j+1
    rows, cols, vals = [], [], []
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    for offset, blk in ((-1, lower), (0, diag), (1, upper)):
        js = np.arange(m)
        ok = (js + offset >= 0) & (js + offset < m)
        js = js[ok]
        rows.append((js[:, None, None] * n + ii).ravel())
        cols.append(((js + offset)[:, None, None] * n + jj).ravel())
        vals.append(blk[ok].ravel())
    return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(m * n, m * n))


def _row_scale(model, eps, x, d2, d1):
    lo, hi = _speed_bounds(model)
    spread = np.maximum(np.abs(x[1:-1] - lo), np.abs(hi - x[1:-1]))
    return eps * np.abs(d2[1]) + spread * (np.abs(d1[0]) + np.abs(d1[2]))


def _interp_states(x_old, Q_old, x_new):
    return np.column_stack([np.interp(x_new, x_old, Q_old[:, a]) for a in range(Q_old.shape[1])])


def _newton(model, eps, x, Q, tol, max_iter):
    d1, d2 = _stencils(x)
    scale = _row_scale(model, eps, x, d2, d1)[:, None]
    F, A, dQ = _residual(model, eps, x, Q, d1, d2)
    res = float(np.max(np.abs(F / scale)))
    damping = []
    it = 0
    while res > tol:
        if it >= max_iter:
            raise NewtonDivergence(f"Newton did not converge in {max_iter} iterations "
                                   f"(scaled residual {res:.3e})", damping)
        it += 1
        J = _jacobian(model, eps, x, Q, A, dQ, d1, d2)
        step = spsolve(J, -F.ravel()).reshape(F.shape)
        if not np.all(np.isfinite(step)):
            raise NewtonDivergence("singular Newton system", damping)
        t = 1.0
        while True:
            trial = Q.copy()
            trial[1:-1] += t * step
            if model.domain.contains(trial, inflate=1.1):
                F_t, A_t, dQ_t = _residual(model, eps, x, trial, d1, d2)
                res_t = float(np.max(np.abs(F_t / scale)))
                if res_t < res or (res_t <= tol):
                    break
                # accept a full step that barely moves: the residual is at roundoff
                if t == 1.0 and np.max(np.abs(step)) < 1e-13 * (1 + np.max(np.abs(Q))):
                    break
            t *= 0.5
            if t < 2.0**-20:
                damping.append(t)
                raise NewtonDivergence(f"damping failed at iteration {it} (scaled residual {res:.3e})",
                                       damping)
        damping.append(t)
        Q, F, A, dQ, res = trial, F_t, A_t, dQ_t, res_t
        if np.max(np.abs(t * step)) < 1e-15 * (1 + np.max(np.abs(Q))) and res > tol:
            raise NewtonDivergence(f"Newton stagnated at scaled residual {res:.3e}", damping)
    return Q, res, it, tuple(damping)


def _refine(x, Q, fraction):
    """Bisect the cells carrying the largest state variation."""
    jump = np.max(np.abs(np.diff(Q, axis=0)), axis=1)
    cut = np.quantile(jump, 1.0 - fraction)
    mask = jump >= cut
    mids = 0.5 * (x[:-1] + x[1:])[mask]
    return np.sort(np.concatenate([x, mids]))


def solve_profile(model: HyperbolicModel, epsilon: float, U_b, U_right, Xi: float,
                  mesh_policy: MeshPolicy = MeshPolicy(), *, initial=None, mesh=None,
                  tol: float = NEWTON_TOL, max_iter: int = 60) -> ViscousProfile:
    """Solve eps Q'' = (A(Q) - xi I) Q', Q(0) = U_b, Q(Xi) = U_right.

    ``initial`` is either a callable xi -> states of shape (len(xi), n) or a
    ViscousProfile to interpolate from; the default is the straight ramp.
    ``mesh`` overrides the mesh policy.
    """
    if not epsilon > 0:
        raise InvalidParams("epsilon must be positive")
    if epsilon < EPS_FLOOR * (1 - 1e-12):
        raise InvalidParams(f"epsilon below the floor {EPS_FLOOR:g}")
    U_b = np.asarray(U_b, dtype=float)
    U_right = np.asarray(U_right, dtype=float)
    model.check_domain(U_b)
    model.check_domain(U_right)
    if np.max(np.abs(U_b - U_right)) > model.domain.radius:
        raise InvalidParams("|U_b - U_right| exceeds the box radius")
    _, hi = _speed_bounds(model)
    if Xi <= hi:
        raise InvalidParams(f"Xi={Xi:g} must exceed the largest characteristic speed {hi:.4g}")
    if mesh is None:
        if initial is None:
            states = np.array([U_b, U_right])
        elif isinstance(initial, ViscousProfile):
            states = initial.Q
        else:
            states = np.asarray(initial(np.linspace(0.0, Xi, 400)), dtype=float)
        speeds = state_speed_bounds(model, np.vstack([states, U_b, U_right]))
        x = build_mesh(model, epsilon, Xi, mesh_policy, speeds)
    else:
        x = np.asarray(mesh, float)
    if x.size > mesh_policy.max_nodes:
        raise MeshExhausted(f"mesh has {x.size} nodes > {mesh_policy.max_nodes}")
    if np.array_equal(U_b, U_right):
        Q = np.tile(U_b, (x.size, 1))
        return ViscousProfile(float(epsilon), x, Q, U_b.copy(), U_right.copy(), 0.0, 0)

    levels = mesh_policy.refine_levels
    total_it, damping = 0, ()
    while True:
        if initial is None:
            Q = U_b + np.outer(x / Xi, U_right - U_b)
        elif isinstance(initial, ViscousProfile):
            Q = _interp_states(initial.xi, initial.Q, x)
        else:
            Q = np.array(initial(x), dtype=float)
        Q[0], Q[-1] = U_b, U_right
        Q, res, it, damping = _newton(model, epsilon, x, Q, tol, max_iter)
        total_it += it
        profile = ViscousProfile(float(epsilon), x, Q, U_b.copy(), U_right.copy(), res, total_it, damping)
        if levels <= 0:
            return profile
        levels -= 1
        x = _refine(x, Q, mesh_policy.refine_fraction)
        if x.size > mesh_policy.max_nodes:
            raise MeshExhausted(f"refinement exceeds {mesh_policy.max_nodes} nodes")
        initial = profile


def continuation_ladder(model: HyperbolicModel, U_b, U_right, eps_list, Xi: float,
                        mesh_policy: MeshPolicy = MeshPolicy(), *, initial=None,
                        tol: float = NEWTON_TOL, drift=None) -> list[ViscousProfile]:
    """Solve along a strictly decreasing eps ladder with warm starts.

    With ``drift`` = d the right boundary value on each rung is
    U_right + eps * d instead of U_right.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise InvalidParams("empty eps ladder")
    for a, b in zip(eps_list[:-1], eps_list[1:]):
        if not b < a:
            raise InvalidParams("eps ladder must be strictly decreasing")
        if b / a < 0.5 - 1e-12:
            raise InvalidParams("neighbouring eps values must have ratio >= 0.5")
    profiles: list[ViscousProfile] = []
    warm = initial
    for rung, eps in enumerate(eps_list):
        try:
            right = U_right if drift is None else np.asarray(U_right, float) + eps * np.asarray(drift, float)
            prof = solve_profile(model, eps, U_b, right, Xi, mesh_policy, initial=warm, tol=tol)
        except (NewtonDivergence, MeshExhausted) as exc:
            raise ContinuationFailure(f"ladder failed at rung {rung} (eps={eps:g}): {exc}",
                                      rung=rung, partial=profiles) from exc
        profiles.append(prof)
        warm = prof
    return profiles


def inner_rescale(profile: ViscousProfile, Z: float, n_nodes: int = 401) -> InnerProfile:
    """V(zeta) = Q(eps zeta) on a uniform zeta grid over [0, Z]."""
    if n_nodes < 400:
        raise InvalidParams("inner grid needs at least 400 nodes")
    eps = profile.epsilon
    if eps * Z > profile.Xi * (1 + 1e-12):
        raise RangeExceeded(f"eps*Z = {eps * Z:g} exceeds Xi = {profile.Xi:g}")
    zeta = np.linspace(0.0, Z, n_nodes)
    # near-denormal secants on flat stretches overflow the harmonic mean to
    # inf, which Pchip turns into the correct zero slope
    with np.errstate(over="ignore"):
        pch = PchipInterpolator(profile.xi, profile.Q, axis=0)
    V = pch(eps * zeta)
    V[0] = profile.Q[0]
    dV = eps * pch.derivative()(eps * zeta)
    return InnerProfile(zeta, V, dV)


def transition_width(profile: ViscousProfile, xi_min: float = 0.0) -> float:
    """Extent of the region around the interior max of |Q'| where |Q'| > max/2.

    Only nodes with xi >= xi_min are searched (to skip the boundary layer).
    Half-max crossings are located by linear interpolation.
    """
    x = profile.xi
    g = np.linalg.norm(profile.derivative(), axis=1)
    valid = np.nonzero(x >= xi_min)[0]
    if valid.size < 3:
        raise InvalidParams("no interior nodes beyond xi_min")
    j = valid[np.argmax(g[valid])]
    half = 0.5 * g[j]
    lo = j
    while lo > valid[0] and g[lo - 1] > half:
        lo -= 1
    hi = j
    while hi < x.size - 1 and g[hi + 1] > half:
        hi += 1

    def cross(a, b):
        # linear interpolation of the half-max crossing between nodes a and b
        if g[a] == g[b]:
            return x[a]
        return x[a] + (half - g[a]) * (x[b] - x[a]) / (g[b] - g[a])

    left = cross(lo - 1, lo) if lo > valid[0] else x[lo]
    right = cross(hi, hi + 1) if hi < x.size - 1 else x[hi]
    return float(right - left)
