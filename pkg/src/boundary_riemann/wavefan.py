"""Wave-fan curves from the envelope fixed point, and a classical Lax oracle.

The engine iterates

    V(tau)  = U+ + int_0^tau R_hat(V, omega, xi) ds
    f(tau)  = int_0^tau lambda_hat(V, omega, xi) ds
    g       = concave envelope of f on [0, s]   (convex envelope if s < 0)
    omega   = f - g,   xi = g'

on a uniform tau grid. Chord segments of g are shocks; stretches where g
touches f are rarefactions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    GNLViolation,
    InvalidParams,
    NoConvergence,
    OutOfDomain,
    RootFindFailure,
)
from .models import HyperbolicModel
from .spectral import decompose_batch, spectral_at

DEFAULT_NODES = 1024


# ---------------------------------------------------------------------------
# envelopes


@dataclass(frozen=True, eq=False)
class Envelope:
    g: np.ndarray
    g_prime: np.ndarray
    vertices: np.ndarray


def _slope(f, a, b):
    return (f[b] - f[a]) / (b - a)


def _upper_hull(f) -> list[int]:
    hull: list[int] = []
    for j in range(len(f)):
        while len(hull) >= 2 and _slope(f, hull[-2], hull[-1]) <= _slope(f, hull[-1], j):
            hull.pop()
        hull.append(j)
    return hull


def hull_fill(f, vertices, spacing: float = 1.0) -> Envelope:
    """Piecewise-linear interpolant of f through ``vertices`` and its slope.

    The slope is the chord slope on each segment; at an interior vertex it
    is the mean of the two adjacent chord slopes.
    """
    f = np.asarray(f, dtype=float)
    verts = np.asarray(vertices, dtype=int)
    idx = np.arange(f.size)
    g = np.interp(idx, verts, f[verts])
    g[verts] = f[verts]
    if verts.size < 2:
        return Envelope(g, np.zeros_like(g), verts)
    seg_slope = np.diff(f[verts]) / np.diff(verts)
    seg = np.clip(np.searchsorted(verts, idx, side="right") - 1, 0, verts.size - 2)
    gp = seg_slope[seg]
    inner = verts[1:-1]
    gp[inner] = 0.5 * (seg_slope[:-1] + seg_slope[1:])
    gp[verts[0]] = seg_slope[0]
    gp[verts[-1]] = seg_slope[-1]
    return Envelope(g, gp / spacing, verts)


def envelope(f, sense: str = "concave", spacing: float = 1.0) -> Envelope:
    """Least concave majorant (or greatest convex minorant) of samples f.

    Single-pass monotone chain over the index grid, O(m). ``spacing`` is the
    (signed) grid step used to convert index slopes into ``g_prime``.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.size < 1:
        raise ValueError("f must be a non-empty 1-d array")
    if sense == "concave":
        verts = _upper_hull(f)
        return hull_fill(f, verts, spacing)
    if sense == "convex":
        env = hull_fill(-f, _upper_hull(-f), spacing)
        return Envelope(-env.g, -env.g_prime, env.vertices)
    raise ValueError(f"sense must be 'concave' or 'convex', got {sense!r}")


# ---------------------------------------------------------------------------
# closures and curves


@dataclass(frozen=True, eq=False)
class ClosureFields:
    """Generalised eigenvector/eigenvalue fields evaluated on whole grids.

    ``R_hat(V, omega, xi)`` maps (m, n), (m,), (m,) arrays to (m, n);
    ``lambda_hat`` maps the same inputs to (m,).
    """

    R_hat: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    lambda_hat: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    order_tag: str = "leading_order"


def leading_order_closure(model: HyperbolicModel, i: int, U_plus) -> ClosureFields:
    """R_hat = R_i(V), lambda_hat = lambda_i(V), oriented along R_i(U+).

    ``i`` is 1-based.
    """
    ref = spectral_at(model, U_plus).R

    def fields(V):
        lam, R, _ = decompose_batch(model.matrices(V), ref)
        return lam[..., i - 1], R[..., :, i - 1]

    def R_hat(V, omega, xi):
        return fields(V)[1]

    def lambda_hat(V, omega, xi):
        return fields(V)[0]

    return ClosureFields(R_hat, lambda_hat)


@dataclass(frozen=True, eq=False)
class WaveFanCurve:
    family: int
    strength: float
    tau: np.ndarray
    V: np.ndarray
    omega: np.ndarray
    xi: np.ndarray
    f_vals: np.ndarray
    g_vals: np.ndarray
    vertices: np.ndarray
    residuals: tuple = ()
    provider: str = "envelope"

    @property
    def U_plus(self) -> np.ndarray:
        return self.V[0]

    @property
    def endpoint(self) -> np.ndarray:
        return self.V[-1]

    @property
    def iterations(self) -> int:
        return len(self.residuals)


def _cumtrapz(y, dx):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * dx, axis=0)
    return out


def _trivial_curve(family, U_plus, lam, provider="envelope"):
    z = np.zeros(1)
    return WaveFanCurve(family, 0.0, z, np.asarray(U_plus, float)[None, :].copy(), z.copy(),
                        np.array([lam]), z.copy(), z.copy(), np.array([0]), (), provider)


def fan_curve(model: HyperbolicModel, closure: ClosureFields | None, i: int, s_i: float,
              U_plus, m: int = DEFAULT_NODES, tol: float = 1e-10, max_iter: int = 80,
              s_max: float | None = None) -> WaveFanCurve:
    """Picard iteration of the envelope fixed point for family ``i`` (1-based).

    ``closure=None`` uses :func:`leading_order_closure`.
    """
    U_plus = model.check_domain(np.asarray(U_plus, dtype=float))
    if not 1 <= i <= model.n:
        raise InvalidParams(f"family {i} outside 1..{model.n}")
    if s_max is not None and abs(s_i) > s_max:
        raise InvalidParams(f"|s|={abs(s_i):g} exceeds s_max={s_max:g}")
    if closure is None:
        closure = leading_order_closure(model, i, U_plus)
    if s_i == 0:
        lam0 = float(closure.lambda_hat(U_plus[None, :], np.zeros(1), np.zeros(1))[0])
        return _trivial_curve(i, U_plus, lam0)
    if m < 3:
        raise InvalidParams("need at least 3 grid nodes")

    tau = np.linspace(0.0, s_i, m)
    dtau = s_i / (m - 1)
    sense = "concave" if s_i > 0 else "convex"
    V = np.tile(U_plus, (m, 1))
    omega = np.zeros(m)
    xi = np.full(m, float(closure.lambda_hat(U_plus[None, :], np.zeros(1), np.zeros(1))[0]))
    residuals = []
    for _ in range(max_iter):
        lam = closure.lambda_hat(V, omega, xi)
        R = closure.R_hat(V, omega, xi)
        f = _cumtrapz(lam, dtau)
        env = envelope(f, sense, dtau)
        omega_new = f - env.g
        V_new = U_plus + _cumtrapz(R, dtau)
        change = max(float(np.max(np.abs(V_new - V))),
                     float(np.max(np.abs(omega_new - omega))),
                     float(np.max(np.abs(env.g_prime - xi))) * abs(s_i))
        V, omega, xi = V_new, omega_new, env.g_prime
        residuals.append(change)
        if not model.domain.contains(V):
            raise OutOfDomain(f"{i}-wave fan curve leaves the domain box")
        if change < tol:
            return WaveFanCurve(i, float(s_i), tau, V, omega, xi, f, env.g, env.vertices,
                                tuple(residuals))
    raise NoConvergence(f"Picard iteration did not converge in {max_iter} steps "
                        f"(last change {residuals[-1]:.3e})", residual=residuals[-1])


@dataclass(frozen=True)
class WavePiece:
    type: str  # "shock" or "rarefaction"
    tau_start: float
    tau_end: float
    speed_lo: float
    speed_hi: float
    start: int  # node indices along the curve
    end: int

    @property
    def is_contact(self) -> bool:
        """Rarefaction-type piece whose speed range has collapsed to a point."""
        return self.type == "rarefaction" and self.speed_hi - self.speed_lo <= 1e-8 * max(1.0, abs(self.speed_hi))


def classify(curve: WaveFanCurve, contact_tol: float | None = None) -> list[WavePiece]:
    """Split a curve into shock pieces (g affine, g != f) and rarefaction pieces (g = f)."""
    if curve.tau.size == 1:
        return []
    if contact_tol is None:
        contact_tol = 1e-9 * max(1.0, float(np.max(np.abs(curve.f_vals))))
    verts = curve.vertices
    tau, xi, g = curve.tau, curve.xi, curve.g_vals
    pieces: list[WavePiece] = []
    run_start = None

    def close_run(a, b):
        pieces.append(WavePiece("rarefaction", float(tau[a]), float(tau[b]),
                                float(np.min(xi[a:b + 1])), float(np.max(xi[a:b + 1])), int(a), int(b)))

    for a, b in zip(verts[:-1], verts[1:]):
        is_shock = b - a > 1 and float(np.max(np.abs(curve.omega[a:b + 1]))) > contact_tol
        if is_shock:
            if run_start is not None:
                close_run(run_start, a)
                run_start = None
            speed = float((g[b] - g[a]) / (tau[b] - tau[a]))
            pieces.append(WavePiece("shock", float(tau[a]), float(tau[b]), speed, speed, int(a), int(b)))
        elif run_start is None:
            run_start = a
    if run_start is not None:
        close_run(run_start, verts[-1])
    return pieces


# ---------------------------------------------------------------------------
# classical oracle for conservative models


@dataclass(frozen=True, eq=False)
class LaxResult:
    endpoint: np.ndarray
    kind: str  # "rarefaction", "shock" or "trivial"
    speeds: tuple
    curve: WaveFanCurve


def _eigpair(model, V, i, ref):
    lam, R, _ = decompose_batch(model.matrices(V), ref)
    return lam[..., i - 1], R[..., :, i - 1]


def _gnl_coefficient(model, U, i, ref, h=1e-6):
    lam0, r = _eigpair(model, U, i, ref)
    lp, _ = _eigpair(model, U + h * r, i, ref)
    lm, _ = _eigpair(model, U - h * r, i, ref)
    return float((lp - lm) / (2 * h))


# Gauss-Legendre nodes on [0, 1] for the mean-value matrix
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _hugoniot_residual(model, U_plus, Z, sigma, t):
    """Rankine-Hugoniot relation divided by the chord length t.

    (F(U+ + tZ) - F(U+)) / t is written as the mean of A along the chord,
    which stays well conditioned as t -> 0.
    """
    pts = U_plus + np.outer(_GL_X * t, Z)
    M = np.tensordot(_GL_W, model.matrices(pts), axes=1)
    return np.concatenate([M @ Z - sigma * Z, [0.5 * (Z @ Z - 1.0)]])


def _hugoniot_solve(model, U_plus, y, t, iters=8):
    n = model.n
    for _ in range(iters):
        G = _hugoniot_residual(model, U_plus, y[:n], y[n], t)
        J = _hugoniot_jac(model, U_plus, y, t)
        dy = np.linalg.solve(J, -G)
        y = y + dy
        if np.max(np.abs(dy)) < 1e-15:
            break
    G = _hugoniot_residual(model, U_plus, y[:n], y[n], t)
    if np.max(np.abs(G)) > 1e-10:
        raise RootFindFailure(f"Hugoniot correction failed (residual {np.max(np.abs(G)):.2e})")
    return y


def _hugoniot_jac(model, U_plus, y, t, h=1e-7):
    n = model.n
    J = np.empty((n + 1, n + 1))
    for c in range(n + 1):
        e = np.zeros(n + 1)
        e[c] = h
        J[:, c] = (_hugoniot_residual(model, U_plus, (y + e)[:n], (y + e)[n], t)
                   - _hugoniot_residual(model, U_plus, (y - e)[:n], (y - e)[n], t)) / (2 * h)
    return J


def _hugoniot_branch(model, U_plus, i, s_i, taus, ref):
    """Hugoniot locus through U+ in family i, parameterised by arclength."""
    n = model.n
    lam0, r0 = _eigpair(model, U_plus, i, ref)
    direction = np.sign(s_i)
    y0 = np.concatenate([[0.0], direction * r0, [lam0]])  # (t, Z, sigma)

    def rhs(_s, y):
        t, Z, sigma = y[0], y[1:n + 1], y[n + 1]
        zs = np.concatenate([Z, [sigma]])
        ht = 1e-6
        dGdt = (_hugoniot_residual(model, U_plus, Z, sigma, t + ht)
                - _hugoniot_residual(model, U_plus, Z, sigma, t - ht)) / (2 * ht)
        dz = np.linalg.solve(_hugoniot_jac(model, U_plus, zs, t), -dGdt)
        speed = np.linalg.norm(Z + t * dz[:n])
        return np.concatenate([[1.0], dz]) / speed

    arc = np.abs(taus)
    sol = solve_ivp(rhs, (0.0, arc[-1]), y0, method="DOP853", t_eval=arc, rtol=1e-12, atol=1e-14)
    if not sol.success:
        raise RootFindFailure(f"Hugoniot continuation failed: {sol.message}")
    ys = sol.y.T
    t_end = ys[-1, 0]
    corrected = _hugoniot_solve(model, U_plus, ys[-1, 1:], t_end)
    ys[-1, 1:] = corrected
    V = U_plus + ys[:, :1] * ys[:, 1:n + 1]
    return V, float(corrected[n])


def lax_oracle(model: HyperbolicModel, i: int, s_i: float, U_plus, m: int = DEFAULT_NODES,
               gnl_tol: float = 1e-6) -> LaxResult:
    """Classical Lax wave curve of family ``i`` through the right state U+.

    Both branches are parameterised by arclength, so ``s_i`` means the same
    thing as for :func:`fan_curve` with unit eigenvectors. The rarefaction
    branch integrates dV/dtau = R_i(V); the shock branch follows the
    Rankine-Hugoniot locus F(V) - F(U+) = sigma (V - U+).
    """
    if model.flux_eval is None:
        raise InvalidParams(f"lax_oracle needs a conservative model; {model.name!r} has no flux")
    U_plus = model.check_domain(np.asarray(U_plus, dtype=float))
    ref = spectral_at(model, U_plus).R
    lam0, _ = _eigpair(model, U_plus, i, ref)
    if s_i == 0:
        return LaxResult(U_plus.copy(), "trivial", (float(lam0),),
                         _trivial_curve(i, U_plus, float(lam0), "lax"))
    e0 = _gnl_coefficient(model, U_plus, i, ref)
    if abs(e0) < gnl_tol:
        raise GNLViolation(f"family {i} is not genuinely nonlinear at U+ (grad lambda . R = {e0:.2e})")
    tau = np.linspace(0.0, s_i, m)
    dtau = s_i / (m - 1)

    if s_i * e0 < 0:
        def rhs(_t, V):
            return _eigpair(model, V, i, ref)[1]

        sol = solve_ivp(rhs, (0.0, s_i), U_plus, method="DOP853", t_eval=tau, rtol=1e-13, atol=1e-15)
        if not sol.success:
            raise RootFindFailure(f"integral curve failed: {sol.message}")
        V = sol.y.T
        kind = "rarefaction"
    else:
        V, sigma = _hugoniot_branch(model, U_plus, i, s_i, tau, ref)
        kind = "shock"
    if not model.domain.contains(V):
        raise OutOfDomain(f"{i}-wave curve leaves the domain box")
    e1 = _gnl_coefficient(model, V[-1], i, ref)
    if e1 * e0 <= 0 or abs(e1) < gnl_tol:
        raise GNLViolation(f"family {i} loses genuine nonlinearity along the curve")
    lam = _eigpair(model, V, i, ref)[0]
    f = _cumtrapz(lam, dtau)
    if kind == "rarefaction":
        speeds = (float(lam[-1]), float(lam[0]))
        curve = WaveFanCurve(i, float(s_i), tau, V, np.zeros(m), lam.copy(), f, f.copy(),
                             np.arange(m), (), "lax")
    else:
        if not lam[-1] > sigma > lam[0]:
            raise GNLViolation(f"Lax entropy condition fails: {lam[-1]:.6g} > {sigma:.6g} > {lam[0]:.6g}")
        jump = model.flux(V[-1]) - model.flux(U_plus) - sigma * (V[-1] - U_plus)
        if np.max(np.abs(jump)) > 1e-9 * max(1.0, float(np.max(np.abs(V[-1] - U_plus)))):
            raise RootFindFailure(f"Rankine-Hugoniot residual {np.max(np.abs(jump)):.2e}")
        speeds = (sigma,)
        g = sigma * tau
        curve = WaveFanCurve(i, float(s_i), tau, V, f - g, np.full(m, sigma), f, g,
                             np.array([0, m - 1]), (), "lax")
    return LaxResult(V[-1].copy(), kind, speeds, curve)
