"""Boundary Riemann solutions and their comparison with viscous profiles.

The boundary relation is

    U_b = phi_s(S, T^{k+1}(s_{k+1}, ... T^n(s_n, U_0) ...))

with T^j the j-wave-fan map (right state in, left state out) and phi_s the
stable-manifold map of the boundary layer at the trace. It is solved for
(S, s_{k+1}, ..., s_n) by Newton with a finite-difference Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers, selfsim, wavefan
from .errors import (
    ComparisonInconclusive,
    InvalidParams,
    IntegrationEscape,
    NewtonDivergence,
    NoLocalSolution,
    OutOfDomain,
)
from .models import HyperbolicModel
from .spectral import spectral_at

PROVIDERS = ("envelope", "lax")


@dataclass(frozen=True)
class FanPiece:
    family: int
    type: str
    speed_lo: float
    speed_hi: float
    left_state: np.ndarray
    right_state: np.ndarray
    start: int  # node range on the family curve
    end: int


@dataclass(frozen=True, eq=False)
class FanSolution:
    U_0: np.ndarray
    U_b: np.ndarray
    S: np.ndarray
    strengths: np.ndarray  # s_{k+1}, ..., s_n
    trace_U_bar: np.ndarray
    curves: tuple  # WaveFanCurve for families k+1..n, in increasing family order
    pieces: tuple  # FanPiece, ordered by increasing speed
    residual: float
    horizon: float
    provider: str
    iterations: int = 0

    @property
    def k(self) -> int:
        return self.S.size


def _curve(model, provider, j, s, U_plus, m):
    if provider == "envelope":
        return wavefan.fan_curve(model, None, j, s, U_plus, m=m)
    return wavefan.lax_oracle(model, j, s, U_plus, m=m).curve


def _compose(model, x, U_0, provider, horizon, m):
    """Forward map (S, s) -> (U_b, trace, curves)."""
    k, n = model.k, model.n
    S, s = x[:k], x[k:]
    V = U_0
    curves = []
    for j in range(n, k, -1):
        c = _curve(model, provider, j, float(s[j - k - 1]), V, m)
        curves.append(c)
        V = c.endpoint
    trace = V
    U_b = layers.phi_s(model, trace, S, horizon)
    return U_b, trace, tuple(reversed(curves))


def boundary_map(model: HyperbolicModel, U_0, S, strengths, provider: str = "envelope",
                 horizon_Y: float | None = None, m: int = wavefan.DEFAULT_NODES) -> np.ndarray:
    """U_b as a function of the layer seed S and the wave strengths s_{k+1..n}."""
    horizon = layers.default_horizon(model) if horizon_Y is None else float(horizon_Y)
    x = np.concatenate([np.atleast_1d(S), np.atleast_1d(strengths)]).astype(float)
    return _compose(model, x, np.asarray(U_0, float), provider, horizon, m)[0]


def _assemble_pieces(curves, k):
    pieces = []
    for offset, c in enumerate(curves):
        fam = k + 1 + offset
        for p in reversed(wavefan.classify(c)):  # slowest piece first
            pieces.append(FanPiece(fam, p.type, p.speed_lo, p.speed_hi, c.V[p.end].copy(),
                                   c.V[p.start].copy(), p.start, p.end))
    return tuple(pieces)


def solve_boundary_riemann(model: HyperbolicModel, U_0, U_b, provider: str = "envelope", *,
                           tol: float = 1e-9, max_iter: int = 40, horizon_Y: float | None = None,
                           m: int = wavefan.DEFAULT_NODES, fd_step: float | None = None) -> FanSolution:
    """Newton solve of U_b = F_{U_0}(S, s_{k+1}, ..., s_n)."""
    if provider not in PROVIDERS:
        raise InvalidParams(f"provider must be one of {PROVIDERS}")
    U_0 = model.check_domain(np.asarray(U_0, dtype=float))
    U_b = model.check_domain(np.asarray(U_b, dtype=float))
    if np.max(np.abs(U_b - U_0)) > 0.5 * model.domain.radius:
        raise InvalidParams("|U_b - U_0| exceeds half the box radius")
    k, n = model.k, model.n
    horizon = layers.default_horizon(model) if horizon_Y is None else float(horizon_Y)
    h = 1e-6 * model.domain.radius if fd_step is None else fd_step

    R0 = spectral_at(model, U_0).R
    x = np.linalg.solve(R0, U_b - U_0)

    def F(x):
        return _compose(model, x, U_0, provider, horizon, m)

    def safe(x):
        try:
            out = F(x)
        except (OutOfDomain, IntegrationEscape):
            return None, np.inf
        return out, float(np.linalg.norm(out[0] - U_b))

    if np.array_equal(U_b, U_0):
        x = np.zeros(n)
    out, res = safe(x)
    if out is None:
        raise NoLocalSolution("initial guess leaves the domain box", residual=np.inf)
    it = 0
    history = [res]
    while res > tol:
        if it >= max_iter:
            raise NewtonDivergence(f"boundary Newton did not converge in {max_iter} iterations "
                                   f"(residual {res:.3e})", history)
        it += 1
        r = out[0] - U_b
        J = np.empty((n, n))
        for c in range(n):
            e = np.zeros(n)
            e[c] = h
            J[:, c] = (F(x + e)[0] - out[0]) / h
        dx = np.linalg.solve(J, -r)
        t = 1.0
        while True:
            out_t, res_t = safe(x + t * dx)
            if res_t < res:
                break
            t *= 0.5
            if t < 1e-4:
                raise NoLocalSolution(f"residual stagnates at {res:.3e}", residual=res)
        x, out, res = x + t * dx, out_t, res_t
        history.append(res)
        if t * np.max(np.abs(dx)) < 1e-15 and res > tol:
            raise NoLocalSolution(f"residual stagnates at {res:.3e}", residual=res)
    _, trace, curves = out
    return FanSolution(U_0, U_b, x[:k].copy(), x[k:].copy(), np.asarray(trace).copy(), curves,
                       _assemble_pieces(curves, k), res, horizon, provider, it)


def _family_state(curve, pieces, speed):
    """State on one family's curve at ``speed`` (pieces ordered fastest first)."""
    V, xi = curve.V, curve.xi
    for p in pieces:
        if p.type == "shock":
            if speed >= p.speed_lo:
                return V[p.start].copy()
            continue
        a, b = p.start, p.end
        if speed >= xi[a]:
            return V[a].copy()
        if speed >= xi[b]:
            # xi is non-increasing in the node index on a rarefaction piece
            seg = xi[a:b + 1]
            i = a + int(np.searchsorted(-seg, -speed, side="left"))
            if xi[i] == speed or i == a:
                return V[i].copy()
            w = (speed - xi[i]) / (xi[i - 1] - xi[i])
            return V[i] + w * (V[i - 1] - V[i])
    return V[-1].copy()


def evaluate_fan(fan: FanSolution, speed: float) -> np.ndarray:
    """Self-similar state at x/t = speed (right-continuous at shocks)."""
    speed = float(speed)
    if not speed >= 0:
        raise InvalidParams("speed must be non-negative")
    k = fan.k
    for offset in range(len(fan.curves) - 1, -1, -1):
        curve = fan.curves[offset]
        if curve.tau.size == 1:
            continue
        fam = k + 1 + offset
        fam_pieces = sorted((p for p in fan.pieces if p.family == fam), key=lambda p: p.start)
        top = fam_pieces[0].speed_hi
        bottom = fam_pieces[-1].speed_lo
        if speed >= top:
            return curve.V[0].copy()
        if speed >= bottom:
            return _family_state(curve, fam_pieces, speed)
    return fan.trace_U_bar.copy()


def shock_speeds(fan: FanSolution) -> list[float]:
    return [p.speed_lo for p in fan.pieces if p.type == "shock"]


# ---------------------------------------------------------------------------
# comparison with viscous profiles


@dataclass(frozen=True)
class ComparisonRow:
    epsilon: float
    l1_fan_dist: float
    sup_inner_dist: float
    weighted_tail: float
    nodes: int
    residual: float


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    fan: FanSolution
    layer_S: np.ndarray
    rows: tuple
    S_fit: np.ndarray | None
    Xi: float
    Z_inner: float
    sup_threshold: float
    profiles: tuple = field(default=(), repr=False)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def l1_nonincreasing(self) -> bool:
        return _nonincreasing(self.column("l1_fan_dist"))

    @property
    def sup_nonincreasing(self) -> bool:
        return _nonincreasing(self.column("sup_inner_dist"))

    @property
    def sup_below_threshold(self) -> bool:
        return bool(self.rows[-1].sup_inner_dist <= self.sup_threshold)

    @property
    def passed(self) -> bool:
        return self.l1_nonincreasing and self.sup_nonincreasing and self.sup_below_threshold

    def l1_slope(self) -> float:
        """Least-squares slope of log L1 distance against log eps."""
        return loglog_slope(self.column("epsilon"), self.column("l1_fan_dist"))


def _nonincreasing(v, rtol=1e-12):
    return bool(np.all(np.diff(v) <= rtol * np.abs(v[:-1]) + 1e-300))


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def default_Xi(model: HyperbolicModel) -> float:
    _, hi = selfsim._speed_bounds(model)
    return float(hi + max(1.0, 0.5 * abs(hi)))


def l1_distance(profile: selfsim.ViscousProfile, fan: FanSolution, xi_low: float,
                xi_high: float | None = None) -> float:
    """int_{xi_low}^{xi_high} |Q(xi) - fan(xi)| dxi with cells split at shock speeds.

    Q is the piecewise-linear interpolant of the profile; each sub-interval
    between fan discontinuities is integrated by the trapezoid rule on the
    profile nodes, using one-sided limits of the fan at the breaks.
    """
    xi_high = profile.Xi if xi_high is None else xi_high
    if xi_low >= xi_high:
        return 0.0
    breaks = sorted(s for s in shock_speeds(fan) if xi_low < s < xi_high)
    edges = [xi_low, *breaks, xi_high]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        inner = profile.xi[(profile.xi > lo) & (profile.xi < hi)]
        pts = np.concatenate([[lo], inner, [hi]])
        Q = np.column_stack([np.interp(pts, profile.xi, profile.Q[:, a]) for a in range(profile.Q.shape[1])])
        # one-sided fan limits at the sub-interval ends
        probe = pts.copy()
        probe[0] = np.nextafter(lo, np.inf)
        probe[-1] = np.nextafter(hi, -np.inf)
        G = np.array([evaluate_fan(fan, p) for p in probe])
        d = np.linalg.norm(Q - G, axis=1)
        total += float(np.sum(0.5 * (d[1:] + d[:-1]) * np.diff(pts)))
    return total


def _initial_guess(model, fan, layer_traj, eps):
    def guess(x):
        G = np.array([evaluate_fan(fan, p) for p in x])
        zeta = x / eps
        inside = zeta <= layer_traj.horizon
        G[inside] += layer_traj.at(zeta[inside]) - fan.trace_U_bar
        return G
    return guess


def compare_limits(model: HyperbolicModel, U_0, U_b, eps_list, Z_inner: float = 20.0, *,
                   provider: str = "envelope", Xi: float | None = None,
                   mesh_policy: selfsim.MeshPolicy = selfsim.MeshPolicy(),
                   sup_threshold: float = 1e-3, fit_seed: bool = True,
                   strict: bool = False, keep_profiles: bool = False) -> ComparisonReport:
    """Measure how viscous profiles approach the fan and the boundary layer.

    Per eps: (a) L1 distance to the fan on [3 eps |log eps|, Xi]; (b) sup over
    zeta in [0, Z_inner] between Q(eps zeta) and the boundary layer; (c) the
    sup of |dV/dzeta| exp(c zeta / 4) over zeta in [Z_inner/2, Z_inner].
    With ``strict`` a failed contract raises ComparisonInconclusive.
    """
    U_0 = np.asarray(U_0, float)
    U_b = np.asarray(U_b, float)
    fan = solve_boundary_riemann(model, U_0, U_b, provider)
    memb = layers.membership(model, fan.trace_U_bar, U_b, horizon_Y=fan.horizon)
    layer = layers.layer_from_seed(model, fan.trace_U_bar, memb.S, fan.horizon,
                                   n_nodes=4001, s_max=model.domain.radius)
    if Z_inner > layer.horizon:
        raise InvalidParams("Z_inner exceeds the layer horizon")
    Xi = default_Xi(model) if Xi is None else float(Xi)
    eps_list = [float(e) for e in eps_list]
    guess = _initial_guess(model, fan, layer, eps_list[0])
    profiles = selfsim.continuation_ladder(model, U_b, U_0, eps_list, Xi, mesh_policy, initial=guess)
    c = model.gap_c
    rows = []
    for prof in profiles:
        eps = prof.epsilon
        xi_low = 3.0 * eps * abs(np.log(eps))
        l1 = l1_distance(prof, fan, xi_low)
        inner = selfsim.inner_rescale(prof, Z_inner)
        sup_b = float(np.max(np.linalg.norm(inner.V - layer.at(inner.zeta), axis=1)))
        tail = inner.zeta >= 0.5 * Z_inner
        wt = float(np.max(np.linalg.norm(inner.dV[tail], axis=1) * np.exp(c * inner.zeta[tail] / 4)))
        rows.append(ComparisonRow(eps, l1, sup_b, wt, prof.xi.size, prof.residual_norm))
    S_fit = None
    if fit_seed and np.any(memb.S):
        inner = selfsim.inner_rescale(profiles[-1], Z_inner)
        S_fit = layers.fit_layer_seed(model, fan.trace_U_bar, inner.zeta, inner.V, memb.S, fan.horizon)
    report = ComparisonReport(fan, memb.S, tuple(rows), S_fit, Xi, Z_inner, sup_threshold,
                              tuple(profiles) if keep_profiles else ())
    if strict and not report.passed:
        raise ComparisonInconclusive(
            f"ladder floor eps={eps_list[-1]:g} reached before thresholds were met")
    return report
