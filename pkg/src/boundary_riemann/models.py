"""Hyperbolic systems as evaluable matrix fields, plus the built-in model zoo.

Every matrix field takes states of shape ``(..., n)`` and returns matrices of
shape ``(..., n, n)``, so the solvers can evaluate whole meshes at once.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from .errors import (
    BoundaryRiemannError,
    HyperbolicityCheckFailed,
    InvalidParams,
    NonCharacteristicViolation,
    NonUniformSignature,
    OutOfDomain,
)

BUILTIN_NAMES = ("linear", "p_system", "noncons_demo")
DEFAULT_RADIUS = 0.25
DEFAULT_GRID = 9
DEFAULT_LINEAR_A = ((-1.0, 0.0), (0.0, 2.0))
# builtins take 90% of the observed spectral gap when gap_c is not given
GAP_SAFETY = 0.9


class MissingFlux(BoundaryRiemannError, AttributeError):
    pass


@dataclass(frozen=True, eq=False)
class DomainBox:
    """Sup-norm box ``|U - center|_inf <= radius``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.array(self.center, dtype=float).reshape(-1)
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        if not np.isfinite(self.radius) or self.radius <= 0:
            raise InvalidParams(f"domain radius must be positive, got {self.radius}")

    @property
    def n(self) -> int:
        return self.center.size

    def distance(self, U) -> float:
        return float(np.max(np.abs(np.asarray(U, dtype=float) - self.center)))

    def contains(self, U, inflate: float = 1.0) -> bool:
        U = np.asarray(U, dtype=float)
        dev = np.abs(U - self.center)
        return bool(np.all(dev <= self.radius * inflate * (1 + 1e-12)))

    def grid(self, per_axis: int) -> np.ndarray:
        axes = [np.linspace(c - self.radius, c + self.radius, per_axis) for c in self.center]
        return np.array(list(itertools.product(*axes)))


@dataclass(frozen=True, eq=False)
class HyperbolicModel:
    name: str
    n: int
    matrix_eval: Callable[[np.ndarray], np.ndarray]
    domain: DomainBox
    gap_c: float
    k: int
    flux_eval: Callable[[np.ndarray], np.ndarray] | None = None
    params: Mapping[str, Any] = field(default_factory=dict)

    @property
    def conservative(self) -> bool:
        return self.flux_eval is not None

    def check_domain(self, U, inflate: float = 1.0) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        if U.shape[-1] != self.n:
            raise InvalidParams(f"state has dimension {U.shape[-1]}, model has n={self.n}")
        if not self.domain.contains(U, inflate):
            raise OutOfDomain(
                f"{self.name}: state {np.array2string(U, precision=6)} outside box "
                f"center={self.domain.center.tolist()} radius={self.domain.radius}"
            )
        return U

    def matrices(self, U) -> np.ndarray:
        """Batched, unchecked evaluation of A(U)."""
        return self.matrix_eval(np.asarray(U, dtype=float))

    def flux(self, U) -> np.ndarray:
        if self.flux_eval is None:
            raise MissingFlux(f"model {self.name!r} is non-conservative and has no flux")
        return self.flux_eval(np.asarray(U, dtype=float))


@dataclass(frozen=True)
class VerifyReport:
    k: int
    worst_gap: float
    max_jacobian_mismatch: float | None
    non_characteristic: bool
    n_points: int


def eval_matrix(model: HyperbolicModel, U) -> np.ndarray:
    U = model.check_domain(U)
    if U.ndim != 1:
        raise InvalidParams("eval_matrix takes a single state")
    return np.array(model.matrices(U), dtype=float)


def flux_jacobian_fd(flux: Callable, U, h: float) -> np.ndarray:
    """Central finite-difference Jacobian of a flux at one state."""
    U = np.asarray(U, dtype=float)
    n = U.size
    J = np.empty((n, n))
    for m in range(n):
        e = np.zeros(n)
        e[m] = h
        J[:, m] = (flux(U + e) - flux(U - e)) / (2 * h)
    return J


def integrability_defect(model: HyperbolicModel, U, h: float = 1e-5) -> float:
    """Largest violation of dA_ij/du_l == dA_il/du_j at U.

    A Jacobian matrix field has symmetric mixed partials in the last two
    slots; a non-zero defect proves no flux exists.
    """
    U = np.asarray(U, dtype=float)
    n = model.n
    dA = np.empty((n, n, n))
    for m in range(n):
        e = np.zeros(n)
        e[m] = h
        dA[:, :, m] = (model.matrices(U + e) - model.matrices(U - e)) / (2 * h)
    return float(np.max(np.abs(dA - np.swapaxes(dA, 1, 2))))


def verify_model(model: HyperbolicModel, grid_per_axis: int = DEFAULT_GRID,
                 jacobian_step: float | None = None) -> VerifyReport:
    """Grid certification of strict hyperbolicity and the non-characteristic gap."""
    if grid_per_axis < 2:
        raise InvalidParams("grid_per_axis must be >= 2")
    pts = model.domain.grid(grid_per_axis)
    mats = model.matrices(pts)
    eigs = np.linalg.eigvals(mats)
    scale = np.maximum(1.0, np.max(np.abs(eigs), axis=-1))
    if np.any(np.abs(eigs.imag) > 1e-10 * scale[:, None]):
        bad = pts[np.argmax(np.max(np.abs(eigs.imag), axis=-1))]
        raise HyperbolicityCheckFailed(f"complex eigenvalues at U={bad.tolist()}")
    lam = np.sort(eigs.real, axis=-1)
    gaps = np.diff(lam, axis=-1)
    if gaps.size and np.any(gaps < 1e-10 * scale[:, None]):
        bad = pts[np.argmin(np.min(gaps, axis=-1))]
        raise HyperbolicityCheckFailed(f"multiple eigenvalue at U={bad.tolist()}")
    ks = np.sum(lam < 0, axis=-1)
    if np.any(ks != ks[0]):
        raise NonUniformSignature(f"negative-eigenvalue count varies over grid: {sorted(set(ks.tolist()))}")
    worst_gap = float(np.min(np.abs(lam)))
    mismatch = None
    if model.flux_eval is not None:
        h = jacobian_step if jacobian_step is not None else 1e-5 * model.domain.radius
        mismatch = max(
            float(np.max(np.abs(flux_jacobian_fd(model.flux_eval, U, h) - mats[i])))
            for i, U in enumerate(pts)
        )
    return VerifyReport(
        k=int(ks[0]),
        worst_gap=worst_gap,
        max_jacobian_mismatch=mismatch,
        non_characteristic=worst_gap > model.gap_c,
        n_points=len(pts),
    )


# ---------------------------------------------------------------------------
# model zoo


def _linear_parts(params):
    A = np.array(params.get("A", DEFAULT_LINEAR_A), dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidParams(f"A must be square, got shape {A.shape}")
    A.setflags(write=False)

    def matrix(U):
        U = np.asarray(U, dtype=float)
        return np.broadcast_to(A, U.shape[:-1] + A.shape).copy()

    def flux(U):
        return np.asarray(U, dtype=float) @ A.T

    return A.shape[0], matrix, flux, np.zeros(A.shape[0])


def _p_system_parts(params):
    gamma = float(params.get("gamma", 1.4))
    if not gamma > 1:
        raise InvalidParams(f"p-system needs gamma > 1, got {gamma}")
    q = float(params.get("pressure_quad", 0.0))
    v_ref = float(params.get("v_ref", 1.0))

    def pressure(v):
        return v ** -gamma - q * (v - v_ref) ** 2

    def dpressure(v):
        return -gamma * v ** (-gamma - 1) - 2 * q * (v - v_ref)

    def matrix(U):
        U = np.asarray(U, dtype=float)
        out = np.zeros(U.shape[:-1] + (2, 2))
        out[..., 0, 1] = -1.0
        out[..., 1, 0] = dpressure(U[..., 0])
        return out

    def flux(U):
        U = np.asarray(U, dtype=float)
        return np.stack([-U[..., 1], pressure(U[..., 0])], axis=-1)

    return 2, matrix, flux, np.array([1.0, 0.0])


def _noncons_parts(params):
    a = float(params.get("a", 0.5))
    b = float(params.get("b", 0.3))
    c = float(params.get("c", -0.2))

    def matrix(U):
        U = np.asarray(U, dtype=float)
        u1, u2 = U[..., 0], U[..., 1]
        out = np.empty(U.shape[:-1] + (2, 2))
        out[..., 0, 0] = -1.0 + a * u1
        out[..., 0, 1] = b * u1
        out[..., 1, 0] = c * u2
        out[..., 1, 1] = 1.0 + a * u2
        return out

    return 2, matrix, None, np.zeros(2)


_FACTORIES = {
    "linear": _linear_parts,
    "p_system": _p_system_parts,
    "noncons_demo": _noncons_parts,
}


def make_model(name: str, n: int, matrix_eval: Callable, domain: DomainBox, *,
               flux_eval: Callable | None = None, gap_c: float | None = None,
               params: Mapping[str, Any] | None = None,
               grid_per_axis: int = DEFAULT_GRID) -> HyperbolicModel:
    """Build a model from raw callables and certify it on a sampling grid.

    When ``gap_c`` is omitted it is set to 90% of the smallest |eigenvalue|
    observed on the grid.
    """
    if not 2 <= n <= 4:
        raise InvalidParams(f"dimension n={n} unsupported (2 <= n <= 4)")
    if domain.n != n:
        raise InvalidParams(f"domain center has dimension {domain.n}, expected {n}")
    probe = HyperbolicModel(name, n, matrix_eval, domain, gap_c=gap_c or 1e-300, k=0,
                            flux_eval=flux_eval, params=dict(params or {}))
    report = verify_model(probe, grid_per_axis)
    if gap_c is None:
        gap_c = GAP_SAFETY * report.worst_gap
    if not gap_c > 0 or report.worst_gap <= gap_c:
        raise NonCharacteristicViolation(
            f"{name}: smallest |eigenvalue| {report.worst_gap:.6g} does not exceed gap_c={gap_c}"
        )
    if not 1 <= report.k <= n - 1:
        raise NonCharacteristicViolation(f"{name}: k={report.k} outside 1..n-1")
    return HyperbolicModel(name, n, matrix_eval, domain, gap_c=float(gap_c), k=report.k,
                           flux_eval=flux_eval, params=dict(params or {}))


def builtin(name: str, params: Mapping[str, Any] | None = None) -> HyperbolicModel:
    """Construct and validate one of the built-in models.

    Recognised keys besides the model parameters: ``center``, ``radius``,
    ``gap_c``, ``grid_per_axis``.

    linear
        ``A``: constant matrix.
    p_system
        ``gamma`` (> 1), optional ``pressure_quad`` and ``v_ref`` for the
        perturbed pressure ``v**-gamma - pressure_quad*(v - v_ref)**2``.
    noncons_demo
        ``a``, ``b``, ``c`` in ``A = [[-1 + a u1, b u1], [c u2, 1 + a u2]]``.
    """
    params = dict(params or {})
    if name not in _FACTORIES:
        raise InvalidParams(f"unknown model {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
    n, matrix, flux, default_center = _FACTORIES[name](params)
    center = np.array(params.get("center", default_center), dtype=float)
    radius = float(params.get("radius", DEFAULT_RADIUS))
    domain = DomainBox(center, radius)
    if name == "p_system" and center[0] - radius <= 0:
        raise InvalidParams("p-system domain must keep the specific volume v > 0")
    gap_c = params.get("gap_c")
    return make_model(name, n, matrix, domain, flux_eval=flux,
                      gap_c=None if gap_c is None else float(gap_c), params=params,
                      grid_per_axis=int(params.get("grid_per_axis", DEFAULT_GRID)))


def model_from_config(config: Mapping[str, Any]) -> HyperbolicModel:
    """Model from a mapping with ``name``, ``params``, ``domain`` and ``gap_c``."""
    if "name" not in config:
        raise InvalidParams("model config needs a 'name'")
    params = dict(config.get("params", {}))
    domain = config.get("domain", {})
    if "center" in domain:
        params["center"] = domain["center"]
    if "radius" in domain:
        params["radius"] = domain["radius"]
    if config.get("gap_c") is not None:
        params["gap_c"] = config["gap_c"]
    return builtin(config["name"], params)


def load_model(path) -> HyperbolicModel:
    with open(Path(path), encoding="utf-8") as fh:
        return model_from_config(json.load(fh))
