"""Sorted real eigendecompositions with reproducible eigenvector orientation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IllConditioned, OutOfDomain, StrictHyperbolicityViolation
from .models import HyperbolicModel, eval_matrix

GAP_TOL = 1e-10
IMAG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SpectralData:
    lambdas: np.ndarray
    R: np.ndarray
    L: np.ndarray

    @property
    def n(self) -> int:
        return self.lambdas.size


def decompose_batch(mats, orient=None, gap_tol: float = GAP_TOL):
    """Vectorised core of :func:`eigendecompose`.

    ``mats`` has shape ``(..., n, n)``; ``orient`` (if given) broadcasts
    against the right-eigenvector arrays. Returns ``(lambdas, R, L)``.
    """
    mats = np.asarray(mats, dtype=float)
    w, V = np.linalg.eig(mats)
    scale = np.maximum(1.0, np.max(np.abs(w), axis=-1, keepdims=True))
    if np.iscomplexobj(w):
        if np.any(np.abs(w.imag) > IMAG_TOL * scale):
            raise StrictHyperbolicityViolation("complex eigenvalues")
        w, V = w.real, V.real
    order = np.argsort(w, axis=-1)
    lam = np.take_along_axis(w, order, axis=-1)
    R = np.take_along_axis(V, order[..., None, :], axis=-1)
    if lam.shape[-1] > 1 and np.any(np.diff(lam, axis=-1) < gap_tol):
        raise StrictHyperbolicityViolation(
            f"eigenvalue gap below {gap_tol:g}: min gap {np.min(np.diff(lam, axis=-1)):.3e}"
        )
    R = R / np.linalg.norm(R, axis=-2, keepdims=True)
    if orient is not None:
        sign = np.sign(np.sum(R * np.asarray(orient, dtype=float), axis=-2, keepdims=True))
    else:
        # first component that is clearly non-zero decides the sign
        big = np.abs(R) > 1e-12
        first = np.argmax(big, axis=-2)[..., None, :]
        sign = np.sign(np.take_along_axis(R, first, axis=-2))
    sign[sign == 0] = 1.0
    R = R * sign
    try:
        L = np.linalg.inv(R)
    except np.linalg.LinAlgError as exc:
        raise StrictHyperbolicityViolation("eigenvector matrix is singular") from exc
    return lam, R, L


def eigendecompose(A, orient=None) -> SpectralData:
    """Real simple spectrum sorted ascending, unit right eigenvectors, L = R^-1.

    Each column of ``R`` is signed to have positive inner product with the
    matching column of ``orient``; without ``orient`` the first non-zero
    component is made positive.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    lam, R, L = decompose_batch(A, orient)
    return SpectralData(lam, R, L)


def spectral_at(model: HyperbolicModel, U, orient=None) -> SpectralData:
    return eigendecompose(eval_matrix(model, U), orient)


def decompose_derivative(model: HyperbolicModel, U, d, orient=None) -> np.ndarray:
    """Coefficients a with d = sum_j a_j R_j(U), i.e. a_j = <L_j(U), d>."""
    sd = spectral_at(model, U, orient)
    return sd.L @ np.asarray(d, dtype=float)


def _left_field_derivative(model: HyperbolicModel, U, R0, h):
    """DL[j, a, m] = d L_j[a] / d U_m by central differences with step h."""
    n = model.n
    shifts = np.concatenate([np.eye(n) * h, -np.eye(n) * h])
    pts = U + shifts
    lam, _, L = decompose_batch(model.matrices(pts), R0)
    if np.any(np.diff(lam, axis=-1) < 1e-6):
        raise IllConditioned("eigenvalues closer than 1e-6 on the difference stencil")
    # L[p, j, a]; plus-shifts first then minus-shifts
    return np.transpose((L[:n] - L[n:]) / (2 * h), (1, 2, 0))


def beta_coefficients(model: HyperbolicModel, U, step: float | None = None,
                      richardson: bool = True) -> np.ndarray:
    """Interaction coefficients beta[j, h, l] = -<DL_j R_h, R_l> at U.

    The left-eigenvector field is differentiated by central differences of
    the orientation-chained decomposition; with ``richardson`` the results
    at steps h and h/2 are combined to cancel the O(h^2) term.
    """
    U = np.asarray(U, dtype=float)
    h = 1e-6 * model.domain.radius if step is None else float(step)
    if h <= 0:
        raise ValueError("step must be positive")
    if model.domain.distance(U) > model.domain.radius - h:
        raise OutOfDomain(f"U={U.tolist()} closer than step={h:g} to the domain boundary")
    sd = spectral_at(model, U)
    if np.any(np.diff(sd.lambdas) < 1e-6):
        raise IllConditioned("eigenvalues closer than 1e-6")
    DL = _left_field_derivative(model, U, sd.R, h)
    if richardson:
        DL_half = _left_field_derivative(model, U, sd.R, h / 2)
        DL = (4.0 * DL_half - DL) / 3.0
    return -np.einsum("jam,mh,al->jhl", DL, sd.R, sd.R)
