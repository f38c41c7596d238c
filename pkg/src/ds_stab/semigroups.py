"""Semigroup actions for the diffusion and transport models.

The diffusion semigroups act on modal coefficients. The unperturbed one is
the diagonal heat flow exp(-alpha_j t); the perturbed one exponentiates the
symmetric drift diag(-alpha_j) + G through its eigendecomposition, which is
exact up to rounding for the truncation orders used here. The transport
semigroup acts on grid samples by shift and decay and is nilpotent: it
returns the zero function for t >= 1.
"""

from __future__ import annotations

import numpy as np

from .core import (
    GridFunction,
    ModalVector,
    SpectralDiffusionModel,
    TransportModel,
    dirichlet_eigenvalues,
)


def _check_time(t: float) -> float:
    t = float(t)
    if t < 0:
        raise ValueError(f"semigroup time must be >= 0, got {t}")
    return t


def diag_semigroup_apply(t: float, v: ModalVector) -> ModalVector:
    """Heat flow with zero potential: c_j -> exp(-alpha_j t) c_j."""
    t = _check_time(t)
    alpha = dirichlet_eigenvalues(v.n_modes)
    return ModalVector(np.exp(-alpha * t) * v.coeffs)


def perturbed_semigroup_apply(
    model: SpectralDiffusionModel, t: float, v: ModalVector
) -> ModalVector:
    """Flow of the perturbed drift diag(-alpha) + G for time t."""
    t = _check_time(t)
    if v.n_modes != model.n_modes:
        raise ValueError("state size does not match the model truncation")
    lam, vec = model.drift_eigensystem
    return ModalVector(vec @ (np.exp(lam * t) * (vec.T @ v.coeffs)))


def transport_semigroup_apply(
    model: TransportModel, t: float, u: GridFunction
) -> GridFunction:
    """Shift-decay flow (S(t)u)(zeta) = exp(-alpha t) u(zeta + t).

    Points whose characteristic has already left through zeta = 1 are zero,
    so the output vanishes identically once t >= 1. Off-grid lookups use
    linear interpolation; at grid-aligned times the shift is exact and the
    semigroup law holds to rounding error.
    """
    t = _check_time(t)
    if u.n != model.n_grid:
        raise ValueError("state size does not match the model grid")
    if t == 0.0:
        return u
    zeta = u.zeta
    out = np.zeros(model.n_grid)
    inside = zeta + t < 1.0
    if np.any(inside):
        out[inside] = np.exp(-model.alpha * t) * np.interp(
            zeta[inside] + t, zeta, u.values
        )
    return GridFunction(out)


def control_apply(v: ModalVector) -> ModalVector:
    """The square-root control multiplier B: c_j -> alpha_j^(1/2) c_j."""
    alpha = dirichlet_eigenvalues(v.n_modes)
    return ModalVector(np.sqrt(alpha) * v.coeffs)


def yosida_control_apply(lam: float, v: ModalVector) -> ModalVector:
    """Resolvent-regularized control: c_j -> lam alpha_j^(1/2)/(lam + alpha_j) c_j.

    Converges to control_apply mode by mode as lam -> infinity, monotonically
    from below in each coordinate.
    """
    lam = float(lam)
    if lam <= 0:
        raise ValueError(f"regularization parameter must be > 0, got {lam}")
    alpha = dirichlet_eigenvalues(v.n_modes)
    return ModalVector(lam * np.sqrt(alpha) / (lam + alpha) * v.coeffs)
