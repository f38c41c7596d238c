"""Value types and spectral/grid primitives shared by the rest of the package.

The state space X is L2(0,1). Two concrete representations are used: modal
coefficients against the orthonormal Dirichlet sine basis
phi_j(zeta) = sqrt(2) sin(j pi zeta), and point samples on a uniform grid
including both endpoints. The smoothness ladder is realized through the
Dirichlet eigenvalue weights alpha_j = (j pi)^2: the X_1 norm weights
coefficient j by alpha_j, the X_{-1} norm by 1/alpha_j.

All integrals are composite trapezoid sums on the uniform grid. With n grid
points and n - 1 >= 2N intervals the trapezoid rule reproduces the sine
orthonormality relations exactly for modes j, k <= N, so projection and
synthesis below are mutually consistent to rounding error.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

DEFAULT_MODES = 64
DEFAULT_GRID = 513

_SPACES = ("X", "X1", "X-1")


def dirichlet_eigenvalues(n_modes: int) -> np.ndarray:
    """alpha_j = (j pi)^2 for j = 1..n_modes."""
    j = np.arange(1, n_modes + 1, dtype=float)
    return (j * np.pi) ** 2


def uniform_grid(n: int) -> np.ndarray:
    if n < 2:
        raise ValueError(f"grid needs at least 2 points, got n={n}")
    return np.linspace(0.0, 1.0, n)


def trapezoid_weights(n: int) -> np.ndarray:
    w = np.full(n, 1.0 / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def sine_basis_matrix(n_modes: int, n: int) -> np.ndarray:
    """Rows are phi_1..phi_N sampled on the uniform n-point grid."""
    zeta = uniform_grid(n)
    j = np.arange(1, n_modes + 1, dtype=float)
    return np.sqrt(2.0) * np.sin(np.outer(j, np.pi * zeta))


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class GridFunction:
    """A function on [0,1] sampled on the uniform grid (endpoints included)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        if v.ndim != 1 or v.size < 2:
            raise ValueError("GridFunction needs a 1-d array of >= 2 samples")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def zeta(self) -> np.ndarray:
        return uniform_grid(self.n)

    @classmethod
    def from_callable(cls, fn, n: int = DEFAULT_GRID) -> "GridFunction":
        return cls(np.asarray([fn(z) for z in uniform_grid(n)], dtype=float))

    @classmethod
    def constant(cls, c: float, n: int = DEFAULT_GRID) -> "GridFunction":
        return cls(np.full(n, float(c)))

    def inner(self, other: "GridFunction") -> float:
        if other.n != self.n:
            raise ValueError("grid size mismatch in inner product")
        return float(np.sum(trapezoid_weights(self.n) * self.values * other.values))

    def norm(self) -> float:
        return float(
            np.sqrt(np.sum(trapezoid_weights(self.n) * self.values**2))
        )

    def to_csv(self, path) -> None:
        write_grid_csv(path, self)

    @classmethod
    def from_csv(cls, path) -> "GridFunction":
        return read_grid_csv(path)


@dataclass(frozen=True, eq=False)
class ModalVector:
    """Coefficients c_1..c_N against the sine basis."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if c.ndim != 1 or c.size < 1:
            raise ValueError("ModalVector needs a 1-d coefficient array")
        object.__setattr__(self, "coeffs", _freeze(c))

    @property
    def n_modes(self) -> int:
        return self.coeffs.size

    @classmethod
    def basis(cls, j: int, n_modes: int) -> "ModalVector":
        if not 1 <= j <= n_modes:
            raise ValueError(f"mode index {j} outside 1..{n_modes}")
        c = np.zeros(n_modes)
        c[j - 1] = 1.0
        return cls(c)

    def norm(self, space: str = "X") -> float:
        """Norm in X, X1 or X-1. The ladder weights are alpha_j^{+1,-1}."""
        if space not in _SPACES:
            raise ValueError(f"unknown space {space!r}, expected one of {_SPACES}")
        c2 = self.coeffs**2
        if space == "X":
            return float(np.sqrt(c2.sum()))
        alpha = dirichlet_eigenvalues(self.n_modes)
        if space == "X1":
            return float(np.sqrt((alpha * c2).sum()))
        return float(np.sqrt((c2 / alpha).sum()))

    def to_csv(self, path) -> None:
        write_modal_csv(path, self)

    @classmethod
    def from_csv(cls, path) -> "ModalVector":
        return read_modal_csv(path)


def grid_to_modal(f: GridFunction, n_modes: int) -> ModalVector:
    """Project a grid sample onto the first n_modes sine coefficients.

    Requires n >= 2*n_modes + 1 so the trapezoid rule resolves every
    retained mode without aliasing.
    """
    if f.n < 2 * n_modes + 1:
        raise ValueError(
            f"grid too coarse for N={n_modes} modes: need n >= {2 * n_modes + 1}, got {f.n}"
        )
    phi = sine_basis_matrix(n_modes, f.n)
    return ModalVector(phi @ (trapezoid_weights(f.n) * f.values))


def modal_to_grid(v: ModalVector, n: int = DEFAULT_GRID) -> GridFunction:
    phi = sine_basis_matrix(v.n_modes, n)
    return GridFunction(v.coeffs @ phi)


def potential_matrix(g: GridFunction, n_modes: int) -> np.ndarray:
    """Gram matrix G_jk = <g phi_k, phi_j> of the multiplication operator."""
    if g.n < 2 * n_modes + 1:
        raise ValueError(
            f"grid too coarse for N={n_modes} modes: need n >= {2 * n_modes + 1}, got {g.n}"
        )
    phi = sine_basis_matrix(n_modes, g.n)
    G = phi @ ((trapezoid_weights(g.n) * g.values)[None, :] * phi).T
    return 0.5 * (G + G.T)


class ContractionReport(NamedTuple):
    ok: bool
    margin: float
    mu_max: float


def contraction_condition_check(
    g: GridFunction | None, n_modes: int = DEFAULT_MODES
) -> ContractionReport:
    """Check int g y^2 <= |y|_{H01}^2 over the retained modes.

    In modal coordinates the condition is that the largest eigenvalue of
    diag(alpha^-1/2) G diag(alpha^-1/2) stays <= 1. The returned margin is
    1 - mu_max; a constant potential g = c passes exactly when c <= pi^2.
    """
    if g is None:
        return ContractionReport(True, 1.0, 0.0)
    G = potential_matrix(g, n_modes)
    s = 1.0 / np.sqrt(dirichlet_eigenvalues(n_modes))
    mu = np.linalg.eigvalsh(s[:, None] * G * s[None, :])
    mu_max = float(mu[-1])
    return ContractionReport(mu_max <= 1.0 + 1e-10, 1.0 - mu_max, mu_max)


@dataclass(frozen=True, eq=False)
class SpectralDiffusionModel:
    """Truncated diffusion model x' = A x - rho B x in the sine basis.

    A is diag(-alpha_j) plus the Gram matrix of the bounded potential g,
    B is the square-root multiplier diag(alpha_j^(1/2)). The truncation
    order N and the quadrature grid size n are structural parameters.
    """

    n_modes: int = DEFAULT_MODES
    rho: float = 0.0
    potential: GridFunction | None = None
    n_grid: int = DEFAULT_GRID

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if self.rho < 0:
            raise ValueError("rho must be >= 0")
        if self.n_grid < 2 * self.n_modes + 1:
            raise ValueError(
                f"grid too coarse for N={self.n_modes}: need n >= {2 * self.n_modes + 1}"
            )
        if self.potential is not None and self.potential.n != self.n_grid:
            raise ValueError("potential must be sampled on the model grid")

    @cached_property
    def alpha(self) -> np.ndarray:
        return _freeze(dirichlet_eigenvalues(self.n_modes))

    @cached_property
    def gram(self) -> np.ndarray:
        if self.potential is None:
            return _freeze(np.zeros((self.n_modes, self.n_modes)))
        return _freeze(potential_matrix(self.potential, self.n_modes))

    @cached_property
    def drift_matrix(self) -> np.ndarray:
        return _freeze(np.diag(-self.alpha) + self.gram)

    @cached_property
    def control_diagonal(self) -> np.ndarray:
        return _freeze(np.sqrt(self.alpha))

    @cached_property
    def contraction(self) -> ContractionReport:
        return contraction_condition_check(self.potential, self.n_modes)

    @cached_property
    def drift_eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and orthonormal eigenvectors of the symmetric drift."""
        lam, vec = np.linalg.eigh(self.drift_matrix)
        return _freeze(lam), _freeze(vec)

    def closed_loop_matrix(self, rho: float | None = None) -> np.ndarray:
        r = self.rho if rho is None else rho
        return self.drift_matrix - r * np.diag(self.control_diagonal)

    def fingerprint(self) -> str:
        return model_fingerprint(self)


@dataclass(frozen=True, eq=False)
class TransportModel:
    """Transport model x' = x_zeta - alpha x + nu h x with boundary feedback.

    The inflow boundary sits at zeta = 1 and carries x(1,t) = -eps psi(x(t))
    with psi(x) = int_0^1 f x. The gain eps doubles as the switching
    feedback amplitude.
    """

    n_grid: int = DEFAULT_GRID
    alpha: float = 1.0
    h: GridFunction | None = None
    f: GridFunction | None = None
    epsilon: float = 0.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.h is None:
            object.__setattr__(self, "h", GridFunction.constant(1.0, self.n_grid))
        if self.f is None:
            object.__setattr__(self, "f", GridFunction.constant(1.0, self.n_grid))
        if self.h.n != self.n_grid or self.f.n != self.n_grid:
            raise ValueError("h and f must be sampled on the model grid")

    def psi(self, x: GridFunction) -> float:
        return self.f.inner(x)

    def fingerprint(self) -> str:
        return model_fingerprint(self)


@dataclass(frozen=True)
class StabilityCertificate:
    """Exponential-decay certificate for the switching feedback loop.

    When valid is True the closed loop at gain rho satisfies
    |x(t)| <= K exp(-sigma t) |x0| with K = C2^(-1/2) and
    sigma = -ln(C2)/(2T), provided 0 < rho < 1/(T^(1/p) M) and C2 < 1.
    rho1 is the largest certifiable gain found by bisection, or None.
    provenance tags each constant as analytic, estimate, config or derived.
    """

    path: str
    T: float
    p: float
    M: float
    delta: float
    rho: float
    M_rho: float
    C1: float
    C2: float
    K: float
    sigma: float
    L: float | None = None
    C: float | None = None
    XB_norm: float | None = None
    rho1: float | None = None
    valid: bool = False
    reason: str = ""
    model_id: str = ""
    provenance: dict = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.provenance is None:
            object.__setattr__(self, "provenance", {})
        if self.path not in ("direct", "decomposition"):
            raise ValueError("certificate path must be 'direct' or 'decomposition'")

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "StabilityCertificate":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled solution path with per-sample X norms.

    kind is 'modal' (states hold sine coefficients) or 'grid' (states hold
    point samples). control_active marks samples where the switching law is
    on; it drops to 0 once the norm falls under 1e-14 of the initial norm.
    """

    kind: str
    times: np.ndarray
    states: np.ndarray
    norms: np.ndarray
    gain: float
    model_id: str

    def __post_init__(self):
        t = _freeze(np.atleast_1d(self.times))
        s = np.asarray(self.states, dtype=float)
        if s.ndim != 2 or s.shape[0] != t.size:
            raise ValueError("states must be (len(times), dim)")
        if self.kind not in ("modal", "grid"):
            raise ValueError("kind must be 'modal' or 'grid'")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", _freeze(s))
        object.__setattr__(self, "norms", _freeze(np.atleast_1d(self.norms)))
        if self.norms.size != t.size:
            raise ValueError("norms must align with times")

    @property
    def control_active(self) -> np.ndarray:
        threshold = 1e-14 * self.norms[0]
        return (self.norms > threshold).astype(int)

    def state(self, i: int):
        if self.kind == "modal":
            return ModalVector(self.states[i])
        return GridFunction(self.states[i])

    def to_csv(self, path) -> None:
        write_trajectory_csv(path, self)


# --- deterministic text serialization -------------------------------------
#
# Every float is written with %.17g so a round trip is bit exact and two
# runs with identical inputs produce byte-identical files.


def format_float(x: float) -> str:
    return f"{float(x):.17g}"


def write_grid_csv(path, f: GridFunction) -> None:
    lines = ["zeta,value"]
    for z, v in zip(f.zeta, f.values):
        lines.append(f"{format_float(z)},{format_float(v)}")
    _write_text(path, "\n".join(lines) + "\n")


def read_grid_csv(path) -> GridFunction:
    rows = _read_csv_rows(path, expected_header="zeta,value")
    return GridFunction(np.asarray([float(r[1]) for r in rows]))


def write_modal_csv(path, v: ModalVector) -> None:
    lines = ["j,c_j"]
    for j, c in enumerate(v.coeffs, start=1):
        lines.append(f"{j},{format_float(c)}")
    _write_text(path, "\n".join(lines) + "\n")


def read_modal_csv(path) -> ModalVector:
    rows = _read_csv_rows(path, expected_header="j,c_j")
    return ModalVector(np.asarray([float(r[1]) for r in rows]))


def write_trajectory_csv(path, traj: Trajectory) -> None:
    if traj.kind == "modal":
        header = "t,norm_X," + ",".join(
            f"c_{j}" for j in range(1, traj.states.shape[1] + 1)
        )
        lines = [header]
        for i, t in enumerate(traj.times):
            cells = [format_float(t), format_float(traj.norms[i])]
            cells += [format_float(c) for c in traj.states[i]]
            lines.append(",".join(cells))
    else:
        lines = ["t,norm_X"]
        for i, t in enumerate(traj.times):
            lines.append(f"{format_float(t)},{format_float(traj.norms[i])}")
    _write_text(path, "\n".join(lines) + "\n")


def read_trajectory_csv(path, gain: float = 0.0, model_id: str = "") -> Trajectory:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"empty trajectory file: {path}")
    header = lines[0].split(",")
    if header[:2] != ["t", "norm_X"]:
        raise ValueError(f"unrecognized trajectory header in {path}")
    kind = "modal" if len(header) > 2 else "grid"
    times, norms, states = [], [], []
    for ln in lines[1:]:
        cells = ln.split(",")
        times.append(float(cells[0]))
        norms.append(float(cells[1]))
        states.append([float(c) for c in cells[2:]] if kind == "modal" else [0.0])
    if not times:
        raise ValueError(f"trajectory file has no samples: {path}")
    return Trajectory(
        kind=kind,
        times=np.asarray(times),
        states=np.asarray(states),
        norms=np.asarray(norms),
        gain=gain,
        model_id=model_id,
    )


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _read_csv_rows(path, expected_header: str):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != expected_header:
        raise ValueError(f"expected header {expected_header!r} in {path}")
    return [ln.split(",") for ln in lines[1:]]


def model_fingerprint(model) -> str:
    """Stable hash of the structural model data.

    The switching gain (rho, and epsilon for transport) is excluded on
    purpose: a certificate fixes the model and constrains the admissible
    gain range, so gain mismatches must surface as verification failures
    rather than as different models.
    """
    h = hashlib.sha256()
    if isinstance(model, SpectralDiffusionModel):
        h.update(b"spectral-diffusion\n")
        h.update(f"N={model.n_modes} n={model.n_grid}\n".encode())
        g = model.potential
        h.update(b"g=0\n" if g is None else _array_bytes(g.values))
    elif isinstance(model, TransportModel):
        h.update(b"transport\n")
        h.update(f"n={model.n_grid} alpha={format_float(model.alpha)}\n".encode())
        h.update(_array_bytes(model.h.values))
        h.update(_array_bytes(model.f.values))
    else:
        raise TypeError(f"cannot fingerprint {type(model).__name__}")
    return h.hexdigest()


def _array_bytes(a: np.ndarray) -> bytes:
    return (",".join(format_float(x) for x in np.ravel(a)) + "\n").encode()
