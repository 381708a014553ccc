"""
Uncontrolled host structures described by their modal data.

The host enters every computation only through the modal expansion of its
dynamic flexibility,

    H0^{-1}(w) = Phi diag(1 / (w_r^2 - w^2 + 2j w zeta_r w_r)) Phi^T,

so a host is fully described by its undamped frequencies, modal damping
ratios and mass-normalized mode shapes sampled at the physical degrees of
freedom that matter (force, measurement and absorber attachment points).
Two generators are provided: grounded spring-mass chains and
simply-supported Kirchhoff-Love plates.
"""

from dataclasses import dataclass
import warnings

import numpy as np
import scipy.linalg as la

from .errors import InvalidModelError, SingularHostError


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ModalHostModel:
    """
    Mass-normalized modal description of a host structure.

    Parameters
    ----------
    frequencies : (Nm,) array_like
        Undamped natural frequencies (rad/s), strictly positive, ascending.
    damping_ratios : (Nm,) array_like
        Modal damping ratios in [0, 1).
    mode_shapes : (N, Nm) array_like
        Mass-normalized mode shapes sampled at the N physical dofs.
    points : sequence of (x, y) or None
        Spatial coordinates of each physical dof (plates only).
    mode_labels : sequence or None
        Human-readable label of each mode, e.g. ``(m, n)`` plate indices.
    """

    frequencies: np.ndarray
    damping_ratios: np.ndarray
    mode_shapes: np.ndarray
    points: tuple = None
    mode_labels: tuple = None

    def __post_init__(self):
        w = _frozen(self.frequencies)
        z = _frozen(self.damping_ratios)
        phi = _frozen(np.atleast_2d(self.mode_shapes))
        if w.ndim != 1 or z.shape != w.shape:
            raise InvalidModelError(
                "frequencies and damping_ratios must be 1-D arrays of equal length"
            )
        if phi.shape[1] != w.size:
            raise InvalidModelError(
                f"mode_shapes has {phi.shape[1]} columns but {w.size} frequencies given"
            )
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InvalidModelError("frequencies must be finite and strictly positive")
        if np.any(np.diff(w) < 0):
            raise InvalidModelError("frequencies must be sorted ascending")
        if np.any(z < 0) or np.any(z >= 1):
            raise InvalidModelError("damping ratios must lie in [0, 1)")
        if self.points is not None and len(self.points) != phi.shape[0]:
            raise InvalidModelError("one point per physical dof is required")
        if self.mode_labels is not None and len(self.mode_labels) != w.size:
            raise InvalidModelError("one label per mode is required")
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "damping_ratios", z)
        object.__setattr__(self, "mode_shapes", phi)
        if self.points is not None:
            object.__setattr__(
                self, "points", tuple((float(x), float(y)) for x, y in self.points)
            )
        if self.mode_labels is not None:
            object.__setattr__(self, "mode_labels", tuple(self.mode_labels))

    @property
    def n_dofs(self):
        return self.mode_shapes.shape[0]

    @property
    def n_modes(self):
        return self.frequencies.size

    @property
    def undamped(self):
        return bool(np.all(self.damping_ratios == 0.0))

    def dof_at(self, x, y, tol=1e-12):
        """Index of the physical dof located at ``(x, y)``."""
        if self.points is None:
            raise InvalidModelError("this model has no spatial coordinates")
        for i, (px, py) in enumerate(self.points):
            if abs(px - x) <= tol and abs(py - y) <= tol:
                return i
        raise InvalidModelError(f"no sampled dof at ({x}, {y})")

    def mode_index(self, label):
        """Index of the mode whose label equals ``label``."""
        if self.mode_labels is None:
            return int(label)
        key = tuple(label) if np.ndim(label) else label
        for i, lab in enumerate(self.mode_labels):
            if lab == key:
                return i
        raise InvalidModelError(f"no retained mode labelled {label!r}")

    def unit_vector(self, dof):
        """Localization vector selecting one physical dof."""
        if not 0 <= dof < self.n_dofs:
            raise InvalidModelError(f"dof {dof} out of range (model has {self.n_dofs})")
        e = np.zeros(self.n_dofs)
        e[dof] = 1.0
        return e

    def replace(self, **changes):
        kw = dict(
            frequencies=self.frequencies,
            damping_ratios=self.damping_ratios,
            mode_shapes=self.mode_shapes,
            points=self.points,
            mode_labels=self.mode_labels,
        )
        kw.update(changes)
        return ModalHostModel(**kw)


@dataclass(frozen=True)
class ChainSpec:
    """
    Grounded spring-mass(-damper) chain.

    ``spring_stiffnesses[0]`` connects the first mass to the ground and
    ``spring_stiffnesses[i]`` connects mass ``i-1`` to mass ``i``. A list one
    longer than ``masses`` closes the chain to the ground on the right.
    ``damper_coefficients`` follows the same layout.
    """

    masses: tuple
    spring_stiffnesses: tuple
    damper_coefficients: tuple = None
    forced_dof: int = 0
    measured_dof: int = 0

    def validate(self):
        m = np.asarray(self.masses, dtype=float)
        k = np.asarray(self.spring_stiffnesses, dtype=float)
        n = m.size
        problems = []
        if n == 0:
            problems.append("at least one mass is required")
        if np.any(m <= 0):
            problems.append("all masses must be positive")
        if k.size not in (n, n + 1):
            problems.append(f"expected {n} or {n + 1} springs, got {k.size}")
        elif np.any(k < 0):
            problems.append("spring stiffnesses must be non-negative")
        else:
            for i in range(n):
                right = k[i + 1] if i + 1 < k.size else 0.0
                if k[i] <= 0 and right <= 0:
                    problems.append(f"mass {i} has no positive spring attached")
        if self.damper_coefficients is not None:
            c = np.asarray(self.damper_coefficients, dtype=float)
            if c.size != k.size:
                problems.append("damper_coefficients must match spring_stiffnesses in length")
            elif np.any(c < 0):
                problems.append("damper coefficients must be non-negative")
        for name in ("forced_dof", "measured_dof"):
            d = getattr(self, name)
            if not 0 <= d < max(n, 1):
                problems.append(f"{name}={d} out of range")
        if problems:
            raise InvalidModelError("; ".join(problems))


def _chain_matrix(values, n):
    v = np.asarray(values, dtype=float)
    mat = np.zeros((n, n))
    for i in range(n):
        mat[i, i] += v[i]
        if i + 1 < v.size:
            mat[i, i] += v[i + 1]
            if i + 1 < n:
                mat[i, i + 1] -= v[i + 1]
                mat[i + 1, i] -= v[i + 1]
    return mat


def assemble_chain(spec):
    """Return the physical ``(M0, C0, K0)`` matrices of a chain."""
    spec.validate()
    n = len(spec.masses)
    M = np.diag(np.asarray(spec.masses, dtype=float))
    K = _chain_matrix(spec.spring_stiffnesses, n)
    if spec.damper_coefficients is None:
        C = np.zeros((n, n))
    else:
        C = _chain_matrix(spec.damper_coefficients, n)
    return M, C, K


def modal_from_matrices(M, K, C=None, offdiag_tol=1e-6):
    """
    Modal data of a symmetric second-order system.

    Damping is projected on the undamped modes and only the diagonal is
    kept, ``zeta_r = phi_r^T C phi_r / (2 w_r)``. A warning is issued when
    the discarded off-diagonal part exceeds ``offdiag_tol`` relative to the
    diagonal.
    """
    M = np.asarray(M, dtype=float)
    K = np.asarray(K, dtype=float)
    for name, mat in (("M0", M), ("K0", K)):
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise InvalidModelError(f"{name} must be square")
        if not np.allclose(mat, mat.T, rtol=1e-12, atol=0.0):
            raise InvalidModelError(f"{name} must be symmetric")
    try:
        lam, phi = la.eigh(K, M)
    except la.LinAlgError as exc:
        raise InvalidModelError(f"mass matrix is not positive definite: {exc}") from None
    if np.any(lam <= 0):
        raise InvalidModelError(
            "stiffness matrix is not positive definite (rigid-body or unstable modes)"
        )
    # deterministic sign: first significant entry of each mode is positive
    for r in range(phi.shape[1]):
        col = phi[:, r]
        i = np.flatnonzero(np.abs(col) > 1e-8 * np.abs(col).max())[0]
        if col[i] < 0:
            phi[:, r] = -col
    w = np.sqrt(lam)
    if C is None:
        zeta = np.zeros_like(w)
    else:
        C = np.asarray(C, dtype=float)
        if not np.allclose(C, C.T, rtol=1e-12, atol=0.0):
            raise InvalidModelError("C0 must be symmetric")
        Cm = phi.T @ C @ phi
        diag = np.diag(Cm).copy()
        off = Cm - np.diag(diag)
        scale = np.abs(diag).max()
        if scale > 0 and np.abs(off).max() > offdiag_tol * scale:
            warnings.warn(
                "damping matrix is not proportional; off-diagonal modal "
                "damping terms are discarded",
                stacklevel=2,
            )
        zeta = diag / (2.0 * w)
    return ModalHostModel(w, zeta, phi)


def build_chain_modal(spec):
    """Mass-normalized modal model of a grounded chain."""
    M, C, K = assemble_chain(spec)
    if spec.damper_coefficients is None:
        C = None
    return modal_from_matrices(M, K, C)


@dataclass(frozen=True)
class PlateSpec:
    """
    Simply-supported rectangular Kirchhoff-Love plate.

    Lengths in m, ``young_modulus`` in Pa, ``density`` in kg/m^3. Modes
    ``(m, n)`` with ``1 <= m <= max_m`` and ``1 <= n <= max_n`` are retained.
    """

    length: float
    width: float
    thickness: float
    young_modulus: float
    poisson_ratio: float
    density: float
    max_m: int = 10
    max_n: int = 10
    sample_points: tuple = ()
    force_location: tuple = None
    measurement_location: tuple = None
    absorber_locations: tuple = ()
    damping_ratio: float = 0.0
    frequency_convention: str = "halved"

    def validate(self):
        problems = []
        for name in ("length", "width", "thickness", "young_modulus", "density"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        if not 0 < self.poisson_ratio < 0.5:
            problems.append("poisson_ratio must lie in (0, 0.5)")
        if self.max_m < 1 or self.max_n < 1:
            problems.append("mode cutoffs must be >= 1")
        if not 0 <= self.damping_ratio < 1:
            problems.append("damping_ratio must lie in [0, 1)")
        if self.frequency_convention not in ("halved", "textbook"):
            problems.append("frequency_convention must be 'halved' or 'textbook'")
        for p in self.all_locations():
            x, y = p
            if not (0 <= x <= self.length and 0 <= y <= self.width):
                problems.append(f"location {p} lies outside the plate")
        if problems:
            raise InvalidModelError("; ".join(problems))

    def all_locations(self):
        """Force, measurement, absorber and sample points, duplicates removed."""
        locs = []
        for p in (self.force_location, self.measurement_location,
                  *self.absorber_locations, *self.sample_points):
            if p is None:
                continue
            p = (float(p[0]), float(p[1]))
            if p not in locs:
                locs.append(p)
        return locs

    @property
    def bending_stiffness(self):
        h = self.thickness
        return self.young_modulus * h**3 / (12.0 * (1.0 - self.poisson_ratio**2))

    @property
    def mass(self):
        return self.density * self.length * self.width * self.thickness

    def frequency(self, m, n):
        """Natural frequency of mode ``(m, n)`` in rad/s."""
        surface_density = self.density * self.thickness
        if self.frequency_convention == "halved":
            surface_density = 2.0 * surface_density
        wave = (m * np.pi / self.length) ** 2 + (n * np.pi / self.width) ** 2
        return np.sqrt(self.bending_stiffness / surface_density) * wave

    def mode_shape(self, m, n, x, y):
        """Mass-normalized mode shape ``phi_mn`` evaluated at ``(x, y)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (2.0 / np.sqrt(self.mass)
                * np.sin(m * np.pi * x / self.length)
                * np.sin(n * np.pi * y / self.width))

    def mode_indices(self):
        """Retained ``(m, n)`` pairs sorted by ascending frequency."""
        pairs = [(m, n) for m in range(1, self.max_m + 1) for n in range(1, self.max_n + 1)]
        return sorted(pairs, key=lambda mn: (self.frequency(*mn), mn))

    def with_changes(self, **changes):
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return PlateSpec(**kw)


def build_plate_modal(spec):
    """
    Modal model of a simply-supported plate sampled at its points of interest.

    The physical dofs are the union of force, measurement, absorber and
    sample locations, in that order.
    """
    spec.validate()
    pts = spec.all_locations()
    if not pts:
        raise InvalidModelError("plate model needs at least one location")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    modes = spec.mode_indices()
    w = np.array([spec.frequency(m, n) for m, n in modes])
    phi = np.column_stack([spec.mode_shape(m, n, xs, ys) for m, n in modes])
    zeta = np.full(w.size, float(spec.damping_ratio))
    return ModalHostModel(w, zeta, phi, points=pts, mode_labels=modes)


def modal_receptance(model, omega):
    """Diagonal modal receptances ``1/(w_r^2 - w^2 + 2j w zeta_r w_r)``."""
    w_r = model.frequencies
    den = w_r**2 - omega**2 + 2j * omega * model.damping_ratios * w_r
    hit = np.flatnonzero(den == 0)
    if hit.size:
        raise SingularHostError(int(hit[0]), omega)
    return 1.0 / den


def modal_receptance_derivative(model, omega, d=None):
    """Derivative of :func:`modal_receptance` with respect to ``omega``."""
    if d is None:
        d = modal_receptance(model, omega)
    ddw = -2.0 * omega + 2j * model.damping_ratios * model.frequencies
    return -ddw * d**2


def host_flexibility_apply(model, omega, right_vectors):
    """
    Apply the host dynamic flexibility to a block of vectors.

    Returns ``H0^{-1}(omega) @ V`` through the modal expansion; no
    ``N x N`` matrix is formed or factorized.
    """
    V = np.asarray(right_vectors)
    d = modal_receptance(model, omega)
    phi = model.mode_shapes
    proj = phi.T @ V
    if proj.ndim == 1:
        return phi @ (d * proj)
    return phi @ (d[:, None] * proj)


def plate_static_displacement(spec, unit_force=1.0):
    """
    Static displacement at the measurement point due to a point force.

    Sum over the retained modes of ``phi(x_u) phi(x_f) / w_mn^2 * f``.
    """
    if spec.force_location is None or spec.measurement_location is None:
        raise InvalidModelError("force and measurement locations are required")
    xu, yu = spec.measurement_location
    xf, yf = spec.force_location
    total = 0.0
    for m, n in spec.mode_indices():
        total += (spec.mode_shape(m, n, xu, yu) * spec.mode_shape(m, n, xf, yf)
                  / spec.frequency(m, n) ** 2)
    return float(total * unit_force)
