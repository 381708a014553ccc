"""
Compliance of a host structure fitted with tuned mass dampers.

Each absorber adds a rank-one term to the host dynamic stiffness,
``Hc = H0 + B H_A B^T``, so the controlled flexibility follows from the
Sherman-Morrison-Woodbury identity with a single ``Na x Na`` solve per
frequency. Everything is evaluated in modal coordinates: with
``D = diag(modal receptances)`` and ``Bm = Phi^T B``,

    h = u^T D f - (u^T D Bm) S^{-1} (Bm^T D f),   S = H_A^{-1} + Bm^T D Bm,

where ``u = Phi^T w_u`` and ``f = Phi^T w_f``.
"""

from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np
import scipy.linalg as la

from .errors import (
    AbsorberSingularityError,
    GradientUndefinedError,
    IllConditionedUpdateError,
    InvalidModelError,
    KernelUncoupledError,
    OracleSingularError,
    SingularHostError,
)
from .host import modal_receptance, modal_receptance_derivative

#: relative distance to an undamped host resonance below which the
#: generalized-inverse route replaces the Woodbury update
SINGULAR_WINDOW = 1e-8

PARAMETER_NAMES = ("m", "c", "k")


@dataclass(frozen=True, eq=False)
class AbsorberSet:
    """
    Grounded-host tuned mass dampers, one attachment dof each.

    Parameters
    ----------
    masses, dampings, stiffnesses : (Na,) array_like
        Absorber mass (kg), viscous damping (N s/m) and stiffness (N/m).
    dofs : (Na,) sequence of int
        Host physical dof each absorber is attached to.
    """

    masses: np.ndarray
    dampings: np.ndarray
    stiffnesses: np.ndarray
    dofs: tuple

    def __post_init__(self):
        m = np.array(self.masses, dtype=float).reshape(-1)
        c = np.array(self.dampings, dtype=float).reshape(-1)
        k = np.array(self.stiffnesses, dtype=float).reshape(-1)
        dofs = tuple(int(d) for d in np.atleast_1d(self.dofs))
        if not (m.size == c.size == k.size == len(dofs)):
            raise InvalidModelError("absorber arrays and dofs must have equal length")
        if np.any(m < 0) or np.any(c < 0) or np.any(k < 0):
            raise InvalidModelError("absorber parameters must be non-negative")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(c)) and np.all(np.isfinite(k))):
            raise InvalidModelError("absorber parameters must be finite")
        bad = np.flatnonzero((m > 0) & (c == 0) & (k == 0))
        if bad.size:
            raise InvalidModelError(
                f"absorber {int(bad[0])} has mass but neither spring nor damper"
            )
        for a in (m, c, k):
            a.setflags(write=False)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "dampings", c)
        object.__setattr__(self, "stiffnesses", k)
        object.__setattr__(self, "dofs", dofs)

    def __len__(self):
        return len(self.dofs)

    @classmethod
    def empty(cls):
        return cls([], [], [], ())

    @classmethod
    def from_params(cls, xi, dofs):
        """Build from the flat vector ``[m1, c1, k1, m2, c2, k2, ...]``."""
        xi = np.asarray(xi, dtype=float).reshape(-1, 3)
        return cls(xi[:, 0], xi[:, 1], xi[:, 2], dofs)

    def params(self):
        """Flat parameter vector ``[m1, c1, k1, m2, c2, k2, ...]``."""
        return np.column_stack([self.masses, self.dampings, self.stiffnesses]).reshape(-1)

    def with_params(self, xi):
        return AbsorberSet.from_params(xi, self.dofs)

    @property
    def total_mass(self):
        return float(self.masses.sum())

    def localization(self, n_dofs):
        """Localization matrix ``B`` (n_dofs x Na)."""
        B = np.zeros((n_dofs, len(self)))
        for n, d in enumerate(self.dofs):
            if not 0 <= d < n_dofs:
                raise InvalidModelError(f"absorber {n} attached to missing dof {d}")
            B[d, n] = 1.0
        return B

    def active(self, mass_floor=0.0):
        """Mask of absorbers taking part in the update."""
        return self.masses > mass_floor


@dataclass(frozen=True, eq=False)
class ComplianceChannel:
    """Output selection ``w_u``, forcing distribution ``w_f`` and reporting scale."""

    w_u: np.ndarray
    w_f: np.ndarray
    normalization: float = 1.0

    def __post_init__(self):
        wu = np.array(self.w_u, dtype=float).reshape(-1)
        wf = np.array(self.w_f, dtype=float).reshape(-1)
        if wu.shape != wf.shape:
            raise InvalidModelError("w_u and w_f must have equal length")
        if not np.any(wu) or not np.any(wf):
            raise InvalidModelError("w_u and w_f must be nonzero")
        if not self.normalization > 0:
            raise InvalidModelError("normalization must be positive")
        wu.setflags(write=False)
        wf.setflags(write=False)
        object.__setattr__(self, "w_u", wu)
        object.__setattr__(self, "w_f", wf)
        object.__setattr__(self, "normalization", float(self.normalization))

    @classmethod
    def point(cls, n_dofs, measured_dof, forced_dof, normalization=1.0):
        wu = np.zeros(n_dofs)
        wf = np.zeros(n_dofs)
        wu[measured_dof] = 1.0
        wf[forced_dof] = 1.0
        return cls(wu, wf, normalization)

    def swapped(self):
        return ComplianceChannel(self.w_f, self.w_u, self.normalization)


def absorber_dynamic_stiffness(absorbers, omega):
    """
    Diagonal of ``H_A(omega)``.

    Entry ``n`` is ``-w^2 (jw c + k) m / (-w^2 m + jw c + k)``.
    """
    m, c, k = absorbers.masses, absorbers.dampings, absorbers.stiffnesses
    num = -omega**2 * (1j * omega * c + k) * m
    den = -omega**2 * m + 1j * omega * c + k
    out = np.zeros(len(absorbers), dtype=complex)
    live = m > 0
    if np.any(den[live] == 0):
        n = int(np.flatnonzero(live & (den == 0))[0])
        raise AbsorberSingularityError(
            f"undamped absorber {n} driven exactly at its natural frequency"
        )
    out[live] = num[live] / den[live]
    return out


def absorber_inverse_stiffness(absorbers, omega, mask=None):
    """Diagonal of ``H_A^{-1}`` formed entrywise as ``1/(k + jwc) - 1/(m w^2)``."""
    m, c, k = absorbers.masses, absorbers.dampings, absorbers.stiffnesses
    if mask is not None:
        m, c, k = m[mask], c[mask], k[mask]
    return 1.0 / (k + 1j * omega * c) - 1.0 / (m * omega**2)


def _modal_projections(model, absorbers, channel, mask):
    phi = model.mode_shapes
    Bm = phi[list(np.asarray(absorbers.dofs)[mask]), :].T if np.any(mask) else np.zeros((model.n_modes, 0))
    return phi.T @ channel.w_u, phi.T @ channel.w_f, Bm


def _check_dofs(model, absorbers, channel):
    if channel.w_u.size != model.n_dofs:
        raise InvalidModelError(
            f"channel has {channel.w_u.size} dofs, model has {model.n_dofs}"
        )
    for n, d in enumerate(absorbers.dofs):
        if not 0 <= d < model.n_dofs:
            raise InvalidModelError(f"absorber {n} attached to missing dof {d}")


def singular_mode(model, omega, window=SINGULAR_WINDOW):
    """Indices of undamped modes whose frequency lies within the window of ``omega``."""
    w_r = model.frequencies
    near = (model.damping_ratios == 0) & (np.abs(abs(omega) - w_r) < window * w_r)
    return np.flatnonzero(near)


def _smw_state(model, absorbers, channel, omega, mass_floor=0.0):
    _check_dofs(model, absorbers, channel)
    mask = absorbers.active(mass_floor)
    u, f, Bm = _modal_projections(model, absorbers, channel, mask)
    d = modal_receptance(model, omega)
    Du, Df = d * u, d * f
    h0 = u @ Df
    st = SimpleNamespace(mask=mask, u=u, f=f, Bm=Bm, d=d, h0=h0, omega=omega)
    if omega == 0 or Bm.shape[1] == 0:
        st.h = h0
        st.S = None
        return st
    a = absorber_inverse_stiffness(absorbers, omega, mask)
    S = np.diag(a) + (Bm.T * d) @ Bm
    xu = Bm.T @ Du
    xf = Bm.T @ Df
    try:
        lu = la.lu_factor(S, check_finite=True)
    except (ValueError, la.LinAlgError) as exc:
        raise IllConditionedUpdateError(str(exc)) from None
    if np.any(np.diag(lu[0]) == 0):
        raise IllConditionedUpdateError("Woodbury inner matrix is singular")
    gf = la.lu_solve(lu, xf)
    gu = la.lu_solve(lu, xu)  # S is complex symmetric
    st.a, st.S, st.lu, st.xu, st.xf, st.gu, st.gf = a, S, lu, xu, xf, gu, gf
    st.h = h0 - xu @ gf
    return st


def controlled_compliance(model, absorbers, channel, omega, normalize=False,
                          mass_floor=0.0, route_singular=True):
    """
    Compliance ``h(omega) = w_u^T Hc^{-1}(omega) w_f`` of the controlled structure.

    Parameters
    ----------
    model : ModalHostModel
    absorbers : AbsorberSet
    channel : ComplianceChannel
    omega : float
        Angular frequency (rad/s).
    normalize : bool
        Divide by ``channel.normalization`` (reporting convention).
    mass_floor : float
        Absorbers whose mass does not exceed this value are left out.
    route_singular : bool
        Close to an undamped host resonance, switch to
        :func:`pseudo_inverse_compliance` instead of raising
        :class:`SingularHostError`.
    """
    omega = float(omega)
    if singular_mode(model, omega).size:
        if not route_singular:
            raise SingularHostError(int(singular_mode(model, omega)[0]), omega)
        h = pseudo_inverse_compliance(model, absorbers, channel, omega, mass_floor=mass_floor)
    else:
        h = _smw_state(model, absorbers, channel, omega, mass_floor).h
    return h / channel.normalization if normalize else h


def compliance_and_derivative(model, absorbers, channel, omega, mass_floor=0.0):
    """``(h, dh/domega)`` in one pass (unnormalized)."""
    omega = float(omega)
    if singular_mode(model, omega).size:
        # the derivative is smooth through the removable singularity; right
        # next to the pole the Woodbury terms cancel badly, so average the
        # analytic values at +-delta and +-2 delta and extrapolate to delta -> 0
        off = 1e-5 * max(model.frequencies[singular_mode(model, omega)])
        h = pseudo_inverse_compliance(model, absorbers, channel, omega, mass_floor=mass_floor)

        def mean_slope(d):
            lo = compliance_and_derivative(model, absorbers, channel, omega - d, mass_floor)[1]
            hi = compliance_and_derivative(model, absorbers, channel, omega + d, mass_floor)[1]
            return 0.5 * (lo + hi)

        return h, (4.0 * mean_slope(off) - mean_slope(2 * off)) / 3.0
    st = _smw_state(model, absorbers, channel, omega, mass_floor)
    dd = modal_receptance_derivative(model, omega, st.d)
    dh0 = st.u @ (dd * st.f)
    if st.S is None:
        # no active absorber, or omega = 0 where H_A and its slope vanish
        return st.h, dh0
    mask = st.mask
    m = absorbers.masses[mask]
    c = absorbers.dampings[mask]
    k = absorbers.stiffnesses[mask]
    da = -1j * c / (k + 1j * omega * c) ** 2 + 2.0 / (m * omega**3)
    Bm = st.Bm
    dS = np.diag(da) + (Bm.T * dd) @ Bm
    dxu = Bm.T @ (dd * st.u)
    dxf = Bm.T @ (dd * st.f)
    dupd = dxu @ st.gf + st.gu @ dxf - st.gu @ dS @ st.gf
    return st.h, dh0 - dupd


def compliance_frequency_derivative(model, absorbers, channel, omega, normalize=False,
                                    mass_floor=0.0):
    """Analytic ``dh/domega`` of the controlled compliance."""
    dh = compliance_and_derivative(model, absorbers, channel, omega, mass_floor)[1]
    return dh / channel.normalization if normalize else dh


def _inverse_stiffness_gradients(absorbers, omega, n):
    m = absorbers.masses[n]
    z = absorbers.stiffnesses[n] + 1j * omega * absorbers.dampings[n]
    return np.array([1.0 / (m**2 * omega**2), -1j * omega / z**2, -1.0 / z**2])


def compliance_param_gradients(model, absorbers, channel, omega, normalize=False,
                               mass_floor=0.0, state=None):
    """
    All derivatives ``dh/dxi`` at one frequency, ordered like
    :meth:`AbsorberSet.params`.

    Returns ``(h, grad)``; ``grad`` has length ``3 * Na``.
    """
    omega = float(omega)
    if omega == 0:
        raise GradientUndefinedError("parameter gradients are undefined at omega = 0")
    dead = np.flatnonzero(~absorbers.active(mass_floor))
    if dead.size:
        raise GradientUndefinedError(
            f"absorber {int(dead[0])} has no mass; its parameter gradients are undefined"
        )
    if singular_mode(model, omega).size:
        raise SingularHostError(int(singular_mode(model, omega)[0]), omega)
    st = state if state is not None else _smw_state(model, absorbers, channel, omega, mass_floor)
    grad = np.empty(3 * len(absorbers), dtype=complex)
    for n in range(len(absorbers)):
        grad[3 * n:3 * n + 3] = st.gu[n] * _inverse_stiffness_gradients(absorbers, omega, n) * st.gf[n]
    h = st.h
    if normalize:
        return h / channel.normalization, grad / channel.normalization
    return h, grad


def compliance_param_gradient(model, absorbers, channel, omega, which, normalize=False,
                              mass_floor=0.0):
    """
    Derivative of the compliance with respect to one absorber parameter.

    ``which`` is either the flat index ``3 n + {0: m, 1: c, 2: k}`` or a pair
    ``(n, name)`` with ``name`` in ``{"m", "c", "k"}``.
    """
    if isinstance(which, tuple):
        n, name = which
        which = 3 * int(n) + PARAMETER_NAMES.index(name)
    return compliance_param_gradients(model, absorbers, channel, omega, normalize,
                                      mass_floor)[1][which]


def pseudo_inverse_compliance(model, absorbers, channel, omega, mass_floor=0.0,
                              window=SINGULAR_WINDOW):
    """
    Compliance at (or next to) an undamped host resonance.

    The host flexibility has a pole there, but the controlled dynamic
    stiffness is regular as long as an absorber couples to the resonant
    mode. In modal coordinates the resonant coordinates ``K`` form the
    kernel of the host dynamic stiffness; with ``Lr`` the remaining modal
    stiffnesses, ``beta = Bm[K]`` and ``Br = Bm[r]``,

        T = H_A^{-1} + Br^T Lr^{-1} Br,    Sk = beta T^{-1} beta^T,
        V = Lr^{-1} Br T^{-1} beta^T,

        Hc^{-1} = [[Sk^{-1},          -Sk^{-1} V^T              ],
                   [-V Sk^{-1},  Lr^{-1} - Lr^{-1} Br T^{-1} Br^T Lr^{-1} + V Sk^{-1} V^T]].

    For one absorber and one resonant mode this is exactly the rank-one
    Moore-Penrose construction (kernel part ``C_k = B_k (B_k^H B_k)^{-1}``);
    the block form also covers several absorbers sharing the kernel.
    """
    omega = float(omega)
    _check_dofs(model, absorbers, channel)
    if not model.undamped:
        raise InvalidModelError(
            "pseudo-inverse route applies to undamped hosts only; "
            "the Woodbury update is always valid with host damping"
        )
    kern = singular_mode(model, omega, window)
    if kern.size == 0:
        raise InvalidModelError(f"omega={omega} is not within the window of a host resonance")
    mask = absorbers.active(mass_floor)
    u, f, Bm = _modal_projections(model, absorbers, channel, mask)
    rest = np.setdiff1d(np.arange(model.n_modes), kern)
    beta = Bm[kern, :]
    if Bm.shape[1] == 0 or np.allclose(beta, 0.0):
        raise KernelUncoupledError(
            f"no absorber couples to host mode(s) {kern.tolist()} at omega={omega}"
        )
    w_r = model.frequencies
    # exact resonance means the kernel modal stiffness is treated as zero
    lr_inv = 1.0 / (w_r[rest] ** 2 - omega**2)
    Br = Bm[rest, :]
    a = absorber_inverse_stiffness(absorbers, omega, mask)
    T = np.diag(a) + (Br.T * lr_inv) @ Br
    try:
        Tinv_beta = la.solve(T, beta.T)
        Sk = beta @ Tinv_beta
        Sk_inv = la.inv(Sk)
    except (la.LinAlgError, ValueError):
        raise KernelUncoupledError(
            f"controlled structure is singular at omega={omega}"
        ) from None
    if not np.all(np.isfinite(Sk_inv)) or np.linalg.cond(Sk) > 1e14:
        raise KernelUncoupledError(f"controlled structure is singular at omega={omega}")
    V = (lr_inv[:, None] * Br) @ Tinv_beta
    uk, ur = u[kern], u[rest]
    fk, fr = f[kern], f[rest]
    Lu, Lf = lr_inv * ur, lr_inv * fr
    h_rr = ur @ Lf - (Br.T @ Lu) @ la.solve(T, Br.T @ Lf)
    vu = uk - V.T @ ur
    vf = fk - V.T @ fr
    return h_rr + vu @ Sk_inv @ vf


def modal_system_matrices(model, absorbers, channel):
    """
    Dense ``(M, C, K, B, w_u, w_f)`` of the host in modal coordinates.

    Suitable input for :func:`direct_compliance_oracle` when physical
    matrices are not available (plates, raw modal data).
    """
    phi = model.mode_shapes
    M = np.eye(model.n_modes)
    C = np.diag(2.0 * model.damping_ratios * model.frequencies)
    K = np.diag(model.frequencies**2)
    B = phi.T @ absorbers.localization(model.n_dofs)
    return M, C, K, B, phi.T @ channel.w_u, phi.T @ channel.w_f


def direct_compliance_oracle(M, C, K, absorbers, w_u, w_f, omega, B=None):
    """
    Reference compliance from the dense ``(N + Na)`` controlled system.

    Assembles the frequency-domain block matrix of the host plus absorber
    equations of motion and solves it directly. Intended for testing.
    """
    M, C, K = (np.asarray(x, dtype=float) for x in (M, C, K))
    N = M.shape[0]
    if B is None:
        B = absorbers.localization(N)
    Na = len(absorbers)
    Ma = np.diag(absorbers.masses)
    Ca = np.diag(absorbers.dampings)
    Ka = np.diag(absorbers.stiffnesses)
    Za = Ka + 1j * omega * Ca
    A = np.zeros((N + Na, N + Na), dtype=complex)
    A[:N, :N] = K - omega**2 * M + 1j * omega * C + B @ Za @ B.T
    A[:N, N:] = -B @ Za
    A[N:, :N] = -Za @ B.T
    A[N:, N:] = Za - omega**2 * Ma
    rhs = np.concatenate([np.asarray(w_f, dtype=complex), np.zeros(Na)])
    try:
        x = la.solve(A, rhs)
    except la.LinAlgError:
        raise OracleSingularError(f"assembled system is singular at omega={omega}") from None
    return np.asarray(w_u) @ x[:N]


def compliance_sweep(model, absorbers, channel, omegas, normalize=False, mass_floor=0.0):
    """
    Compliance on a frequency grid, vectorized over frequency.

    Grid points falling inside the singular window of an undamped host
    resonance (or at ``omega = 0``) are evaluated one by one.
    """
    _check_dofs(model, absorbers, channel)
    w = np.asarray(omegas, dtype=float).reshape(-1)
    mask = absorbers.active(mass_floor)
    u, f, Bm = _modal_projections(model, absorbers, channel, mask)
    w_r, z = model.frequencies, model.damping_ratios
    special = np.zeros(w.size, dtype=bool)
    if model.undamped or np.any(z == 0):
        und = z == 0
        rel = np.abs(np.abs(w)[:, None] - w_r[None, und]) < SINGULAR_WINDOW * w_r[None, und]
        special |= rel.any(axis=1)
    special |= w == 0
    out = np.empty(w.size, dtype=complex)
    reg = ~special
    if np.any(reg):
        wr = w[reg]
        D = 1.0 / (w_r[None, :] ** 2 - wr[:, None] ** 2 + 2j * wr[:, None] * (z * w_r)[None, :])
        h0 = D @ (u * f)
        if Bm.shape[1]:
            m = absorbers.masses[mask]
            c = absorbers.dampings[mask]
            k = absorbers.stiffnesses[mask]
            a = 1.0 / (k[None, :] + 1j * wr[:, None] * c[None, :]) - 1.0 / (m[None, :] * wr[:, None] ** 2)
            S = np.einsum("in,wn,nj->wij", Bm.T, D, Bm)
            idx = np.arange(Bm.shape[1])
            S[:, idx, idx] += a
            xu = D * u[None, :] @ Bm
            xf = D * f[None, :] @ Bm
            y = np.linalg.solve(S, xf[..., None])[..., 0]
            h0 = h0 - np.einsum("wi,wi->w", xu, y)
        out[reg] = h0
    for i in np.flatnonzero(special):
        out[i] = controlled_compliance(model, absorbers, channel, w[i], mass_floor=mass_floor)
    return out / channel.normalization if normalize else out
