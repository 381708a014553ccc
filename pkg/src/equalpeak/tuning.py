"""
Initial absorber tuning.

Each absorber is tuned to one host mode as if that mode were an isolated
oscillator (non-resonant modes neglected), then the closed-form H-infinity
optimum of Nishihara and Asami for an undamped primary system is applied.
"""

from dataclasses import dataclass

import numpy as np

from .coupling import AbsorberSet
from .errors import InvalidModelError, NodalAttachmentError

NODAL_TOL = 1e-12


@dataclass(frozen=True)
class ModeTarget:
    """Equivalent one-dof oscillator seen by absorber ``absorber`` on mode ``mode``."""

    absorber: int
    mode: int
    modal_amplitude: float
    modal_mass: float
    modal_damping: float
    modal_stiffness: float
    frequency: float
    damping_ratio: float
    mass_ratio: float = None


def equivalent_sdof(model, mode, dof, absorber=0, absorber_mass=None):
    """
    Reduce mode ``mode`` of ``model`` to an oscillator at attachment ``dof``.

    Returns a :class:`ModeTarget` with ``m_r = 1/phi^2``,
    ``c_r = 2 w_r m_r zeta_r`` and ``k_r = w_r^2 m_r``.
    """
    phi_a = float(model.mode_shapes[dof, mode])
    if abs(phi_a) < NODAL_TOL:
        raise NodalAttachmentError(mode, phi_a)
    w_r = float(model.frequencies[mode])
    zeta = float(model.damping_ratios[mode])
    m_r = 1.0 / phi_a**2
    mu = None if absorber_mass is None else absorber_mass / m_r
    return ModeTarget(absorber, mode, phi_a, m_r, 2.0 * w_r * m_r * zeta,
                      w_r**2 * m_r, w_r, zeta, mu)


def nishihara_asami(mu, omega_r, m_a):
    """
    Closed-form H-infinity tuning of a damped absorber on an undamped oscillator.

    Parameters
    ----------
    mu : float
        Mass ratio between absorber and primary (modal) mass.
    omega_r : float
        Natural frequency of the primary system (rad/s).
    m_a : float
        Absorber mass (kg).

    Returns
    -------
    k_a, c_a : float
        Absorber stiffness (N/m) and damping (N s/m).
    """
    if not (mu > 0 and omega_r > 0 and m_a > 0):
        raise ValueError("mu, omega_r and m_a must be positive")
    s = np.sqrt(4.0 + 3.0 * mu)
    ratio = (8.0 / (1.0 + mu) ** 2
             * (16.0 + 23.0 * mu + 9.0 * mu**2 + 2.0 * (2.0 + mu) * s)
             / (3.0 * (64.0 + 80.0 * mu + 27.0 * mu**2)))
    k_a = ratio * omega_r**2 * m_a
    c_a = 0.5 * np.sqrt((8.0 + 9.0 * mu - 4.0 * s) / (1.0 + mu)) * np.sqrt(k_a * m_a)
    return float(k_a), float(c_a)


def initial_peak_guesses(mu, omega_r):
    """Expected peak frequencies of an equal-peak tuned absorber, ascending."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    spread = np.sqrt(mu / (2.0 + mu))
    base = omega_r / (1.0 + mu)
    return float(base * (1.0 - spread)), float(base * (1.0 + spread))


def split_mass(m_max, n_absorbers, mass_split="equal"):
    """
    Initial absorber masses.

    ``mass_split`` is ``"equal"`` or a sequence of positive weights; the
    masses always use up the whole budget.
    """
    if n_absorbers == 0:
        return np.zeros(0)
    if isinstance(mass_split, str):
        if mass_split != "equal":
            raise ValueError(f"unknown mass_split policy {mass_split!r}")
        return np.full(n_absorbers, m_max / n_absorbers)
    w = np.asarray(mass_split, dtype=float)
    if w.size != n_absorbers or np.any(w <= 0):
        raise ValueError("mass_split weights must be positive, one per absorber")
    return m_max * w / w.sum()


def build_initial_design(model, targets, m_max, mass_split="equal"):
    """
    Initial absorber set and pooled peak guesses.

    Parameters
    ----------
    model : ModalHostModel
    targets : sequence of (mode, dof)
        Target mode index and attachment dof of each absorber.
    m_max : float
        Total absorber mass budget (kg), fully allocated.
    mass_split : "equal" or sequence of float

    Returns
    -------
    absorbers : AbsorberSet
    guesses : ndarray
        Two expected peak frequencies per absorber, sorted.
    details : list of ModeTarget
    """
    modes = [int(t[0]) for t in targets]
    if len(set(modes)) != len(modes):
        raise InvalidModelError("each absorber must target a distinct mode")
    masses = split_mass(m_max, len(targets), mass_split)
    if masses.sum() > m_max * (1 + 1e-12):
        raise InvalidModelError("initial masses exceed the budget")
    m, c, k, dofs, guesses, details = [], [], [], [], [], []
    for n, ((mode, dof), m_a) in enumerate(zip(targets, masses)):
        tgt = equivalent_sdof(model, int(mode), int(dof), absorber=n, absorber_mass=m_a)
        k_a, c_a = nishihara_asami(tgt.mass_ratio, tgt.frequency, m_a)
        m.append(m_a)
        c.append(c_a)
        k.append(k_a)
        dofs.append(int(dof))
        guesses.extend(initial_peak_guesses(tgt.mass_ratio, tgt.frequency))
        details.append(tgt)
    return AbsorberSet(m, c, k, tuple(dofs)), np.sort(np.array(guesses)), details
