"""
Norm-homotopy minimization of the resonance peak amplitudes.

For a fixed order ``p`` the cost is the p-norm of the squared peak
amplitudes,

    f_p = chi * (sum_i (|h|_i^2 / chi)^p)^(1/p),   chi = max_i |h|_i^2,

minimized over the absorber masses, dampings and stiffnesses under a total
mass budget. ``p`` then follows ``2^(2^k)``, ``k = 0, 1, ...``, each stage
warm-started from the previous optimum, so the solution moves toward the
minimax (all-equal-peak) design without ever handling the nonsmooth max
directly.
"""

from dataclasses import dataclass, field
import logging
import warnings

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, brentq, minimize

from .coupling import AbsorberSet, compliance_param_gradients
from .errors import InfeasibleStartError, StalePeaksError
from .tuning import initial_peak_guesses
from .peaks import find_all_peaks, is_stationary, stationarity_residual

log = logging.getLogger(__name__)

DROP_RATIO = 1e-12


@dataclass(frozen=True)
class HomotopyConfig:
    """
    Settings of the homotopy loop and of each inner p-norm solve.

    ``m_max`` is the absorber mass budget (kg). ``lower_bounds`` are the
    relative floors ``(eps_m, eps_c, eps_k)``; masses are floored at
    ``eps_m * m_max`` and dampings/stiffnesses at ``eps * scale``.
    """

    m_max: float
    constraint_mode: str = "inequality"
    k_max: int = 4
    grad_tol: float = 1e-7
    ftol: float = 1e-9
    max_iter: int = 300
    lower_bounds: tuple = (1e-9, 0.0, 1e-12)
    homotopy_tol: float = 1e-4
    stop_on_convergence: bool = False

    def validate(self):
        problems = []
        if not self.m_max > 0:
            problems.append("m_max must be positive")
        if self.constraint_mode not in ("inequality", "equality"):
            problems.append("constraint_mode must be 'inequality' or 'equality'")
        if self.k_max < 0:
            problems.append("k_max must be >= 0")
        for name in ("grad_tol", "ftol", "homotopy_tol"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        if self.max_iter < 1:
            problems.append("max_iter must be >= 1")
        if problems:
            raise ValueError("; ".join(problems))


@dataclass
class StageRecord:
    k: int
    p: float
    f_p: float
    amplitudes: np.ndarray
    peak_omegas: np.ndarray
    iterations: int
    converged: bool
    params: np.ndarray
    history: list = field(default_factory=list)


@dataclass
class TuningResult:
    absorbers: AbsorberSet
    initial: AbsorberSet
    stages: list
    peaks: object
    constraint_active: bool
    converged: bool
    reason: str

    @property
    def p_values(self):
        return [s.p for s in self.stages]


def cost_fp(squared_amplitudes, p, chi=None):
    """
    p-norm of the squared peak amplitudes.

    Returns ``(f_p, chi)``; ``chi`` defaults to the largest entry and only
    affects conditioning, not the value.
    """
    a = np.asarray(squared_amplitudes, dtype=float)
    if a.size == 0:
        raise ValueError("at least one peak is required")
    if p < 1:
        raise ValueError("p must be >= 1")
    if chi is None:
        chi = a.max()
    r = a / chi
    return float(chi * np.sum(r**p) ** (1.0 / p)), float(chi)


def cost_fp_weights(squared_amplitudes, p, chi=None):
    """``df_p / d(|h|_i^2)`` for each peak."""
    a = np.asarray(squared_amplitudes, dtype=float)
    if chi is None:
        chi = a.max()
    r = a / chi
    return r ** (p - 1) * np.sum(r**p) ** (1.0 / p - 1.0)


def grad_fp(model, absorbers, channel, peaks, p, mass_floor=0.0, check=True):
    """
    Gradient of ``f_p`` with respect to the flat absorber parameters.

    Uses the compliance sensitivities at the peak frequencies only; the
    motion of the peaks is ignored, which is exact because every peak is a
    stationary point of ``|h|^2`` in frequency. Amplitudes are taken
    normalized by ``channel.normalization``, consistently with
    :func:`cost_fp` applied to ``peaks.amplitudes**2``.
    """
    if check:
        for pk in peaks:
            if not is_stationary(model, absorbers, channel, pk.omega, mass_floor):
                res = stationarity_residual(model, absorbers, channel, pk.omega, mass_floor)
                raise StalePeaksError(
                    f"peak at {pk.omega:.9g} rad/s is not stationary (residual {res:.2e})"
                )
    sq = peaks.amplitudes**2
    wts = cost_fp_weights(sq, p)
    grad = np.zeros(3 * len(absorbers))
    for wt, pk in zip(wts, peaks):
        h, dh = compliance_param_gradients(model, absorbers, channel, pk.omega,
                                           normalize=True, mass_floor=mass_floor)
        grad += wt * 2.0 * (np.conj(h) * dh).real
    return grad


def controlled_band(model, guesses, target_modes=None, margin=0.1):
    """
    Frequency band holding the peaks that the absorbers are meant to control.

    The band extends the expected-peak guesses by ``margin`` on each side,
    but stops at the geometric mean between the outermost guess and the
    nearest host mode that no absorber targets, so untargeted resonances
    outside the controlled group stay out of the cost.
    """
    g = np.asarray(guesses, dtype=float)
    lo, hi = (1.0 - margin) * g.min(), (1.0 + margin) * g.max()
    if target_modes is not None:
        targeted = set(int(r) for r in target_modes)
        w_t = model.frequencies[sorted(targeted)]
        for r, w in enumerate(model.frequencies):
            if r in targeted:
                continue
            if w > w_t.max():
                hi = min(hi, np.sqrt(g.max() * w))
            elif w < w_t.min():
                lo = max(lo, np.sqrt(g.min() * w))
    return float(lo), float(hi)


class PnormProblem:
    """
    Cost and gradient of the p-norm stage in scaled variables.

    Variables are ``xi / scale`` with, for absorber ``n`` targeting
    ``w_n``, scales ``(m_max, w_n m_max, w_n^2 m_max)``.

    The peak set is a function of the design only: maxima reached from the
    initial guesses, from the expected peaks of the current design and from
    the local maxima of a coarse scan of the controlled band. Keeping it
    independent of the search history keeps the line searches consistent.
    """

    def __init__(self, model, channel, template, cfg, reference_frequencies,
                 base_guesses, target_modes=None, band=None, scan_per_mode=150):
        self.model = model
        self.channel = channel
        self.dofs = template.dofs
        self.cfg = cfg
        wref = np.asarray(reference_frequencies, dtype=float)
        self.wref = wref
        self.modes = None if target_modes is None else [int(r) for r in target_modes]
        self.scale = np.column_stack(
            [np.full(wref.size, cfg.m_max), wref * cfg.m_max, wref**2 * cfg.m_max]
        ).reshape(-1)
        self.base_guesses = np.array(base_guesses, dtype=float).reshape(-1)
        if self.base_guesses.size == 0:
            raise ValueError("at least one peak guess is required")
        self.band = band if band is not None else controlled_band(model, self.base_guesses,
                                                                  self.modes)
        self.scan_points = scan_per_mode * max(1, len(self.dofs))
        self.mass_floor = DROP_RATIO * cfg.m_max
        self._cache = {}
        self.evaluations = 0

    # -- variable handling
    def to_x(self, absorbers):
        return absorbers.params() / self.scale

    def to_absorbers(self, x):
        xi = np.maximum(np.asarray(x, dtype=float), 0.0) * self.scale
        return AbsorberSet.from_params(xi, self.dofs)

    def bounds(self):
        eps = np.tile(np.asarray(self.cfg.lower_bounds, dtype=float), len(self.dofs))
        return Bounds(eps, np.full(eps.size, np.inf))

    def mass_matrix(self):
        A = np.zeros((1, 3 * len(self.dofs)))
        A[0, 0::3] = 1.0
        return A

    def constraint(self):
        A = self.mass_matrix()
        lo = 1.0 if self.cfg.constraint_mode == "equality" else -np.inf
        return LinearConstraint(A, lo, 1.0)

    # -- peaks
    def design_guesses(self, absorbers):
        """Two expected peaks per absorber (mass ratio from the current mass)."""
        out = []
        for n, d in enumerate(self.dofs):
            w = self.wref[n]
            mu = 0.0
            if self.modes is not None:
                mu = absorbers.masses[n] * self.model.mode_shapes[d, self.modes[n]] ** 2
            out.extend(initial_peak_guesses(mu, w) if mu > 0 else (w,))
        return np.array(out)

    def peaks(self, absorbers):
        """Compliance maxima inside the controlled band."""
        guesses = np.concatenate([self.base_guesses, self.design_guesses(absorbers)])
        return find_all_peaks(self.model, absorbers, self.channel, self.band, guesses,
                              scan_points=self.scan_points, mass_floor=self.mass_floor)

    def evaluate(self, x, p):
        key = (np.asarray(x, dtype=float).tobytes(), p)
        if key in self._cache:
            return self._cache[key]
        absorbers = self.to_absorbers(x)
        self.evaluations += 1
        peaks = self.peaks(absorbers)
        if len(peaks) == 0:
            out = (np.inf, np.zeros_like(x), peaks)
        else:
            f, _ = cost_fp(peaks.amplitudes**2, p)
            g = grad_fp(self.model, absorbers, self.channel, peaks, p,
                        mass_floor=self.mass_floor, check=True) * self.scale
            out = (f, g, peaks)
        if len(self._cache) > 64:
            self._cache.clear()
        self._cache[key] = out
        return out


def _feasible(problem, x, tol=1e-10):
    xi = np.asarray(x, dtype=float) * problem.scale
    lo = problem.bounds().lb
    mass = xi[0::3].sum()
    ok = mass <= problem.cfg.m_max + tol and np.all(x >= lo - 1e-15)
    if problem.cfg.constraint_mode == "equality":
        ok = ok and mass >= problem.cfg.m_max - tol
    return bool(ok)


def project_feasible(x, lower, equality=False):
    """
    Euclidean projection onto ``{x >= lower, sum(x[0::3]) <= 1}``.

    With ``equality`` the mass sum is pinned to one instead.
    """
    raw = np.asarray(x, dtype=float)
    x = np.maximum(raw, lower)
    m, lm = raw[0::3], lower[0::3]
    if equality or x[0::3].sum() > 1.0:
        # sum(max(m - tau, lm)) = 1 is monotone in tau
        def excess(tau):
            return np.maximum(m - tau, lm).sum() - 1.0
        lo, hi = -1.0, 1.0
        while excess(lo) < 0:
            lo *= 2.0
        while excess(hi) > 0:
            hi *= 2.0
        tau = brentq(excess, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps)
        x = x.copy()
        x[0::3] = np.maximum(m - tau, lm)
        # remove the last rounding excess from the largest mass
        extra = x[0::3].sum() - 1.0
        if extra > 0 or equality:
            j = 3 * int(np.argmax(x[0::3]))
            x[j] -= extra
    return x


def _qp_step(g, B, x, lower, A, equality):
    """Minimize ``g.d + d.B.d/2`` over the feasible set shifted to ``x``."""
    def fun(d):
        Bd = B @ d
        return g @ d + 0.5 * d @ Bd, g + Bd

    slack = 1.0 - A @ x
    con = LinearConstraint(A, slack if equality else -np.inf, slack)
    with warnings.catch_warnings():
        # SLSQP clips its own trial points to the bounds; harmless for a QP
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(fun, np.zeros_like(x), jac=True, method="SLSQP",
                       bounds=Bounds(lower - x, np.full(x.size, np.inf)), constraints=[con],
                       options={"maxiter": 200, "ftol": 1e-14})
    return res.x


def _damped_bfgs(B, s, y):
    Bs = B @ s
    sBs = s @ Bs
    if sBs <= 0:
        return B
    sy = s @ y
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = s @ y
    return B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy


def solve_pnorm(problem, x0, p):
    """
    Minimize the p-norm stage from the feasible point ``x0`` (scaled).

    Sequential quadratic programming with a damped BFGS model: each
    direction solves a quadratic model over the linear mass constraint and
    the bounds, and a backtracking line search enforces sufficient decrease
    of ``f_p`` itself. Every accepted iterate is therefore feasible and
    ``f_p`` never increases along the recorded history. A trial step that
    changes the number of peaks and fails the decrease test is halved like
    any other; once accepted, the new peak count is kept and the curvature
    model restarts.

    Returns ``(x, info)`` where ``info`` holds the iteration count, the
    accepted-iterate history of ``f_p`` and a convergence flag.
    """
    cfg = problem.cfg
    x = np.asarray(x0, dtype=float)
    if not _feasible(problem, x):
        raise InfeasibleStartError("starting point violates the mass budget or bounds")
    equality = cfg.constraint_mode == "equality"
    lower = problem.bounds().lb
    A = problem.mass_matrix()
    f, g, peaks = problem.evaluate(x, p)
    if not np.isfinite(f):
        raise InfeasibleStartError("no compliance peak at the starting point")
    f0 = f
    g = g / f0

    def fresh_model(grad):
        # first step of the quadratic model limited to 0.05 in scaled units
        return np.eye(x.size) * max(np.abs(grad).max() / 0.05, 1e-8)

    B = fresh_model(g)
    history = [f]
    small = 0
    converged, message, it = False, "max_iter reached", 0
    for it in range(1, cfg.max_iter + 1):
        pg = project_feasible(x - g, lower, equality) - x
        if np.abs(pg).max() < cfg.grad_tol:
            converged, message = True, "projected gradient below tolerance"
            it -= 1
            break
        d = _qp_step(g, B, x, lower, A, equality)
        slope = g @ d
        if not slope < 0:
            d, slope = pg, g @ pg
            B = fresh_model(g)
        t, accepted = 1.0, False
        for _ in range(40):
            xt = project_feasible(x + t * d, lower, equality)
            ft, gt, pt = problem.evaluate(xt, p)
            if np.isfinite(ft) and ft / f0 <= f / f0 + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            converged = np.abs(pg).max() < 1e3 * cfg.grad_tol
            message = "line search failed" if not converged else "no further decrease"
            break
        gt = gt / f0
        if len(pt) != len(peaks):
            log.debug("peak count %d -> %d at p=%g", len(peaks), len(pt), p)
            B = fresh_model(gt)
        else:
            B = _damped_bfgs(B, xt - x, gt - g)
        rel = (f - ft) / f
        x, f, g, peaks = xt, ft, gt, pt
        history.append(f)
        small = small + 1 if rel < cfg.ftol else 0
        if small >= 3:
            converged, message = True, "relative change of f_p below tolerance"
            break
    return x, dict(iterations=it, converged=converged, message=message,
                   history=history, f=f, peaks=peaks)


def run_homotopy(model, channel, initial, cfg, reference_frequencies, guesses,
                 target_modes=None, **problem_options):
    """
    Drive ``p = 2^(2^k)`` from ``k = 0`` to ``cfg.k_max``.

    Parameters
    ----------
    model, channel
        Host structure and transfer function to flatten.
    initial : AbsorberSet
        Feasible starting design.
    cfg : HomotopyConfig
    reference_frequencies : (Na,) array_like
        Target frequency of each absorber (variable scaling).
    guesses : array_like
        Initial peak guesses.
    """
    cfg.validate()
    problem = PnormProblem(model, channel, initial, cfg, reference_frequencies, guesses,
                           target_modes, **problem_options)
    x = problem.to_x(initial)
    if not _feasible(problem, x):
        raise InfeasibleStartError("initial design violates the mass budget or bounds")
    stages = []
    converged = True
    reason = "k_max reached"
    prev_max = None
    for k in range(cfg.k_max + 1):
        p = 2.0 ** (2**k)
        x, info = solve_pnorm(problem, x, p)
        peaks = info["peaks"]
        amps = peaks.amplitudes
        stages.append(StageRecord(k, p, info["f"], amps, peaks.omegas, info["iterations"],
                                  info["converged"], x * problem.scale, info["history"]))
        log.info("k=%d p=%g f_p=%.10g peaks=%d spread=%.3e iters=%d", k, p, info["f"],
                 len(peaks), peaks.spread(), info["iterations"])
        if not info["converged"]:
            converged = False
        cur = amps.max()
        if (cfg.stop_on_convergence and prev_max is not None
                and abs(cur - prev_max) <= cfg.homotopy_tol * prev_max):
            reason = "performance converged"
            break
        prev_max = cur
    final = problem.to_absorbers(x)
    active = final.total_mass >= cfg.m_max * (1 - 1e-6)
    return TuningResult(final, initial, stages, peaks, active, converged, reason)
