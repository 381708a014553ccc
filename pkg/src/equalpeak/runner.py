"""
Scenario execution and report writing.

``run_scenario`` goes from a validated :class:`~equalpeak.config.ScenarioConfig`
to the optimized absorbers and writes, into one output directory,

* ``params.json``: initial and optimized absorbers, controlled peaks and
  the homotopy stages,
* ``frf_uncontrolled.csv``, ``frf_initial.csv``, ``frf_optimized.csv``,
* ``peaks.csv``: maxima of every design on the FRF grid,
* ``trajectory.csv``: accepted ``f_p`` values of every stage,
* ``frf.png`` and ``trajectory.png`` unless figures are disabled.

Every number is written with 17 significant digits, so identical inputs
give byte-identical reports and floats survive a round trip exactly.
"""

from dataclasses import dataclass, field
import json
import logging
import math
from pathlib import Path

import numpy as np

from .config import robust_parameter
from .coupling import AbsorberSet, ComplianceChannel, compliance_sweep
from .errors import ConfigError, EqualPeakError, InvalidModelError
from .homotopy import HomotopyConfig, controlled_band, run_homotopy
from .host import ChainSpec, ModalHostModel, PlateSpec, build_chain_modal, build_plate_modal
from .peaks import find_all_peaks, find_peaks
from .tuning import build_initial_design

log = logging.getLogger(__name__)

FRF_COLUMNS = ("omega_rad_s", "re_h", "im_h", "abs_h", "abs_h_normalized")
PEAK_COLUMNS = ("design", "omega_rad_s", "re_h", "im_h", "abs_h", "abs_h_normalized",
                "controlled")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3
EXIT_FAILURE = 4


# -- number formatting ------------------------------------------------------

def fmt(x):
    """17 significant digits; non-finite values become ``nan``/``inf``."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _json_scalar(v):
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(v) if np.isfinite(v) else "null"
    return json.dumps(str(v))


def dumps_json(obj, indent=2, _level=0):
    """JSON text with floats at 17 significant digits and stable key order."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps_json(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_json_scalar(v) for v in seq) + "]"
        items = [pad + dumps_json(v, indent, _level + 1) for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    return _json_scalar(obj)


def write_json(path, obj):
    Path(path).write_text(dumps_json(obj) + "\n", encoding="utf-8")


def write_csv(path, columns, rows):
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- model construction -----------------------------------------------------

@dataclass
class Scenario:
    """Host, transfer channel and absorber targets built from a config."""

    config: object
    model: ModalHostModel
    channel: ComplianceChannel
    targets: list
    plate: PlateSpec = None
    static: float = None

    @property
    def modes(self):
        return [t[0] for t in self.targets]

    @property
    def dofs(self):
        return tuple(t[1] for t in self.targets)


def _plate_spec(config, changes):
    body = config.model
    kw = {k: body[k] for k in ("length", "width", "thickness", "young_modulus",
                               "poisson_ratio", "density")}
    for key in ("max_m", "max_n", "damping_ratio", "frequency_convention"):
        if key in body:
            kw[key] = body[key]
    for name, factor in changes.items():
        kw[name] = kw[name] * factor
    ch = config.channel
    return PlateSpec(force_location=tuple(ch["force"]),
                     measurement_location=tuple(ch["measurement"]),
                     absorber_locations=tuple(tuple(a["attach"]) for a in config.absorbers),
                     **kw)


def build_host(config, changes=None):
    """
    Host model of a scenario.

    ``changes`` maps a robustness parameter to a multiplicative factor,
    e.g. ``{"young_modulus": 1.05}``.
    """
    changes = dict(changes or {})
    body = config.model
    if config.model_kind == "chain":
        m = np.asarray(body["masses"], dtype=float) * changes.pop("masses", 1.0)
        k = np.asarray(body["springs"], dtype=float) * changes.pop("springs", 1.0)
        spec = ChainSpec(tuple(m), tuple(k), None if body.get("dampers") is None
                         else tuple(body["dampers"]))
        model, plate = build_chain_modal(spec), None
    elif config.model_kind == "plate":
        plate = _plate_spec(config, changes)
        changes = {}
        model = build_plate_modal(plate)
    else:
        model = ModalHostModel(body["frequencies"], body["damping_ratios"], body["mode_shapes"])
        plate = None
    if changes:
        raise InvalidModelError(f"cannot apply {sorted(changes)} to a {config.model_kind} model")
    return model, plate


def _dof(model, where):
    if isinstance(where, (list, tuple)):
        return model.dof_at(float(where[0]), float(where[1]))
    return int(where)


def _mode(model, which):
    if isinstance(which, (list, tuple)):
        return model.mode_index(tuple(int(v) for v in which))
    return int(which)


def static_compliance(model, channel):
    """Host compliance at zero frequency, ``sum_r u_r f_r / w_r^2``."""
    phi = model.mode_shapes
    u, f = phi.T @ channel.w_u, phi.T @ channel.w_f
    return float(np.sum(u * f / model.frequencies**2))


def build_scenario(config, changes=None, normalization=None):
    """
    Build host, channel and targets.

    ``normalization`` overrides the reporting scale, so perturbed hosts can
    be compared on the nominal static compliance.
    """
    model, plate = build_host(config, changes)
    ch = config.channel
    out, inp = _dof(model, ch["measurement"]), _dof(model, ch["force"])
    probe = ComplianceChannel.point(model.n_dofs, out, inp)
    static = static_compliance(model, probe)
    if normalization is None:
        normalization = abs(static) if ch.get("normalization", "none") == "static" else 1.0
    if not normalization > 0:
        raise InvalidModelError("static compliance vanishes; use normalization 'none'")
    channel = ComplianceChannel.point(model.n_dofs, out, inp, normalization)
    targets = [(_mode(model, a["mode"]), _dof(model, a["attach"])) for a in config.absorbers]
    return Scenario(config, model, channel, targets, plate, static)


def homotopy_config(config):
    opts = {k: v for k, v in config.optimizer.items() if k != "scan_per_mode"}
    if "lower_bounds" in opts:
        opts["lower_bounds"] = tuple(opts["lower_bounds"])
    return HomotopyConfig(m_max=config.m_max, **opts)


# -- reports ----------------------------------------------------------------

def frf_rows(omegas, h, normalization):
    """Rows of an FRF table, dropping non-finite values (exact undamped resonances)."""
    rows = []
    for w, v in zip(omegas, h):
        if np.isfinite(v.real) and np.isfinite(v.imag):
            rows.append((w, v.real, v.imag, abs(v), abs(v) / normalization))
    return rows


def evaluate_frf(scenario, absorbers, omegas):
    """Compliance on a grid; points where the host alone is singular give ``nan``."""
    h = np.empty(len(omegas), dtype=complex)
    try:
        h[:] = compliance_sweep(scenario.model, absorbers, scenario.channel, omegas)
    except EqualPeakError:
        for i, w in enumerate(omegas):
            try:
                h[i] = compliance_sweep(scenario.model, absorbers, scenario.channel, [w])[0]
            except EqualPeakError:
                h[i] = complex(np.nan, np.nan)
    return h


def absorber_records(scenario, absorbers, m_max):
    out = []
    for n, a in enumerate(scenario.config.absorbers):
        rec = dict(index=n, mode=a["mode"], attach=a["attach"], dof=scenario.dofs[n],
                   mass=absorbers.masses[n], damping=absorbers.dampings[n],
                   stiffness=absorbers.stiffnesses[n])
        if m_max:
            rec["mass_fraction"] = absorbers.masses[n] / m_max
        out.append(rec)
    return out


def peak_records(peaks):
    return [dict(omega=p.omega, re_h=p.h.real, im_h=p.h.imag, abs_h=abs(p.h),
                 abs_h_normalized=p.amplitude) for p in peaks]


def design_peaks(scenario, absorbers, omegas, band=None, guesses=()):
    """Maxima of one design on the FRF grid, flagged when inside ``band``."""
    lo, hi = float(np.min(omegas)), float(np.max(omegas))
    lo = max(lo, 1e-6 * hi)
    peaks = find_all_peaks(scenario.model, absorbers, scenario.channel, (lo, hi), guesses,
                           scan_points=max(2000, len(omegas)))
    rows = []
    for p in peaks:
        inside = band is not None and band[0] <= p.omega <= band[1]
        rows.append((p.omega, p.h.real, p.h.imag, abs(p.h), p.amplitude,
                     "1" if inside else "0"))
    return peaks, rows


@dataclass
class RunOutcome:
    """What a CLI command produced."""

    exit_code: int
    files: list = field(default_factory=list)
    result: object = None
    report: dict = None


def _write_frf(out_dir, name, omegas, h, normalization, files):
    path = Path(out_dir) / f"frf_{name}.csv"
    write_csv(path, FRF_COLUMNS, frf_rows(omegas, h, normalization))
    files.append(path)


def sweep_scenario(config, out_dir, figures=None):
    """FRF of the uncontrolled host and, if absorbers are given, of the initial design."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sc = build_scenario(config)
    omegas = config.frequency_grid()
    files = []
    curves = []
    peak_rows = []
    designs = [("uncontrolled", AbsorberSet.empty())]
    if config.absorbers:
        initial, guesses, _ = build_initial_design(sc.model, sc.targets, config.m_max,
                                                   config.mass_split)
        designs.append(("initial", initial))
    for name, absorbers in designs:
        h = evaluate_frf(sc, absorbers, omegas)
        _write_frf(out_dir, name, omegas, h, sc.channel.normalization, files)
        curves.append((name, omegas, np.abs(h) / sc.channel.normalization))
        if len(absorbers):
            _, rows = design_peaks(sc, absorbers, omegas)
            peak_rows += [(name,) + r for r in rows]
    path = out_dir / "peaks.csv"
    write_csv(path, PEAK_COLUMNS, peak_rows)
    files.append(path)
    if _figures_enabled(config, figures):
        from .plotting import plot_frf
        files.append(plot_frf(out_dir / "frf.png", curves, title=config.name,
                              normalized=sc.channel.normalization != 1.0))
    return RunOutcome(EXIT_OK, files)


def _figures_enabled(config, figures):
    return config.output.get("figures", True) if figures is None else figures


def run_scenario(config, out_dir, figures=None):
    """
    Initial tuning, norm homotopy and reports for one scenario.

    Returns a :class:`RunOutcome` whose exit code is ``EXIT_OK`` when every
    homotopy stage converged and ``EXIT_NOT_CONVERGED`` otherwise.
    """
    if not config.absorbers:
        return sweep_scenario(config, out_dir, figures)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sc = build_scenario(config)
    cfg = homotopy_config(config)
    initial, guesses, details = build_initial_design(sc.model, sc.targets, config.m_max,
                                                     config.mass_split)
    wref = sc.model.frequencies[sc.modes]
    scan = config.optimizer.get("scan_per_mode", 150)
    result = run_homotopy(sc.model, sc.channel, initial, cfg, wref, guesses, sc.modes,
                          scan_per_mode=scan)
    band = controlled_band(sc.model, guesses, sc.modes)
    final = result.absorbers

    report = dict(
        scenario=config.name,
        model=config.model_kind,
        m_max=config.m_max,
        constraint_mode=cfg.constraint_mode,
        normalization=sc.channel.normalization,
        static_compliance=sc.static,
        converged=result.converged,
        reason=result.reason,
        constraint_active=result.constraint_active,
        total_mass=final.total_mass,
        p_values=result.p_values,
        controlled_band=list(band),
        initial_peak_guesses=list(guesses),
        absorbers=absorber_records(sc, final, config.m_max),
        initial_absorbers=absorber_records(sc, initial, config.m_max),
        peaks=peak_records(result.peaks),
        max_amplitude=float(result.peaks.amplitudes.max()),
        equal_peak_spread=result.peaks.spread(),
        stages=[dict(k=s.k, p=s.p, f_p=s.f_p, iterations=s.iterations, converged=s.converged,
                     n_peaks=len(s.amplitudes), max_amplitude=float(np.max(s.amplitudes)),
                     spread=float((np.max(s.amplitudes) - np.min(s.amplitudes))
                                  / np.max(s.amplitudes)),
                     params=list(s.params))
                for s in result.stages],
    )
    files = []
    path = out_dir / "params.json"
    write_json(path, report)
    files.append(path)

    omegas = config.frequency_grid()
    curves, peak_rows = [], []
    for name, absorbers in (("uncontrolled", AbsorberSet.empty()), ("initial", initial),
                            ("optimized", final)):
        h = evaluate_frf(sc, absorbers, omegas)
        _write_frf(out_dir, name, omegas, h, sc.channel.normalization, files)
        curves.append((name, omegas, np.abs(h) / sc.channel.normalization))
        if len(absorbers):
            extra = result.peaks.omegas if name == "optimized" else guesses
            _, rows = design_peaks(sc, absorbers, omegas, band, extra)
            peak_rows += [(name,) + r for r in rows]
    path = out_dir / "peaks.csv"
    write_csv(path, PEAK_COLUMNS, peak_rows)
    files.append(path)

    traj = [(s.k, s.p, i, f) for s in result.stages for i, f in enumerate(s.history)]
    path = out_dir / "trajectory.csv"
    write_csv(path, ("k", "p", "iteration", "f_p"), traj)
    files.append(path)

    if _figures_enabled(config, figures):
        from .plotting import plot_frf, plot_trajectory
        stage_curves = []
        for s in result.stages:
            ab = AbsorberSet.from_params(s.params, sc.dofs)
            h = evaluate_frf(sc, ab, omegas)
            stage_curves.append((f"k = {s.k}", omegas, np.abs(h) / sc.channel.normalization))
        files.append(plot_frf(out_dir / "frf.png", curves, stages=stage_curves,
                              peaks=(result.peaks.omegas, result.peaks.amplitudes),
                              title=config.name, normalized=sc.channel.normalization != 1.0))
        files.append(plot_trajectory(out_dir / "trajectory.png", result.stages))
    code = EXIT_OK if result.converged else EXIT_NOT_CONVERGED
    return RunOutcome(code, files, result, report)


# -- robustness -------------------------------------------------------------

def load_params(path, config=None):
    """
    Read a ``params.json`` report.

    Returns ``(absorbers, report)``; with ``config`` the attachment dofs are
    re-resolved on the scenario host and checked against the report.
    """
    path = Path(path)
    try:
        report = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read ({exc.strerror or exc})"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON ({exc.msg})"]) from exc
    try:
        recs = report["absorbers"]
        m = [float(r["mass"]) for r in recs]
        c = [float(r["damping"]) for r in recs]
        k = [float(r["stiffness"]) for r in recs]
        dofs = tuple(int(r["dof"]) for r in recs)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError([f"{path}: not a parameters report ({exc})"]) from exc
    if config is not None:
        if len(recs) != len(config.absorbers):
            raise ConfigError([f"{path}: {len(recs)} absorbers, config has "
                               f"{len(config.absorbers)}"])
        sc = build_scenario(config)
        if tuple(sc.dofs) != dofs:
            raise ConfigError([f"{path}: absorber attachments differ from the config"])
    return AbsorberSet(m, c, k, dofs), report


def tracked_peaks(scenario, absorbers, start_omegas):
    """Peaks reached from ``start_omegas`` with the absorbers held fixed."""
    return find_peaks(scenario.model, absorbers, scenario.channel, start_omegas, strict=False)


def robustness_sweep(config, absorbers, nominal_omegas, out_dir, figures=None):
    """
    Re-evaluate a fixed design on perturbed hosts.

    For each relative change ``delta`` of the robustness parameter, the
    controlled peaks are re-found starting from the nominal peak
    frequencies and the largest amplitude is compared with the nominal one
    obtained the same way. Amplitudes keep the nominal normalization, so the
    increase measures physical amplification.
    """
    name = robust_parameter(config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    nominal = build_scenario(config)
    norm = nominal.channel.normalization
    nominal_omegas = np.asarray(nominal_omegas, dtype=float)
    omegas = config.frequency_grid()
    base = tracked_peaks(nominal, absorbers, nominal_omegas)
    if not len(base):
        raise EqualPeakError("no controlled peak found on the nominal host")
    ref = float(base.amplitudes.max())
    cases, curves, files = [], [], []
    for delta in [0.0] + [float(d) for d in config.robustness["deltas"] if d != 0.0]:
        sc = build_scenario(config, {name: 1.0 + delta}, normalization=norm)
        peaks = base if delta == 0.0 else tracked_peaks(sc, absorbers, nominal_omegas)
        amp = float(peaks.amplitudes.max()) if len(peaks) else math.inf
        h = evaluate_frf(sc, absorbers, omegas)
        tag = "nominal" if delta == 0.0 else f"{delta:+g}"
        _write_frf(out_dir, f"robust_{tag}", omegas, h, norm, files)
        curves.append((f"{name} {tag}", omegas, np.abs(h) / norm))
        finite = np.isfinite(np.abs(h))
        cases.append(dict(delta=delta, factor=1.0 + delta, max_amplification=amp,
                          relative_increase=amp / ref - 1.0,
                          grid_max_amplification=float(np.max(np.abs(h[finite]))) / norm,
                          peaks=peak_records(peaks)))
    report = dict(scenario=config.name, parameter=name, normalization=norm,
                  nominal_max_amplification=ref, cases=cases)
    path = out_dir / "robust.json"
    write_json(path, report)
    files.append(path)
    path = out_dir / "robust.csv"
    write_csv(path, ("delta", "max_amplification", "relative_increase"),
              [(c["delta"], c["max_amplification"], c["relative_increase"]) for c in cases])
    files.append(path)
    if _figures_enabled(config, figures):
        from .plotting import plot_frf
        files.append(plot_frf(out_dir / "robust.png", curves, title=f"{config.name}: {name}",
                              normalized=norm != 1.0))
    return RunOutcome(EXIT_OK, files, report=report)
