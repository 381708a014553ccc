"""
Scenario configuration files.

A scenario is a UTF-8 JSON document with the blocks below. Indices of
dofs and modes are zero-based; plate modes may also be given as their
``[m, n]`` wave numbers and plate points as ``[x, y]`` coordinates in m.

.. code-block:: text

    name           str, used in report headers (optional)
    description    free text (optional, ignored)
    model          exactly one of
                     chain:  masses, springs, dampers (optional)
                     plate:  length, width, thickness, young_modulus,
                             poisson_ratio, density, max_m, max_n,
                             damping_ratio, frequency_convention
                     modal:  frequencies, damping_ratios, mode_shapes (rows = dofs)
    channel        force, measurement, normalization ("none" | "static")
    absorbers      list of {mode, attach}
    budget         m_max (kg), mass_split ("equal" or list of weights)
    optimizer      HomotopyConfig fields except m_max, plus scan_per_mode
    output         omega_min, omega_max, n_points, spacing ("linear" | "log"),
                   figures (bool)
    robustness     parameter, deltas (relative changes, e.g. [0.05, -0.05])

Validation collects every problem before raising, so a broken file is
reported in one pass.
"""

from dataclasses import dataclass, field
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, UnsupportedParameterError

TOP_KEYS = {"name", "description", "model", "channel", "absorbers", "budget",
            "optimizer", "output", "robustness"}
MODEL_KEYS = {
    "chain": {"masses", "springs", "dampers"},
    "plate": {"length", "width", "thickness", "young_modulus", "poisson_ratio", "density",
              "max_m", "max_n", "damping_ratio", "frequency_convention"},
    "modal": {"frequencies", "damping_ratios", "mode_shapes"},
}
PLATE_REQUIRED = ("length", "width", "thickness", "young_modulus", "poisson_ratio", "density")
OPTIMIZER_KEYS = {"constraint_mode", "k_max", "grad_tol", "ftol", "max_iter", "lower_bounds",
                  "homotopy_tol", "stop_on_convergence", "scan_per_mode"}
ROBUST_PARAMETERS = {
    "plate": {"young_modulus", "density", "thickness"},
    "chain": {"masses", "springs"},
    "modal": set(),
}
ROBUST_ALIASES = {"E": "young_modulus", "rho": "density", "h": "thickness"}


@dataclass
class ScenarioConfig:
    """Validated scenario; see the module docstring for the layout."""

    name: str
    model_kind: str
    model: dict
    channel: dict
    absorbers: list
    m_max: float = None
    mass_split: object = "equal"
    optimizer: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    robustness: dict = None
    source: str = None

    @property
    def n_absorbers(self):
        return len(self.absorbers)

    def frequency_grid(self):
        out = self.output
        if out.get("spacing", "linear") == "log":
            return np.geomspace(out["omega_min"], out["omega_max"], out["n_points"])
        return np.linspace(out["omega_min"], out["omega_max"], out["n_points"])


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_point(v):
    return isinstance(v, (list, tuple)) and len(v) == 2 and all(_is_number(c) for c in v)


def _numbers(v):
    return isinstance(v, list) and all(_is_number(x) for x in v)


def _check_unknown(block, allowed, where, problems):
    for key in sorted(set(block) - set(allowed)):
        problems.append(f"{where}.{key}: unknown field")


def _check_model(model, problems):
    if not isinstance(model, dict):
        problems.append("model: must be an object with one of 'chain', 'plate', 'modal'")
        return None, {}
    kinds = [k for k in model if k in MODEL_KEYS]
    _check_unknown(model, MODEL_KEYS, "model", problems)
    if len(kinds) != 1:
        problems.append(f"model: exactly one of chain/plate/modal is required, got {len(kinds)}")
        return None, {}
    kind = kinds[0]
    body = model[kind]
    if not isinstance(body, dict):
        problems.append(f"model.{kind}: must be an object")
        return kind, {}
    where = f"model.{kind}"
    _check_unknown(body, MODEL_KEYS[kind], where, problems)
    if kind == "chain":
        m, k = body.get("masses"), body.get("springs")
        if not (_numbers(m) and m and all(x > 0 for x in m)):
            problems.append(f"{where}.masses: nonempty list of positive numbers required")
            m = None
        if not (_numbers(k) and all(x >= 0 for x in k)):
            problems.append(f"{where}.springs: list of non-negative numbers required")
        elif m is not None and len(k) not in (len(m), len(m) + 1):
            problems.append(f"{where}.springs: expected {len(m)} or {len(m) + 1} entries")
        c = body.get("dampers")
        if c is not None:
            if not (_numbers(c) and all(x >= 0 for x in c)):
                problems.append(f"{where}.dampers: list of non-negative numbers required")
            elif _numbers(k) and len(c) != len(k):
                problems.append(f"{where}.dampers: must have as many entries as springs")
    elif kind == "plate":
        for key in PLATE_REQUIRED:
            v = body.get(key)
            if not _is_number(v):
                problems.append(f"{where}.{key}: number required")
            elif key == "poisson_ratio" and not 0 < v < 0.5:
                problems.append(f"{where}.poisson_ratio: must lie in (0, 0.5)")
            elif key != "poisson_ratio" and v <= 0:
                problems.append(f"{where}.{key}: must be positive")
        for key in ("max_m", "max_n"):
            if key in body and not (_is_int(body[key]) and body[key] >= 1):
                problems.append(f"{where}.{key}: integer >= 1 required")
        z = body.get("damping_ratio", 0.0)
        if not (_is_number(z) and 0 <= z < 1):
            problems.append(f"{where}.damping_ratio: must lie in [0, 1)")
        if body.get("frequency_convention", "halved") not in ("halved", "textbook"):
            problems.append(f"{where}.frequency_convention: 'halved' or 'textbook' required")
    else:
        w, z, phi = body.get("frequencies"), body.get("damping_ratios"), body.get("mode_shapes")
        if not (_numbers(w) and w and all(x > 0 for x in w)):
            problems.append(f"{where}.frequencies: nonempty list of positive numbers required")
            w = None
        elif any(b < a for a, b in zip(w, w[1:])):
            problems.append(f"{where}.frequencies: must be ascending")
        if not (_numbers(z) and all(0 <= x < 1 for x in z)):
            problems.append(f"{where}.damping_ratios: list of numbers in [0, 1) required")
        elif w is not None and len(z) != len(w):
            problems.append(f"{where}.damping_ratios: one entry per frequency required")
        if not (isinstance(phi, list) and phi and all(_numbers(r) for r in phi)):
            problems.append(f"{where}.mode_shapes: nonempty list of numeric rows required")
        elif w is not None and any(len(r) != len(w) for r in phi):
            problems.append(f"{where}.mode_shapes: every row needs one entry per mode")
    return kind, body


def _n_dofs(kind, body):
    if kind == "chain" and _numbers(body.get("masses")):
        return len(body["masses"])
    if kind == "modal" and isinstance(body.get("mode_shapes"), list):
        return len(body["mode_shapes"])
    return None


def _n_modes(kind, body):
    if kind == "chain":
        return _n_dofs(kind, body)
    if kind == "modal" and isinstance(body.get("frequencies"), list):
        return len(body["frequencies"])
    if kind == "plate":
        return body.get("max_m", 10) * body.get("max_n", 10)
    return None


def _check_location(v, kind, body, where, problems):
    if kind == "plate":
        if not _is_point(v):
            problems.append(f"{where}: [x, y] coordinates required for a plate")
            return
        a, b = body.get("length"), body.get("width")
        if _is_number(a) and _is_number(b) and not (0 <= v[0] <= a and 0 <= v[1] <= b):
            problems.append(f"{where}: point {list(v)} lies outside the plate")
    elif kind is not None:
        n = _n_dofs(kind, body)
        if not _is_int(v):
            problems.append(f"{where}: integer dof index required")
        elif n is not None and not 0 <= v < n:
            problems.append(f"{where}: dof {v} out of range [0, {n})")


def _check_mode(v, kind, body, where, problems):
    if kind == "plate" and isinstance(v, list):
        if not (len(v) == 2 and all(_is_int(c) and c >= 1 for c in v)):
            problems.append(f"{where}: plate mode [m, n] with m, n >= 1 required")
        elif v[0] > body.get("max_m", 10) or v[1] > body.get("max_n", 10):
            problems.append(f"{where}: mode {v} is not retained")
        return
    n = _n_modes(kind, body)
    if not _is_int(v):
        problems.append(f"{where}: integer mode index required")
    elif n is not None and not 0 <= v < n:
        problems.append(f"{where}: mode {v} out of range [0, {n})")


def validate_config(data, source=None):
    """
    Check a decoded scenario document and build a :class:`ScenarioConfig`.

    Raises
    ------
    ConfigError
        Listing every violated field.
    """
    problems = []
    if not isinstance(data, dict):
        raise ConfigError(["top level: JSON object required"])
    _check_unknown(data, TOP_KEYS, "config", problems)
    name = data.get("name", Path(source).stem if source else "scenario")
    if not isinstance(name, str) or not name:
        problems.append("name: nonempty string required")
    if "model" not in data:
        problems.append("model: missing")
    kind, body = _check_model(data.get("model", {}), problems) if "model" in data else (None, {})

    channel = data.get("channel")
    if not isinstance(channel, dict):
        problems.append("channel: object with force and measurement required")
        channel = {}
    else:
        _check_unknown(channel, {"force", "measurement", "normalization"}, "channel", problems)
        for key in ("force", "measurement"):
            if key not in channel:
                problems.append(f"channel.{key}: missing")
            else:
                _check_location(channel[key], kind, body, f"channel.{key}", problems)
        if channel.get("normalization", "none") not in ("none", "static"):
            problems.append("channel.normalization: 'none' or 'static' required")

    absorbers = data.get("absorbers", [])
    if not isinstance(absorbers, list):
        problems.append("absorbers: list required")
        absorbers = []
    modes_seen = []
    for i, a in enumerate(absorbers):
        where = f"absorbers[{i}]"
        if not isinstance(a, dict):
            problems.append(f"{where}: object with mode and attach required")
            continue
        _check_unknown(a, {"mode", "attach"}, where, problems)
        for key in ("mode", "attach"):
            if key not in a:
                problems.append(f"{where}.{key}: missing")
        if "mode" in a:
            _check_mode(a["mode"], kind, body, f"{where}.mode", problems)
            if a["mode"] in modes_seen:
                problems.append(f"{where}.mode: mode already targeted by another absorber")
            modes_seen.append(a["mode"])
        if "attach" in a:
            _check_location(a["attach"], kind, body, f"{where}.attach", problems)

    budget = data.get("budget", {})
    m_max, mass_split = None, "equal"
    if not isinstance(budget, dict):
        problems.append("budget: object required")
    else:
        _check_unknown(budget, {"m_max", "mass_split"}, "budget", problems)
        m_max = budget.get("m_max")
        if absorbers and not (_is_number(m_max) and m_max > 0):
            problems.append("budget.m_max: positive mass (kg) required when absorbers are given")
        mass_split = budget.get("mass_split", "equal")
        if mass_split != "equal":
            if not (_numbers(mass_split) and all(w > 0 for w in mass_split)):
                problems.append("budget.mass_split: 'equal' or list of positive weights required")
            elif len(mass_split) != len(absorbers):
                problems.append("budget.mass_split: one weight per absorber required")

    optimizer = data.get("optimizer", {})
    if not isinstance(optimizer, dict):
        problems.append("optimizer: object required")
        optimizer = {}
    else:
        _check_unknown(optimizer, OPTIMIZER_KEYS, "optimizer", problems)
        if optimizer.get("constraint_mode", "inequality") not in ("inequality", "equality"):
            problems.append("optimizer.constraint_mode: 'inequality' or 'equality' required")
        for key in ("k_max", "max_iter", "scan_per_mode"):
            if key in optimizer and not (_is_int(optimizer[key]) and optimizer[key] >= 0):
                problems.append(f"optimizer.{key}: non-negative integer required")
        for key in ("grad_tol", "ftol", "homotopy_tol"):
            if key in optimizer and not (_is_number(optimizer[key]) and optimizer[key] > 0):
                problems.append(f"optimizer.{key}: positive number required")
        lb = optimizer.get("lower_bounds")
        if lb is not None and not (_numbers(lb) and len(lb) == 3 and all(x >= 0 for x in lb)):
            problems.append("optimizer.lower_bounds: three non-negative numbers required")
        if "stop_on_convergence" in optimizer and not isinstance(
                optimizer["stop_on_convergence"], bool):
            problems.append("optimizer.stop_on_convergence: boolean required")

    output = data.get("output")
    if not isinstance(output, dict):
        problems.append("output: object with omega_min, omega_max, n_points required")
        output = {}
    else:
        _check_unknown(output, {"omega_min", "omega_max", "n_points", "spacing", "figures"},
                       "output", problems)
        lo, hi, n = output.get("omega_min"), output.get("omega_max"), output.get("n_points")
        if not (_is_number(lo) and lo >= 0):
            problems.append("output.omega_min: non-negative number required")
        if not (_is_number(hi) and hi > 0):
            problems.append("output.omega_max: positive number required")
        elif _is_number(lo) and hi <= lo:
            problems.append("output.omega_max: must exceed omega_min")
        if not (_is_int(n) and n >= 2):
            problems.append("output.n_points: integer >= 2 required")
        spacing = output.get("spacing", "linear")
        if spacing not in ("linear", "log"):
            problems.append("output.spacing: 'linear' or 'log' required")
        elif spacing == "log" and _is_number(lo) and lo <= 0:
            problems.append("output.omega_min: must be positive for a log grid")
        if "figures" in output and not isinstance(output["figures"], bool):
            problems.append("output.figures: boolean required")

    robustness = data.get("robustness")
    if robustness is not None:
        if not isinstance(robustness, dict):
            problems.append("robustness: object required")
            robustness = None
        else:
            _check_unknown(robustness, {"parameter", "deltas"}, "robustness", problems)
            if not isinstance(robustness.get("parameter"), str):
                problems.append("robustness.parameter: string required")
            d = robustness.get("deltas")
            if not (_numbers(d) and d and all(x > -1 for x in d)):
                problems.append("robustness.deltas: nonempty list of numbers > -1 required")

    if problems:
        raise ConfigError(problems)
    return ScenarioConfig(name=name, model_kind=kind, model=dict(body), channel=dict(channel),
                          absorbers=[dict(a) for a in absorbers], m_max=m_max,
                          mass_split=mass_split, optimizer=dict(optimizer), output=dict(output),
                          robustness=None if robustness is None else dict(robustness),
                          source=None if source is None else str(source))


def load_config(path):
    """Read and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read ({exc.strerror or exc})"]) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: "
                           f"{exc.msg}"]) from exc
    return validate_config(data, source=path)


def robust_parameter(config):
    """Canonical name of the robustness parameter, checked against the model kind."""
    if config.robustness is None:
        raise ConfigError(["robustness: block required for a robustness sweep"])
    name = config.robustness["parameter"]
    name = ROBUST_ALIASES.get(name, name)
    if name not in ROBUST_PARAMETERS[config.model_kind]:
        allowed = sorted(ROBUST_PARAMETERS[config.model_kind]) or ["none"]
        raise UnsupportedParameterError(
            f"parameter {config.robustness['parameter']!r} cannot be varied on a "
            f"{config.model_kind} model (supported: {', '.join(allowed)})")
    return name
