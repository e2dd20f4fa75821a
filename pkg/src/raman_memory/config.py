"""Run configuration: schema, unit normalization and validation.

A config is a JSON object with optional sections.  Physical quantities may
be given either in lab units (keys with a ``_MHz``, ``_GHz``, ``_ns`` or
``_mm`` suffix) or directly in internal units (rad/us, us, mm).  The
normalized document uses internal keys only and is a fixed point of
``validate_config``.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

from .medium import CS_HYPERFINE_GHZ, TWO_PI, DetuningConfig, MediumParams, ghz
from .presets import CASES, G2_PRESETS, LIFETIME_US, MEDIA, PRESETS, case_setup
from .pulses import (DEFAULT_DIPOLE_CONSTANT, DEFAULT_FWHM, DEFAULT_WAIST_UM,
                     DEFAULT_WINDOW, build_sequence)
from .runner import OBSERVABLES, SCAN_VARIABLES
from .solver import SimGrid, SolverOptions

_DEFAULT_MEDIUM = MediumParams()


class ConfigError(ValueError):
    """Raised with the full list of problems found in a document."""

    def __init__(self, errors, warnings=()):
        self.errors = list(errors)
        self.warnings = list(warnings)
        super().__init__("; ".join(self.errors))


@dataclass
class Resolved:
    config: dict
    notes: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    # -- builders for the numerical layer
    def medium(self) -> MediumParams:
        return MediumParams(**self.config["medium"])

    def sequence(self):
        s = self.config["sequence"]
        return build_sequence(s["read_in_pJ"], s["read_out_pJ"], s["storage_time"], s["N_in"],
                              s["signal_shape"], fwhm=s["fwhm"], window=s["window"],
                              waist=s["waist_um"], dipole_constant=s["dipole_constant"])

    def detuning(self, medium=None) -> DetuningConfig:
        medium = medium or self.medium()
        d = self.config["detuning"]
        if d["Delta_s"] is None:
            cfg, _ = case_setup(d["case"], medium)
            return cfg
        return DetuningConfig(d["Delta_s"], medium.Delta_hf)

    def solver_options(self) -> SolverOptions:
        s = dict(self.config["solver"])
        if s["fwm_enabled"] is None:
            s["fwm_enabled"] = self.config["detuning"]["case"] in ("BNS", "STD")
        return SolverOptions(**s)

    def grid(self, seq=None, which="grid") -> SimGrid:
        g = self.config[which]
        seq = seq or self.sequence()
        return SimGrid.for_sequence(seq, g["n_z"], g["n_t"], tol=g["tol"], max_iter=g["max_iter"])


# ---------------------------------------------------------------------------
# schema: section -> key -> (kind, default, lab-unit alias, factor to internal)
# kinds: "num", "int", "bool", "str", "list", "dict", "opt_num", "opt_str"

def _spec(kind, default=None, alias=None, factor=None, check=None):
    return {"kind": kind, "default": default, "alias": alias, "factor": factor, "check": check}


_pos = (lambda v: v > 0, "must be > 0")
_nonneg = (lambda v: v >= 0, "must be >= 0")
_unit = (lambda v: 0.0 <= v <= 1.0, "out of [0,1]")

SCHEMA = {
    "medium": {
        "d0": _spec("num", None, check=_pos),
        "gamma_N": _spec("num", _DEFAULT_MEDIUM.gamma_N, "gamma_N_MHz", TWO_PI, _pos),
        "gamma_P": _spec("num", _DEFAULT_MEDIUM.gamma_P, "gamma_P_MHz", TWO_PI, _nonneg),
        "Delta_hf": _spec("num", _DEFAULT_MEDIUM.Delta_hf, "Delta_hf_GHz", TWO_PI * 1e3, _pos),
        "L": _spec("num", _DEFAULT_MEDIUM.L, "L_mm", 1.0, _pos),
        "alpha": _spec("num", None, check=_unit),
        "c": _spec("num", _DEFAULT_MEDIUM.c, check=_pos),
    },
    "sequence": {
        "read_in_pJ": _spec("num", None, check=_nonneg),
        "read_out_pJ": _spec("num", None, check=_nonneg),
        "storage_time": _spec("num", None, "storage_ns", 1e-3, _pos),
        "N_in": _spec("num", 1.0, check=_nonneg),
        "fwhm": _spec("num", DEFAULT_FWHM, "fwhm_ns", 1e-3, _pos),
        "window": _spec("num", DEFAULT_WINDOW, "window_ns", 1e-3, _pos),
        "waist_um": _spec("num", DEFAULT_WAIST_UM, check=_pos),
        "dipole_constant": _spec("num", DEFAULT_DIPOLE_CONSTANT, check=_pos),
        "signal_shape": _spec("str", "gaussian"),
    },
    "detuning": {
        "case": _spec("str", "BNS"),
        "Delta_s": _spec("opt_num", None, "Delta_s_GHz", TWO_PI * 1e3),
    },
    "grid": {
        "n_z": _spec("int", 200), "n_t": _spec("int", 2000),
        "tol": _spec("num", 1e-8, check=_pos), "max_iter": _spec("int", 200),
    },
    "greens": {
        "n_z": _spec("int", 40), "n_t": _spec("int", 1000),
        "tol": _spec("num", 1e-10, check=_pos), "max_iter": _spec("int", 200),
        "modes": _spec("list", ["s", "a", "b"]),
    },
    "solver": {
        "fwm_enabled": _spec("opt_bool", None),
        "spinwave_decay_rate": _spec("opt_num", None, "spinwave_lifetime_ns", None),
        "langevin": _spec("str", "vacuum-dropped"),
        "linear_loss": _spec("bool", True),
        "control_dispersion": _spec("bool", True),
        "include_populated_tail": _spec("bool", True),
        "acceleration": _spec("str", "chebyshev"),
    },
    "spectrum": {
        "lo": _spec("num", ghz(-10.0), "lo_GHz", TWO_PI * 1e3),
        "hi": _spec("num", ghz(20.0), "hi_GHz", TWO_PI * 1e3),
        "n_points": _spec("int", 3001),
    },
    "scan": {
        "scan_variable": _spec("str", "detuning"),
        "range": _spec("opt_list", None),
        "cases": _spec("list", ["BNS", "STD", "FWM_off", "FWM_off_blue"]),
        "outputs": _spec("list", ["eta", "eta_minus_ideal", "delta_k", "anti_stokes_OD"]),
        "N_F": _spec("num", 0.0, check=_nonneg),
    },
    "g2": {
        "preset": _spec("opt_str", None),
        "a": _spec("num", -1.0),
        "N_SRS": _spec("opt_num", None),
        "N_F": _spec("opt_num", None),
        "g2_F": _spec("num", 2.0, check=_nonneg),
        "eta": _spec("opt_num", None),
        "n_eta_h": _spec("int", 101),
    },
    "data": {
        "path": _spec("opt_str", None),
    },
    "fit": {
        "fixed": _spec("dict", {}),
        "bootstrap": _spec("bool", False),
        "n_boot": _spec("int", 1000),
        "seed": _spec("int", 0),
        "g2_F": _spec("num", 2.0, check=_nonneg),
    },
    "pumping": {
        "alphas": _spec("list", [0.0005, 0.001, 0.0015, 0.002, 0.003]),
        "N_F": _spec("num", 0.0, check=_nonneg),
        "window": _spec("str", "retrieval"),
    },
}
TOP_LEVEL = ("preset",) + tuple(SCHEMA)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _coerce(kind, v):
    """Value or ``None`` if it does not match ``kind``."""
    if kind in ("opt_num", "opt_str", "opt_bool", "opt_list") and v is None:
        return None, True
    base = kind.replace("opt_", "")
    if base == "num":
        return (float(v), True) if _is_num(v) else (None, False)
    if base == "int":
        if isinstance(v, bool):
            return None, False
        if isinstance(v, int) or (isinstance(v, float) and v.is_integer()):
            return int(v), True
        return None, False
    if base == "bool":
        return (v, True) if isinstance(v, bool) else (None, False)
    if base == "str":
        return (v, True) if isinstance(v, str) else (None, False)
    if base == "list":
        return (list(v), True) if isinstance(v, (list, tuple)) else (None, False)
    if base == "dict":
        return (dict(v), True) if isinstance(v, dict) else (None, False)
    raise AssertionError(kind)


def _preset_defaults(name):
    """Section defaults implied by a named operating point."""
    p = PRESETS[name]
    m = MEDIA[p.medium]
    return {
        "medium": {"d0": m.d0, "alpha": m.alpha},
        "sequence": {"read_in_pJ": p.read_in_pJ, "read_out_pJ": p.read_out_pJ,
                     "storage_time": p.storage_ns * 1e-3, "N_in": p.N_in},
        "solver": {"spinwave_decay_rate": None if p.with_decay else 0.0},
    }


def validate_config(doc, strict=True) -> Resolved:
    """Check ``doc`` and return it normalized to internal units.

    Every problem is collected before raising :class:`ConfigError`.  In
    lenient mode unknown keys become warnings.  Defaults that were filled in
    are listed in ``Resolved.notes``.
    """
    errors, warnings, notes = [], [], []
    if not isinstance(doc, dict):
        raise ConfigError(["config must be a JSON object"])
    doc = copy.deepcopy(doc)

    def unknown(where):
        msg = f"unknown key {where}"
        (errors if strict else warnings).append(msg)

    for k in doc:
        if k not in TOP_LEVEL:
            unknown(repr(k))

    preset = doc.get("preset", "sim750")
    if "preset" not in doc:
        notes.append("preset: default 'sim750'")
    if preset is not None and preset not in PRESETS:
        errors.append(f"unknown preset {preset!r}; known: {sorted(PRESETS)}")
        preset = None
    pdef = _preset_defaults(preset) if preset else {}

    out = {"preset": preset}
    for section, keys in SCHEMA.items():
        raw = doc.get(section, {})
        if not isinstance(raw, dict):
            errors.append(f"section {section!r} must be an object")
            raw = {}
        aliases = {s["alias"]: k for k, s in keys.items() if s["alias"]}
        for k in raw:
            if k not in keys and k not in aliases:
                unknown(f"{section}.{k}")
        sec = {}
        for key, s in keys.items():
            have_int, have_ext = key in raw, s["alias"] is not None and s["alias"] in raw
            if have_int and have_ext:
                errors.append(f"{section}: give either {key} or {s['alias']}, not both")
                continue
            if have_int or have_ext:
                name = key if have_int else s["alias"]
                val, ok = _coerce(s["kind"], raw[name])
                if not ok:
                    errors.append(f"{section}.{name} must be of type {s['kind'].replace('opt_', '')}")
                    continue
                if have_ext and val is not None:
                    val = _external(section, key, val, errors)
                    if val is None:
                        continue
            elif key in pdef.get(section, {}):
                val = pdef[section][key]
            elif s["default"] is None and s["kind"] == "num":
                errors.append(f"{section}.{key} is required")
                continue
            else:
                val = copy.deepcopy(s["default"])
                if section in _NOTED and s["default"] is not None:
                    ext = f" ({val / s['factor']:g} {s['alias'].rsplit('_', 1)[1]})" if s["alias"] else ""
                    notes.append(f"{section}.{key}: default {val:g}{ext}"
                                 if isinstance(val, float) else f"{section}.{key}: default {val!r}")
            if val is not None and s["check"] is not None and s["kind"] in ("num", "opt_num"):
                fn, msg = s["check"]
                if not fn(val):
                    errors.append(f"{key} {msg}" if "out of" in msg else f"{section}.{key} {msg}")
            sec[key] = val
        out[section] = sec

    if not errors:
        _cross_checks(out, errors, warnings, notes)
    if errors:
        raise ConfigError(errors, warnings)
    return Resolved(out, notes, warnings)


_NOTED = ("medium", "sequence", "detuning", "solver")


def _external(section, key, val, errors):
    if key == "spinwave_decay_rate":
        if not val > 0:
            errors.append("solver.spinwave_lifetime_ns must be > 0")
            return None
        return 1.0 / (val * 1e-3)
    return val * SCHEMA[section][key]["factor"]


def _cross_checks(cfg, errors, warnings, notes):
    med, seq, det = cfg["medium"], cfg["sequence"], cfg["detuning"]
    if not math.isclose(med["Delta_hf"], _DEFAULT_MEDIUM.Delta_hf, rel_tol=1e-12):
        warnings.append(
            f"Delta_hf overridden ({med['Delta_hf'] / (TWO_PI * 1e3):g} GHz vs "
            f"{CS_HYPERFINE_GHZ} GHz): BNS/STD presets shift to Delta_s = -/+ 2 Delta_hf "
            f"= {2 * med['Delta_hf'] / (TWO_PI * 1e3):g} GHz")
    if not seq["storage_time"] > seq["fwhm"]:
        errors.append("sequence.storage_time must exceed sequence.fwhm")
    if seq["signal_shape"] != "gaussian":
        errors.append("sequence.signal_shape must be 'gaussian'")
    if det["case"] not in CASES:
        errors.append(f"detuning.case must be one of {CASES}")
    sol = cfg["solver"]
    if sol["spinwave_decay_rate"] is None:
        case = det["case"] if det["case"] in CASES else "BNS"
        tau = LIFETIME_US["STD" if case in ("STD", "FWM_off_blue") else "BNS"]
        sol["spinwave_decay_rate"] = 1.0 / tau
        notes.append(f"solver.spinwave_decay_rate: default 1/{tau * 1e3:g} ns for case {case}")
    elif sol["spinwave_decay_rate"] < 0:
        errors.append("solver.spinwave_decay_rate must be >= 0")
    if sol["langevin"] != "vacuum-dropped":
        errors.append("solver.langevin must be 'vacuum-dropped'")
    if sol["acceleration"] not in ("chebyshev", "none"):
        errors.append("solver.acceleration must be 'chebyshev' or 'none'")
    for name in ("grid", "greens"):
        g = cfg[name]
        if g["n_z"] < 2 or g["n_t"] < 4:
            errors.append(f"{name}: need n_z >= 2 and n_t >= 4")
        if g["max_iter"] < 1:
            errors.append(f"{name}.max_iter must be >= 1")
    bad = [m for m in cfg["greens"]["modes"] if m not in ("s", "a", "b")]
    if bad or not cfg["greens"]["modes"]:
        errors.append("greens.modes must be a non-empty subset of ['s', 'a', 'b']")
    sp = cfg["spectrum"]
    if not sp["hi"] > sp["lo"] or sp["n_points"] < 2:
        errors.append("spectrum: need hi > lo and n_points >= 2")
    sc = cfg["scan"]
    if sc["scan_variable"] not in SCAN_VARIABLES:
        errors.append(f"scan.scan_variable must be one of {SCAN_VARIABLES}")
    elif sc["range"] is None:
        sc["range"] = list(_DEFAULT_RANGES[sc["scan_variable"]])
        notes.append(f"scan.range: default {sc['range']}")
    if sc["range"] is not None:
        r = sc["range"]
        if len(r) != 3 or not all(_is_num(x) for x in r) or not float(r[2]).is_integer() or r[2] < 2:
            errors.append("scan.range must be [lo, hi, n_points] with n_points >= 2")
        else:
            sc["range"] = [float(r[0]), float(r[1]), int(r[2])]
    for c in sc["cases"]:
        if c not in CASES:
            errors.append(f"scan.cases: unknown case {c!r}")
    for o in sc["outputs"]:
        if o not in OBSERVABLES:
            errors.append(f"scan.outputs: unknown observable {o!r}")
    g2 = cfg["g2"]
    if g2["preset"] is not None:
        if g2["preset"] not in G2_PRESETS:
            errors.append(f"g2.preset must be one of {sorted(G2_PRESETS)}")
        else:
            ref = G2_PRESETS[g2["preset"]]
            for k in ("N_SRS", "N_F"):
                if g2[k] is None:
                    g2[k] = getattr(ref["model"], k)
            if g2["eta"] is None:
                g2["eta"] = ref["eta"]
    for k in ("N_SRS", "N_F"):
        if g2[k] is not None and g2[k] < 0:
            errors.append(f"g2.{k} must be >= 0")
    if g2["eta"] is not None and not 0 < g2["eta"] <= 1:
        errors.append("g2.eta must lie in (0, 1]")
    if g2["n_eta_h"] < 2:
        errors.append("g2.n_eta_h must be >= 2")
    fit = cfg["fit"]
    for k, v in fit["fixed"].items():
        if k not in ("a", "N_SRS", "N_F"):
            errors.append(f"fit.fixed: unknown parameter {k!r}")
        elif not _is_num(v):
            errors.append(f"fit.fixed.{k} must be a number")
    if fit["n_boot"] < 10:
        errors.append("fit.n_boot must be >= 10")
    pu = cfg["pumping"]
    if not all(_is_num(a) and 0 <= a <= 1 for a in pu["alphas"]):
        errors.append("pumping.alphas: alpha out of [0,1]")
    if pu["window"] not in ("input", "retrieval"):
        errors.append("pumping.window must be 'input' or 'retrieval'")


_DEFAULT_RANGES = {
    "detuning": (2 * CS_HYPERFINE_GHZ - 5.0, 2 * CS_HYPERFINE_GHZ + 5.0, 101),
    "energy": (0.0, 1000.0, 11),
    "storage_time": (50.0, 1000.0, 11),
    "alpha": (0.0005, 0.003, 6),
}


# ---------------------------------------------------------------------------
# overrides

def apply_overrides(doc, pairs):
    """Apply ``section.key=value`` strings; values are parsed as JSON when possible."""
    import json

    doc = copy.deepcopy(doc)
    errors = []
    for pair in pairs:
        if "=" not in pair:
            errors.append(f"override {pair!r} is not of the form key=value")
            continue
        key, raw = pair.split("=", 1)
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            errors.append(f"override {pair!r} has an empty key")
            continue
        node = doc
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                errors.append(f"override {key!r}: {p!r} is not a section")
                break
            node = nxt
        else:
            node[parts[-1]] = val
    if errors:
        raise ConfigError(errors)
    return doc
