"""TOML configuration: device profiles and pulse sequences.

Files carry ordinary frequencies in Hz and times in seconds, with the unit
in each key name (``g_pe_hz``, ``T1_s``). Conversion to angular rates
happens here and nowhere else.
"""
from __future__ import annotations

import copy
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .analytics import DetectionChain
from .core import DeviceParams, MechanicalMode, QubitParams, hz
from .errors import ConfigError
from .protocol import ProtocolSettings
from .pulses import Idle, MicrowaveDrive, OpticalReadout, PulseSequence, StarkShift

_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_NUM = {"type": "number"}
_FRACTION = {"type": "number", "minimum": 0, "maximum": 1}
_LEVELS = {"type": "integer", "minimum": 2}


def _obj(props, required=None):
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": list(props) if required is None else required}


MODE_SCHEMA = _obj({"omega_m_hz": _POS, "g_om_hz": _POS, "kappa_i_hz": _POS,
                    "T1_s": _POS, "g_pe_hz": _NONNEG},
                   ["omega_m_hz", "g_om_hz", "kappa_i_hz", "T1_s"])

DEVICE_SCHEMA = _obj({
    "g_pe_hz": _POS,
    "omega_c_hz": _POS,
    "kappa_i_o_hz": _POS,
    "kappa_e_o_hz": _POS,
    "T_f_K": _POS,
    "mode_index": {"type": "integer", "minimum": 0},
    "qubit": _obj({"E_J_hz": _POS, "E_c_hz": _POS, "T1_s": _POS, "T2s_s": _POS,
                   "kappa_e_hz": _POS, "kappa_e_alt_hz": _POS},
                  ["E_J_hz", "E_c_hz", "T1_s", "T2s_s", "kappa_e_hz"]),
    "mech_modes": {"type": "array", "minItems": 1, "items": MODE_SCHEMA},
}, ["g_pe_hz", "omega_c_hz", "kappa_i_o_hz", "kappa_e_o_hz", "T_f_K", "qubit",
    "mech_modes"])

PROFILE_SCHEMA = _obj({
    "name": {"type": "string"},
    "device": DEVICE_SCHEMA,
    "chain": _obj({"eta_cplr": _FRACTION, "eta_tran": _FRACTION, "eta_spd": _FRACTION,
                   "eta_sys_measured": _FRACTION, "dark_rate_cps": _NONNEG,
                   "envelope_factor": _NONNEG}, []),
    "optics": _obj({"n_c": _NONNEG, "photons_per_uW": _POS, "npsd_power_uW": _NONNEG}, []),
    "protocol": _obj({
        "qubit_detuning_hz": _NUM, "bias_detuning_hz": _NUM, "pi_time_s": _POS,
        "drive_edge_s": _NONNEG, "stark_shift_hz": _NUM, "stark_rise_s": _NONNEG,
        "swap_time_s": _POS, "readout_rise_s": _NONNEG, "tau_ro_s": _POS,
        "repetition_period_s": _POS, "N_m": _LEVELS, "N_m_readout": _LEVELS,
        "dt_s": _POS}, []),
    "calibration": _obj({"p_d": _POS, "heating_n_m": _NONNEG, "heating_tau_s": _POS,
                         "hot_bath_n_p": _NONNEG, "gamma_p_hz": _NONNEG}, []),
    "qp": _obj({"tau_s": _POS, "tau_vortex_s": _POS, "recovery_s": _POS,
                "threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "rabi_window_s": _POS}, []),
}, ["device"])

_SEGMENT_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["microwave_drive", "stark_shift", "optical_readout", "idle"]},
        "length_s": _NONNEG, "duration_s": _POS, "rabi_hz": _NONNEG,
        "detuning_hz": _NUM, "phase_rad": _NUM, "edge_s": _NONNEG,
        "shift_hz": _NUM, "rise_s": _NONNEG, "fall_s": _NONNEG, "n_c_peak": _NONNEG,
    },
    "additionalProperties": False,
}

SEQUENCE_SCHEMA = _obj({
    "qubit_detuning_hz": _NUM,
    "repetition_period_s": _POS,
    "segments": {"type": "array", "items": _SEGMENT_SCHEMA},
}, ["segments"])


def _path(error):
    return ".".join(str(p) for p in error.absolute_path)


def validate_document(doc, schema=PROFILE_SCHEMA):
    """Raise ConfigError with the dotted path of the first schema violation."""
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, _path(e) or "<root>")


def bundled_profiles():
    root = resources.files("transduce_sim") / "data"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def read_toml(source):
    """Parse a bundled profile name or a TOML file path into a dict."""
    source = str(source)
    path = Path(source)
    try:
        if path.suffix == ".toml" or path.exists():
            text = path.read_text()
        else:
            res = resources.files("transduce_sim") / "data" / f"{source}.toml"
            if not res.is_file():
                raise ConfigError(f"no such profile or file: {source}", "profile")
            text = res.read_text()
    except OSError as exc:
        raise ConfigError(str(exc), "profile") from exc
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}", "<file>") from exc


def parse_override(text):
    """``a.b.0.c=value`` -> (["a", "b", "0", "c"], parsed value)."""
    if "=" not in text:
        raise ConfigError("override must look like key=value", text)
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError("empty override key", text)
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key.split("."), value


def apply_overrides(doc, overrides):
    doc = copy.deepcopy(doc)
    for text in overrides or ():
        keys, value = parse_override(text)
        node = doc
        for i, k in enumerate(keys[:-1]):
            node = _child(node, k, keys[: i + 1])
        last = keys[-1]
        if isinstance(node, list):
            node[_index(node, last, keys)] = value
        else:
            node[last] = value
    return doc


def _index(node, key, keys):
    try:
        i = int(key)
        node[i]
        return i
    except (ValueError, IndexError):
        raise ConfigError("no such list element", ".".join(keys)) from None


def _child(node, key, keys):
    if isinstance(node, list):
        return node[_index(node, key, keys)]
    if not isinstance(node, dict):
        raise ConfigError("cannot descend into a scalar", ".".join(keys))
    return node.setdefault(key, {})


# ----------------------------------------------------------------- conversion

def device_from_dict(d):
    q = d["qubit"]
    qubit = QubitParams(q["E_J_hz"], q["E_c_hz"], q["T1_s"], q["T2s_s"],
                        hz(q["kappa_e_hz"]),
                        hz(q["kappa_e_alt_hz"]) if "kappa_e_alt_hz" in q else None)
    modes = [MechanicalMode(hz(m["omega_m_hz"]), hz(m["g_om_hz"]), hz(m["kappa_i_hz"]),
                            m["T1_s"], hz(m.get("g_pe_hz", 0.0)))
             for m in d["mech_modes"]]
    return DeviceParams(hz(d["g_pe_hz"]), modes, hz(d["omega_c_hz"]), hz(d["kappa_i_o_hz"]),
                        hz(d["kappa_e_o_hz"]), qubit, d["T_f_K"], d.get("mode_index", 0))


def settings_from_dict(p, optics=None):
    base = ProtocolSettings()
    kw = {}
    rates = {"qubit_detuning_hz": "qubit_detuning", "bias_detuning_hz": "bias_detuning",
             "stark_shift_hz": "stark_shift"}
    times = {"pi_time_s": "pi_time", "drive_edge_s": "drive_edge", "stark_rise_s": "stark_rise",
             "swap_time_s": "swap_time", "readout_rise_s": "readout_rise", "tau_ro_s": "tau_ro",
             "repetition_period_s": "repetition_period", "dt_s": "dt"}
    for k, name in rates.items():
        if k in p:
            kw[name] = hz(p[k])
    for k, name in times.items():
        if k in p:
            kw[name] = float(p[k])
    for k in ("N_m", "N_m_readout"):
        if k in p:
            kw[k] = int(p[k])
    if optics and "n_c" in optics:
        kw["n_c"] = float(optics["n_c"])
    return ProtocolSettings(**{**base.__dict__, **kw})


@dataclass(frozen=True)
class Profile:
    """A validated configuration document and the objects built from it."""

    name: str
    document: dict
    device: DeviceParams
    settings: ProtocolSettings

    def section(self, key):
        return self.document.get(key, {})

    def chain(self, envelope_factor=None):
        c = self.section("chain")
        env = c.get("envelope_factor", 1.0) if envelope_factor is None else envelope_factor
        return DetectionChain(self.device.eta_kappa, c.get("eta_cplr", 0.65),
                              c.get("eta_tran", 0.03), c.get("eta_spd", 0.85),
                              c.get("dark_rate_cps", 10.0), c.get("eta_sys_measured"), env)


def profile_from_dict(doc, name="custom"):
    validate_document(doc)
    device = device_from_dict(doc["device"])
    settings = settings_from_dict(doc.get("protocol", {}), doc.get("optics"))
    return Profile(doc.get("name", name), doc, device, settings)


def load_profile(source="paper_device", overrides=()):
    """Read, override, validate and convert a device profile.

    Schema problems raise ConfigError; physically inconsistent parameters
    (for instance an unresolved sideband) raise ValidityError.
    """
    doc = apply_overrides(read_toml(source), overrides)
    return profile_from_dict(doc, Path(str(source)).stem)


# ------------------------------------------------------------------ sequences

def sequence_from_dict(doc):
    validate_document(doc, SEQUENCE_SCHEMA)
    segs = []
    for i, s in enumerate(doc["segments"]):
        kind = s["kind"]
        try:
            if kind == "microwave_drive":
                segs.append(MicrowaveDrive(s["length_s"], hz(s.get("rabi_hz", 0.0)),
                                           hz(s.get("detuning_hz", 0.0)),
                                           s.get("phase_rad", 0.0), s.get("edge_s", 2e-9)))
            elif kind == "stark_shift":
                segs.append(StarkShift(s["duration_s"], hz(s["shift_hz"]), s.get("rise_s", 15e-9)))
            elif kind == "optical_readout":
                segs.append(OpticalReadout(s["duration_s"], s["n_c_peak"], s.get("rise_s", 20e-9),
                                           s.get("fall_s", 0.0)))
            else:
                segs.append(Idle(s["duration_s"]))
        except KeyError as exc:
            raise ConfigError(f"missing field {exc.args[0]!r}", f"segments.{i}") from None
        except ValueError as exc:
            raise ConfigError(str(exc), f"segments.{i}") from None
    try:
        return PulseSequence(segs, hz(doc.get("qubit_detuning_hz", -10e6)),
                             doc.get("repetition_period_s", 10e-3))
    except ValueError as exc:
        raise ConfigError(str(exc), "repetition_period_s") from None


def load_sequence(path):
    return sequence_from_dict(read_toml(path))

