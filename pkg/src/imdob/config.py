"""JSON scenario configuration.

Every key is checked against a fixed schema; unknown keys and malformed
values raise ``ConfigError`` naming the dotted key. Matrix-valued entries
accept a scalar (times identity), a list (diagonal) or a list of rows.
"""
import copy
import json
import os

import numpy as np

from . import exosystem as exo
from .errors import ConfigError, ImdobError
from .observer import ObserverGains
from .plant import ControllerGains
from .sim import AnalysisConfig, FreqIdConfig, InitialCondition, MODES, Scenario

SCHEMA_VERSION = 1

# allowed keys per section; None marks a leaf
_SCHEMA = {
    "schema_version": None, "mode": None, "t_end": None, "step": None, "seed": None,
    "decimate": None,
    "disturbance": {"channels": None},
    "model_order": {"orders": None, "has_constant": None},
    "exo_m_spectra": None,
    "observer": {"K": None, "Lambda": None, "P": None},
    "controller": {"alpha": None, "Ks": None, "kp1": None, "kp2": None, "K0": None, "J": None},
    "initial": {"random": None, "range": None, "values": None},
    "freq_id": {"T1": None, "cond_max": None, "stride": None},
    "analysis": {"window_fraction": None, "pe_window": None, "pe_alpha": None, "pe_stride": None},
}
_CHANNEL_KEYS = {"offset", "modes"}
_MODE_KEYS = {"amplitude", "frequency", "phase"}
_INITIAL_VALUES = {"q", "q_dot", "xi1", "xi2", "eta", "x2_hat", "theta"}

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "mode": "track_and_reject",
    "t_end": 200.0,
    "step": 1e-3,
    "seed": 0,
    "decimate": 10,
    "observer": {"K": -10.0, "Lambda": 500.0},
    "controller": {"alpha": 1.0, "Ks": 1.0, "kp1": 25.0, "kp2": 10.0, "K0": 1.0, "J": 1.0},
    "initial": {"random": True, "range": [-2.0, 2.0]},
    "freq_id": {"T1": 40.0, "cond_max": 1e8, "stride": 100},
    "analysis": {"window_fraction": 0.1, "pe_window": 10.0, "pe_alpha": 1e-4, "pe_stride": 100},
}


def _check_keys(d, schema, prefix=""):
    if not isinstance(d, dict):
        raise ConfigError(prefix.rstrip(".") or "<root>", "expected an object")
    for k, v in d.items():
        key = prefix + k
        if k not in schema:
            raise ConfigError(key, "unknown key")
        if schema[k] is not None:
            _check_keys(v, schema[k], key + ".")


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "values":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def matrix(value, n, key):
    """Scalar, diagonal list or full nested list to an n x n array."""
    try:
        a = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(key, "expected a number or numeric array") from None
    if a.ndim == 0:
        return float(a) * np.eye(n)
    if a.ndim == 1 and a.size == n:
        return np.diag(a)
    if a.shape == (n, n):
        return a
    raise ConfigError(key, f"expected a scalar, {n} diagonal entries or a {n}x{n} matrix")


def _number(cfg, key, cast=float, positive=False):
    try:
        v = cast(cfg[key])
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected {cast.__name__}") from None
    if positive and not v > 0:
        raise ConfigError(key, "must be positive")
    return v


def _disturbance(cfg):
    chans = cfg.get("disturbance", {}).get("channels")
    if not isinstance(chans, list) or not chans:
        raise ConfigError("disturbance.channels", "expected a non-empty list")
    out = []
    for i, ch in enumerate(chans):
        key = f"disturbance.channels.{i}"
        if not isinstance(ch, dict):
            raise ConfigError(key, "expected an object")
        for k in ch:
            if k not in _CHANNEL_KEYS:
                raise ConfigError(f"{key}.{k}", "unknown key")
        modes = []
        for j, m in enumerate(ch.get("modes", [])):
            mkey = f"{key}.modes.{j}"
            if not isinstance(m, dict):
                raise ConfigError(mkey, "expected an object")
            for k in m:
                if k not in _MODE_KEYS:
                    raise ConfigError(f"{mkey}.{k}", "unknown key")
            try:
                modes.append(exo.Mode(float(m["amplitude"]), float(m["frequency"]),
                                      float(m.get("phase", 0.0))))
            except KeyError as e:
                raise ConfigError(f"{mkey}.{e.args[0]}", "missing") from None
        try:
            out.append(exo.ChannelSpec(float(ch.get("offset", 0.0)), tuple(modes)))
        except (ValueError, ImdobError) as e:
            raise ConfigError(key, str(e)) from None
    return exo.DisturbanceSpec(tuple(out))


def resolve(raw):
    """Validate ``raw`` and fill defaults; returns the effective configuration dict."""
    _check_keys(raw, _SCHEMA)
    cfg = _merge(DEFAULTS, raw)
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {cfg['schema_version']!r}")
    if cfg["mode"] not in MODES:
        raise ConfigError("mode", f"expected one of {', '.join(MODES)}")
    spec = _disturbance(cfg)
    if "model_order" not in cfg:
        mo = exo.ModelOrder.default(spec)
        cfg["model_order"] = {"orders": list(mo.orders), "has_constant": list(mo.has_constant)}
    mo = cfg["model_order"]
    for k in ("orders", "has_constant"):
        if k not in mo:
            raise ConfigError(f"model_order.{k}", "missing")
    if "exo_m_spectra" not in cfg:
        cfg["exo_m_spectra"] = [list(-np.arange(1.0, r + 1)) for r in mo["orders"]]
    return cfg


def build_scenario(cfg):
    """Scenario from an effective configuration produced by ``resolve``."""
    spec = _disturbance(cfg)
    try:
        order = exo.ModelOrder(tuple(cfg["model_order"]["orders"]),
                               tuple(cfg["model_order"]["has_constant"]))
    except (TypeError, ValueError, ImdobError) as e:
        raise ConfigError("model_order", str(e)) from None
    if order.r_bar and len(order.orders) != spec.n_channels:
        raise ConfigError("model_order.orders", "one order per disturbance channel is required")
    try:
        exo.build_exo_blocks(spec, order, cfg["exo_m_spectra"])
    except (TypeError, ValueError, ImdobError) as e:
        raise ConfigError("exo_m_spectra", str(e)) from None
    ob = cfg["observer"]
    n2 = spec.n_channels
    K = matrix(ob["K"], n2, "observer.K")
    Lam = matrix(ob["Lambda"], order.r_bar, "observer.Lambda")
    P = matrix(ob["P"], n2, "observer.P") if "P" in ob else None
    try:
        gains = ObserverGains.from_K(K, Lam, P)
    except (ValueError, ImdobError) as e:
        key = "observer.P" if "inconsistent" in str(e) else "observer"
        raise ConfigError(key, str(e)) from None
    c = cfg["controller"]
    try:
        ctrl = ControllerGains(float(c["alpha"]), matrix(c["Ks"], 2, "controller.Ks"),
                               float(c["kp1"]), float(c["kp2"]), matrix(c["K0"], 2, "controller.K0"),
                               matrix(c["J"], 2, "controller.J"))
    except (TypeError, ValueError) as e:
        raise ConfigError("controller", str(e)) from None
    ini = cfg["initial"]
    values = ini.get("values", {})
    if not isinstance(values, dict):
        raise ConfigError("initial.values", "expected an object")
    for k in values:
        if k not in _INITIAL_VALUES:
            raise ConfigError(f"initial.values.{k}", "unknown key")
    rng = ini.get("range", [-2.0, 2.0])
    if not (isinstance(rng, list) and len(rng) == 2 and rng[0] < rng[1]):
        raise ConfigError("initial.range", "expected [low, high] with low < high")
    initial = InitialCondition(bool(ini.get("random", True)), tuple(rng), values)
    try:
        initial.draw(np.random.default_rng(0), order.r_bar)
    except ValueError as e:
        raise ConfigError("initial.values", str(e)) from None
    f = cfg["freq_id"]
    fid = FreqIdConfig(_number(f, "T1", positive=True), _number(f, "cond_max", positive=True),
                       _number(f, "stride", int, positive=True))
    a = cfg["analysis"]
    ana = AnalysisConfig(_number(a, "window_fraction"), _number(a, "pe_window", positive=True),
                         _number(a, "pe_alpha"), _number(a, "pe_stride", int, positive=True))
    if not 0 < ana.window_fraction < 0.5:
        raise ConfigError("analysis.window_fraction", "must lie in (0, 0.5)")
    t_end = _number(cfg, "t_end", positive=True)
    step = _number(cfg, "step", positive=True)
    if t_end < 10 * step:
        raise ConfigError("t_end", "must cover at least ten steps")
    try:
        return Scenario(spec, order, cfg["exo_m_spectra"], gains, ctrl, t_end, step,
                        _number(cfg, "seed", int), cfg["mode"], initial, fid, ana,
                        _number(cfg, "decimate", int, positive=True))
    except ValueError as e:
        raise ConfigError("<scenario>", str(e)) from None


def apply_override(raw, assignment):
    """Apply ``dotted.key=value`` to a raw config dict; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(assignment, "override must look like key=value")
    path, text = assignment.split("=", 1)
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    parts = path.split(".")
    schema = _SCHEMA
    node = raw
    for depth, part in enumerate(parts[:-1]):
        key = ".".join(parts[:depth + 1])
        if isinstance(node, list):
            try:
                node = node[int(part)]
            except (ValueError, IndexError):
                raise ConfigError(key, "no such list element") from None
            schema = None
            continue
        if schema is not None:
            if part not in schema:
                raise ConfigError(key, "unknown key")
            schema = schema[part]
        if part not in node:
            node[part] = copy.deepcopy(DEFAULTS.get(part, {})) if depth == 0 else {}
        node = node[part]
    last = parts[-1]
    if isinstance(node, list):
        try:
            node[int(last)] = value
        except (ValueError, IndexError):
            raise ConfigError(path, "no such list element") from None
        return raw
    if schema is not None and last not in schema:
        raise ConfigError(path, "unknown key")
    node[last] = value
    return raw


def load(path, overrides=()):
    """Read a scenario file, apply overrides, and return ``(effective_config, Scenario)``."""
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigError("--config", f"file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError("--config", f"invalid JSON: {e}") from None
    for o in overrides:
        apply_override(raw, o)
    cfg = resolve(raw)
    return cfg, build_scenario(cfg)


def default_out_dir():
    return os.environ.get("IMDOB_OUT_DIR", "out")
