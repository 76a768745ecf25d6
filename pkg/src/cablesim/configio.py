"""TOML config loading for morphologies, channel rosters and experiments."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .channels import ChannelSpec, GateKinetics, RateTerm, TableCurve
from .errors import CableSimError, ConfigError
from .model import CalciumParams, CompiledModel, compile_model
from .morphology import (DEFAULT_CM, DEFAULT_EL, DEFAULT_RL, DEFAULT_RM,
                         MorphologyTree, build_tree)
from .schemes import SchemeKind, parse_scheme

#: Full-protocol defaults: 1..99 us step grid, 3 s duration.
DEFAULT_DT_LIST = [i * 1e-6 for i in range(1, 100)]
DEFAULT_DURATION = 3.0
DEFAULT_REFERENCE_DT = 1e-6


def _read_toml(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError("file not found", path=str(path))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}", path=str(path))


def _require(mapping, key, path, where):
    if key not in mapping:
        raise ConfigError(f"missing required key {key!r}", path=str(path),
                          field=where)
    return mapping[key]


def load_morphology(path) -> MorphologyTree:
    """Compartment list with optional [defaults] for c_m, r_m, r_L, E_L.

    Each [[compartment]] needs id, radius_m and length_m; parent is omitted
    for the root. Per-compartment overrides of the electrical constants are
    allowed.
    """
    path = Path(path)
    doc = _read_toml(path)
    defaults = doc.get("defaults", {})
    base = {
        "c_m": float(defaults.get("c_m", DEFAULT_CM)),
        "r_m": float(defaults.get("r_m", DEFAULT_RM)),
        "r_L": float(defaults.get("r_L", DEFAULT_RL)),
        "E_L": float(defaults.get("E_L", DEFAULT_EL)),
    }
    entries = doc.get("compartment", [])
    if not entries:
        raise ConfigError("no [[compartment]] entries", path=str(path))
    descs = []
    for i, entry in enumerate(entries):
        where = f"compartment[{i}]"
        try:
            desc = {
                "id": int(_require(entry, "id", path, where)),
                "parent": int(entry["parent"]) if "parent" in entry else None,
                "radius": float(_require(entry, "radius_m", path, where)),
                "length": float(_require(entry, "length_m", path, where)),
            }
            for key in ("c_m", "r_m", "r_L", "E_L"):
                desc[key] = float(entry.get(key, base[key]))
            descs.append(desc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad compartment entry: {exc}",
                              path=str(path), field=where)
    try:
        return build_tree(descs)
    except (CableSimError, ValueError) as exc:
        raise ConfigError(f"invalid morphology: {exc}", path=str(path))


def _parse_term(obj, path, where) -> RateTerm:
    try:
        return RateTerm(kind=str(_require(obj, "kind", path, where)),
                        rate=float(_require(obj, "rate", path, where)),
                        v_half=float(obj.get("v_half", 0.0)),
                        scale=float(obj.get("scale", 1.0)))
    except ValueError as exc:
        raise ConfigError(f"bad rate term: {exc}", path=str(path),
                          field=where)


def _parse_kinetics(obj, path, where) -> GateKinetics:
    driver = str(obj.get("driver", "v"))
    driver = {"v": "v", "voltage": "v", "ca": "ca", "calcium": "ca"}.get(
        driver)
    if driver is None:
        raise ConfigError("driver must be 'v' or 'calcium'", path=str(path),
                          field=where)
    if "table" in obj:
        tbl = obj["table"]
        v = tuple(float(x) for x in _require(tbl, "v", path, where))
        yinf = tuple(float(x) for x in _require(tbl, "yinf", path, where))
        tau = tuple(float(x) for x in _require(tbl, "tau", path, where))
        if not (len(v) == len(yinf) == len(tau)) or len(v) < 2:
            raise ConfigError("table needs matching v/yinf/tau lists of "
                              "length >= 2", path=str(path), field=where)
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ConfigError("table v grid must be strictly increasing",
                              path=str(path), field=where)
        return GateKinetics(yinf_curve=TableCurve(x=v, y=yinf),
                            tau_curve=TableCurve(x=v, y=tau), driver=driver)
    if "alpha" in obj and "beta" in obj:
        return GateKinetics(alpha=_parse_term(obj["alpha"], path, where),
                            beta=_parse_term(obj["beta"], path, where),
                            driver=driver)
    if "yinf" in obj and "tau" in obj:
        return GateKinetics(yinf_curve=_parse_term(obj["yinf"], path, where),
                            tau_curve=_parse_term(obj["tau"], path, where),
                            driver=driver)
    raise ConfigError("kinetics need alpha/beta, yinf/tau, or a table",
                      path=str(path), field=where)


def load_channels(path):
    """Channel roster plus optional [calcium] pool constants."""
    path = Path(path)
    doc = _read_toml(path)
    channels = []
    for i, entry in enumerate(doc.get("channel", [])):
        where = f"channel[{i}]"
        name = str(_require(entry, "name", path, where))
        act = _parse_kinetics(_require(entry, "activation", path, where),
                              path, f"{where}.activation")
        inact = None
        if "inactivation" in entry:
            inact = _parse_kinetics(entry["inactivation"], path,
                                    f"{where}.inactivation")
        try:
            channels.append(ChannelSpec(
                name=name,
                gbar=float(_require(entry, "gbar", path, where)),
                reversal=float(_require(entry, "reversal", path, where)),
                exponent=int(entry.get("exponent", 1)),
                activation=act, inactivation=inact,
                calcium_source=bool(entry.get("calcium_source", False)),
                calcium_dependent=act.driver == "ca" or
                (inact is not None and inact.driver == "ca")))
        except ValueError as exc:
            raise ConfigError(f"bad channel: {exc}", path=str(path),
                              field=where)
    calcium = None
    if "calcium" in doc:
        sec = doc["calcium"]
        calcium = CalciumParams(
            influx_scale=float(sec.get("influx_scale", 0.0)),
            decay_time=float(sec.get("decay_time", 0.02)),
            enabled=True)
    return channels, calcium


@dataclass
class ExperimentConfig:
    """One sweep/run description: model files plus protocol parameters."""

    morphology_path: Path
    channels_path: Path
    schemes: list
    dt_list: list
    duration: float
    record: list                 # compartment ids; empty = soma (root)
    out_dir: Path
    reference_dt: float = DEFAULT_REFERENCE_DT
    gbar_scale: float = 1.0
    rk_gate_multistage: bool = True
    clamps: dict = field(default_factory=dict)
    theta_path: list = None
    coeff_every: int = 10
    v_init: float = -0.07
    save_final_state: Path = None
    initial_state: Path = None
    # convergence-order study section
    order_dt: float = 16e-6
    order_refinements: int = 3
    order_reference_factor: int = 16
    order_duration: float = 0.02
    order_gbar_scale: float = 1e-3

    def build_tree(self) -> MorphologyTree:
        return load_morphology(self.morphology_path)

    def build_model(self, gbar_scale=None) -> CompiledModel:
        tree = load_morphology(self.morphology_path)
        channels, calcium = load_channels(self.channels_path)
        scale = self.gbar_scale if gbar_scale is None else gbar_scale
        if scale != 1.0:
            channels = [ChannelSpec(
                name=c.name, gbar=c.gbar * scale, reversal=c.reversal,
                exponent=c.exponent, activation=c.activation,
                inactivation=c.inactivation,
                calcium_source=c.calcium_source,
                calcium_dependent=c.calcium_dependent) for c in channels]
        try:
            return compile_model(tree, channels, calcium=calcium,
                                 clamps=self.clamps or None,
                                 rk_gate_multistage=self.rk_gate_multistage,
                                 theta_path_ids=self.theta_path)
        except KeyError as exc:
            raise ConfigError(f"unknown compartment id {exc.args[0]} in "
                              "clamps or theta_path",
                              path=str(self.morphology_path))


def load_experiment(path) -> ExperimentConfig:
    path = Path(path)
    doc = _read_toml(path)
    base = path.parent

    def respath(key, default=None):
        if key not in doc:
            if default is None:
                raise ConfigError(f"missing required key {key!r}",
                                  path=str(path))
            return default
        return (base / str(doc[key])).resolve()

    schemes = [parse_scheme(s) for s in
               doc.get("schemes", [s.value for s in SchemeKind])]
    dt_list = [float(x) for x in doc.get("dt_list", DEFAULT_DT_LIST)]
    if any(dt <= 0 for dt in dt_list):
        raise ConfigError("dt_list entries must be > 0", path=str(path),
                          field="dt_list")
    if sorted(dt_list) != dt_list:
        raise ConfigError("dt_list must be sorted ascending", path=str(path),
                          field="dt_list")
    duration = float(doc.get("duration", DEFAULT_DURATION))
    if dt_list and duration <= max(dt_list):
        raise ConfigError("duration must exceed the largest step size",
                          path=str(path), field="duration")
    clamps = {}
    for entry in doc.get("clamp", []):
        clamps[int(entry["compartment"])] = float(entry["voltage"])
    order = doc.get("order", {})
    cfg = ExperimentConfig(
        morphology_path=respath("morphology"),
        channels_path=respath("channels"),
        schemes=schemes,
        dt_list=dt_list,
        duration=duration,
        record=[int(x) for x in doc.get("record", [])],
        out_dir=(base / str(doc.get("out_dir", "out"))).resolve(),
        reference_dt=float(doc.get("reference_dt", DEFAULT_REFERENCE_DT)),
        gbar_scale=float(doc.get("gbar_scale", 1.0)),
        rk_gate_multistage=bool(doc.get("rk_gate_multistage", True)),
        clamps=clamps,
        theta_path=[int(x) for x in doc["theta_path"]]
        if "theta_path" in doc else None,
        coeff_every=int(doc.get("coeff_every", 10)),
        v_init=float(doc.get("v_init", -0.07)),
        save_final_state=(base / doc["save_final_state"]).resolve()
        if "save_final_state" in doc else None,
        initial_state=(base / doc["initial_state"]).resolve()
        if "initial_state" in doc else None,
        order_dt=float(order.get("dt", 16e-6)),
        order_refinements=int(order.get("refinements", 3)),
        order_reference_factor=int(order.get("reference_factor", 16)),
        order_duration=float(order.get("duration", 0.02)),
        order_gbar_scale=float(order.get("gbar_scale", 1e-3)),
    )
    if not math.isfinite(cfg.duration) or cfg.duration <= 0:
        raise ConfigError("duration must be positive", path=str(path),
                          field="duration")
    return cfg
