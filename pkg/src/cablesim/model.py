"""Packed array form of a morphology + channel model for the step kernels.

Everything the hot loops need is flattened into numpy arrays so the same
model drives both the numba and the numpy backends. Compartments are indexed
by increasing id; the topological-order invariant makes index 0 the root and
guarantees parent index < child index.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channels import ChannelSpec, GateKinetics, RateTerm, TableCurve
from .morphology import MorphologyTree, axial_couplings, default_theta_path

RATE_KIND_CODE = {"constant": 0, "exp": 1, "sigmoid": 2, "linoid": 3}
MODE_RATES, MODE_YINF_TAU, MODE_TABLE = 0, 1, 2


@dataclass
class CalciumParams:
    """Global calcium pool constants (pool units per A*s, seconds)."""

    influx_scale: float = 0.0
    decay_time: float = 0.02
    enabled: bool = False


@dataclass
class CompiledModel:
    """Flattened model arrays; immutable by convention after build."""

    tree: MorphologyTree
    channels: tuple                      # ChannelSpec, in declaration order
    ids: np.ndarray                      # compartment ids by index
    parent: np.ndarray                   # parent index, -1 for root
    c1: np.ndarray                       # coupling toward parent, 1/s
    ce: np.ndarray                       # parent's coupling toward this comp
    csum: np.ndarray                     # c1 + sum of child couplings
    alpha: np.ndarray                    # 1/(r_m c_m)
    a_el: np.ndarray                     # alpha * E_L
    el: np.ndarray
    invcm: np.ndarray                    # 1/c_m
    area: np.ndarray                     # lateral membrane area, m^2
    # channels
    ch_gbar: np.ndarray
    ch_e: np.ndarray
    ch_p: np.ndarray
    ch_act: np.ndarray                   # activation gate column
    ch_inact: np.ndarray                 # inactivation gate column or -1
    ch_casrc: np.ndarray                 # uint8 flags
    # gate kinetics encoding: two terms per gate (alpha/beta or yinf/tau)
    g_driver: np.ndarray                 # 0 = voltage, 1 = calcium
    g_mode: np.ndarray
    g_kind: np.ndarray                   # (ngate, 2)
    g_rate: np.ndarray
    g_vh: np.ndarray
    g_sc: np.ndarray
    tb_ptr: np.ndarray                   # pooled tables, (ngate+1,)
    tb_x: np.ndarray
    tb_ya: np.ndarray
    tb_yb: np.ndarray
    # calcium + clamps + options
    ca_enabled: bool
    ca_scale: float
    ca_tau: float
    clamp_idx: np.ndarray
    clamp_val: np.ndarray
    rk_gate_multistage: bool
    theta_path: np.ndarray               # compartment indices, tip to tip
    hash: str = field(default="")

    @property
    def n(self) -> int:
        return self.ids.size

    @property
    def n_gates(self) -> int:
        return self.g_driver.size

    def index_of(self, compartment_id: int) -> int:
        pos = int(np.searchsorted(self.ids, compartment_id))
        if pos >= self.ids.size or self.ids[pos] != compartment_id:
            raise KeyError(f"no compartment with id {compartment_id}")
        return pos


def _encode_term(term) -> tuple:
    if isinstance(term, RateTerm):
        return (RATE_KIND_CODE[term.kind], term.rate, term.v_half, term.scale)
    raise TypeError(f"cannot encode kinetics term {term!r}")


def _encode_gate(kin: GateKinetics, tables: list) -> tuple:
    driver = 0 if kin.driver == "v" else 1
    if kin.from_rates:
        if isinstance(kin.alpha, RateTerm) and isinstance(kin.beta, RateTerm):
            return driver, MODE_RATES, _encode_term(kin.alpha), \
                _encode_term(kin.beta), None
        raise TypeError("rate kinetics must use RateTerm")
    if isinstance(kin.yinf_curve, TableCurve):
        if not isinstance(kin.tau_curve, TableCurve) or \
                kin.tau_curve.x != kin.yinf_curve.x:
            raise TypeError("table kinetics need matching yinf/tau grids")
        tables.append((np.asarray(kin.yinf_curve.x, dtype=float),
                       np.asarray(kin.yinf_curve.y, dtype=float),
                       np.asarray(kin.tau_curve.y, dtype=float)))
        zero = (0, 0.0, 0.0, 1.0)
        return driver, MODE_TABLE, zero, zero, len(tables) - 1
    return driver, MODE_YINF_TAU, _encode_term(kin.yinf_curve), \
        _encode_term(kin.tau_curve), None


def compile_model(tree: MorphologyTree, channels,
                  calcium: Optional[CalciumParams] = None,
                  clamps: Optional[dict] = None,
                  rk_gate_multistage: bool = True,
                  theta_path_ids=None) -> CompiledModel:
    """Flatten a validated tree plus channel roster into kernel arrays.

    clamps maps compartment id to a held voltage; theta_path_ids overrides
    the default tip-to-tip plane-wave sampling path.
    """
    n = tree.n
    ids = np.array(tree.ids, dtype=np.int64)
    index = {cid: i for i, cid in enumerate(tree.ids)}
    parent = np.array([-1 if c.parent is None else index[c.parent]
                       for c in tree.compartments], dtype=np.int64)

    coup = axial_couplings(tree)
    c1 = np.array([c.c1 for c in coup])
    ce = np.zeros(n)
    for comp, cp in zip(tree.compartments, coup):
        for child_id, c2 in zip(tree.children[comp.id], cp.c2_list):
            ce[index[child_id]] = c2
    csum = c1.copy()
    for j in range(n):
        if parent[j] >= 0:
            csum[parent[j]] += ce[j]

    alpha = np.array([1.0 / (c.r_m * c.c_m) for c in tree.compartments])
    el = np.array([c.E_L for c in tree.compartments])
    invcm = np.array([1.0 / c.c_m for c in tree.compartments])
    area = np.array([c.membrane_area for c in tree.compartments])

    channels = tuple(channels)
    gate_rows = []       # encoded gate kinetics in channel order
    tables = []
    ch_act, ch_inact = [], []
    for spec in channels:
        ch_act.append(len(gate_rows))
        gate_rows.append(_encode_gate(spec.activation, tables))
        if spec.inactivation is not None:
            ch_inact.append(len(gate_rows))
            gate_rows.append(_encode_gate(spec.inactivation, tables))
        else:
            ch_inact.append(-1)

    ngate = len(gate_rows)
    g_driver = np.zeros(ngate, dtype=np.int64)
    g_mode = np.zeros(ngate, dtype=np.int64)
    g_kind = np.zeros((ngate, 2), dtype=np.int64)
    g_rate = np.zeros((ngate, 2))
    g_vh = np.zeros((ngate, 2))
    g_sc = np.ones((ngate, 2))
    tb_ptr = np.zeros(ngate + 1, dtype=np.int64)
    table_of_gate = {}
    for g, (driver, mode, term_a, term_b, tidx) in enumerate(gate_rows):
        g_driver[g] = driver
        g_mode[g] = mode
        for s, term in enumerate((term_a, term_b)):
            g_kind[g, s], g_rate[g, s], g_vh[g, s], g_sc[g, s] = term
        if tidx is not None:
            table_of_gate[g] = tidx
    chunks_x, chunks_a, chunks_b = [], [], []
    off = 0
    for g in range(ngate):
        if g in table_of_gate:
            x, ya, yb = tables[table_of_gate[g]]
            chunks_x.append(x)
            chunks_a.append(ya)
            chunks_b.append(yb)
            off += x.size
        tb_ptr[g + 1] = off
    tb_x = np.concatenate(chunks_x) if chunks_x else np.zeros(0)
    tb_ya = np.concatenate(chunks_a) if chunks_a else np.zeros(0)
    tb_yb = np.concatenate(chunks_b) if chunks_b else np.zeros(0)

    calcium = calcium or CalciumParams()
    clamps = clamps or {}
    clamp_idx = np.array(sorted(index[cid] for cid in clamps), dtype=np.int64)
    clamp_val = np.array([clamps[tree.ids[i]] for i in clamp_idx])

    if theta_path_ids is None:
        theta_path_ids = default_theta_path(tree)
    theta_path = np.array([index[cid] for cid in theta_path_ids],
                          dtype=np.int64)

    model = CompiledModel(
        tree=tree, channels=channels, ids=ids, parent=parent,
        c1=c1, ce=ce, csum=csum, alpha=alpha, a_el=alpha * el, el=el,
        invcm=invcm, area=area,
        ch_gbar=np.array([c.gbar for c in channels]),
        ch_e=np.array([c.reversal for c in channels]),
        ch_p=np.array([c.exponent for c in channels], dtype=np.int64),
        ch_act=np.array(ch_act, dtype=np.int64),
        ch_inact=np.array(ch_inact, dtype=np.int64),
        ch_casrc=np.array([1 if c.calcium_source else 0 for c in channels],
                          dtype=np.uint8),
        g_driver=g_driver, g_mode=g_mode, g_kind=g_kind, g_rate=g_rate,
        g_vh=g_vh, g_sc=g_sc, tb_ptr=tb_ptr, tb_x=tb_x, tb_ya=tb_ya,
        tb_yb=tb_yb,
        ca_enabled=calcium.enabled, ca_scale=calcium.influx_scale,
        ca_tau=calcium.decay_time,
        clamp_idx=clamp_idx, clamp_val=clamp_val,
        rk_gate_multistage=rk_gate_multistage, theta_path=theta_path)
    model.hash = _model_hash(model)
    return model


_HASHED_ARRAYS = ("ids", "parent", "c1", "ce", "csum", "alpha", "a_el", "el",
                  "invcm", "area", "ch_gbar", "ch_e", "ch_p", "ch_act",
                  "ch_inact", "ch_casrc", "g_driver", "g_mode", "g_kind",
                  "g_rate", "g_vh", "g_sc", "tb_ptr", "tb_x", "tb_ya",
                  "tb_yb", "clamp_idx", "clamp_val", "theta_path")


def _model_hash(model: CompiledModel) -> str:
    h = hashlib.sha256()
    for name in _HASHED_ARRAYS:
        arr = getattr(model, name)
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update(repr((model.ca_enabled, model.ca_scale, model.ca_tau,
                   model.rk_gate_multistage)).encode())
    return h.hexdigest()[:16]
