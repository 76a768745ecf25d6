"""Recorded simulation traces and their lossless CSV / JSON forms.

Floats are serialized with repr (shortest round-trip), so re-reading a file
and re-writing it is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

FORMAT_NAME = "cablesim-trace"
FORMAT_VERSION = 1


@dataclass
class CoefficientRecord:
    """Per-instant stability inputs captured alongside a reference run."""

    times: np.ndarray          # capture instants, seconds
    k_values: np.ndarray       # (nt, n) alpha + sum(beta) per compartment
    csum: np.ndarray           # (n,) static axial coupling sums c1 + sum(c2)
    path_indices: np.ndarray   # compartment indices of the plane-wave path
    path_voltages: np.ndarray  # (nt, len(path)) voltages along the path
    ids: np.ndarray            # compartment ids by index


@dataclass
class SimTrace:
    """Uniformly sampled voltages for the recorded compartments."""

    scheme: str
    dt: float
    duration: float
    rec_ids: list
    times: np.ndarray
    voltages: np.ndarray       # (n_samples, n_recorded)
    model_hash: str
    backend: str
    stable: bool = True
    failure_time: Optional[float] = None
    note: str = ""
    coeffs: Optional[CoefficientRecord] = None
    final_state: object = field(default=None, repr=False, compare=False)

    @property
    def n_samples(self) -> int:
        return self.times.size

    def column(self, compartment_id: int) -> np.ndarray:
        return self.voltages[:, self.rec_ids.index(compartment_id)]

    # -- CSV ---------------------------------------------------------------

    def to_csv(self) -> str:
        lines = [f"# {FORMAT_NAME} {FORMAT_VERSION}",
                 f"# scheme={self.scheme}",
                 f"# dt={self.dt!r}",
                 f"# duration={self.duration!r}",
                 f"# model={self.model_hash}",
                 f"# backend={self.backend}",
                 f"# stable={'true' if self.stable else 'false'}",
                 "# failure_time=" + ("" if self.failure_time is None
                                      else repr(self.failure_time)),
                 f"# note={self.note}",
                 "time_s," + ",".join(f"V_{cid}" for cid in self.rec_ids)]
        for i in range(self.n_samples):
            row = [repr(float(self.times[i]))]
            row += [repr(float(x)) for x in self.voltages[i]]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "SimTrace":
        meta = {}
        rows = []
        header = None
        for line in text.splitlines():
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, val = body.partition("=")
                    meta[key] = val
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append([float(x) for x in line.split(",")])
        if header is None:
            raise ValueError("trace CSV has no header row")
        rec_ids = [int(name[2:]) for name in header[1:]]
        data = np.array(rows, dtype=float).reshape(len(rows), len(header))
        failure = meta.get("failure_time", "")
        return cls(scheme=meta["scheme"], dt=float(meta["dt"]),
                   duration=float(meta["duration"]), rec_ids=rec_ids,
                   times=data[:, 0], voltages=data[:, 1:],
                   model_hash=meta.get("model", ""),
                   backend=meta.get("backend", ""),
                   stable=meta.get("stable", "true") == "true",
                   failure_time=float(failure) if failure else None,
                   note=meta.get("note", ""))

    # -- JSON --------------------------------------------------------------

    def to_json_obj(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "scheme": self.scheme,
            "dt": self.dt,
            "duration": self.duration,
            "model": self.model_hash,
            "backend": self.backend,
            "stable": self.stable,
            "failure_time": self.failure_time,
            "note": self.note,
            "rec_ids": list(self.rec_ids),
            "times": [float(t) for t in self.times],
            "voltages": {str(cid): [float(x) for x in self.voltages[:, c]]
                         for c, cid in enumerate(self.rec_ids)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SimTrace":
        obj = json.loads(text)
        if obj.get("format") != FORMAT_NAME:
            raise ValueError("not a cablesim trace JSON")
        rec_ids = [int(c) for c in obj["rec_ids"]]
        times = np.array(obj["times"], dtype=float)
        volts = np.column_stack([np.array(obj["voltages"][str(c)], dtype=float)
                                 for c in rec_ids]) if rec_ids else \
            np.zeros((times.size, 0))
        return cls(scheme=obj["scheme"], dt=obj["dt"],
                   duration=obj["duration"], rec_ids=rec_ids, times=times,
                   voltages=volts, model_hash=obj.get("model", ""),
                   backend=obj.get("backend", ""), stable=obj["stable"],
                   failure_time=obj.get("failure_time"),
                   note=obj.get("note", ""))
