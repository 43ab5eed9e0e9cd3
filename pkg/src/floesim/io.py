"""File formats: field JSON/CSV, trajectories, ocean amplitudes, binary
checkpoints, contact logs, gridded snapshots, statistics tables and run
manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import platform
import struct
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError
from .floes import Domain, FloeField, minimum_image
from .ocean import OceanState

# -- fields ----------------------------------------------------------------

FIELD_COLUMNS = ["id", "r", "h", "x1", "x2", "angle", "v1", "v2", "omega", "kind"]
FIELD_UNITS = ["-", "m", "m", "m", "m", "rad", "m/s", "m/s", "rad/s", "-"]


def field_to_dict(field: FloeField) -> dict:
    floes = []
    for i in range(len(field)):
        floes.append({
            "id": int(field.ids[i]), "r": float(field.radius[i]), "h": float(field.thickness[i]),
            "x1": float(field.position[i, 0]), "x2": float(field.position[i, 1]),
            "angle": float(field.angle[i]), "v1": float(field.velocity[i, 0]),
            "v2": float(field.velocity[i, 1]), "omega": float(field.omega[i]),
            "kind": "super" if field.is_super[i] else "ordinary",
        })
    return {"domain": {"side": field.domain.side, "periodic": True}, "rho_ice": field.rho_ice,
            "floes": floes}


def field_from_dict(d: dict) -> FloeField:
    fl = d["floes"]
    n = len(fl)
    arr = lambda key: np.array([f[key] for f in fl], dtype=float)  # noqa: E731
    return FloeField(Domain(float(d["domain"]["side"])), [int(f["id"]) for f in fl], arr("r"), arr("h"),
                     np.column_stack([arr("x1"), arr("x2")]).reshape(n, 2), arr("angle"),
                     np.column_stack([arr("v1"), arr("v2")]).reshape(n, 2), arr("omega"),
                     [f.get("kind", "ordinary") == "super" for f in fl], float(d.get("rho_ice", 900.0)))


def write_field_json(path, field: FloeField):
    Path(path).write_text(json.dumps(field_to_dict(field), indent=1))


def read_field_json(path) -> FloeField:
    return field_from_dict(json.loads(Path(path).read_text()))


def _header(names, units):
    return [f"{n} [{u}]" if u != "-" else n for n, u in zip(names, units)]


def write_field_csv(path, field: FloeField):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_header(FIELD_COLUMNS, FIELD_UNITS))
        for f in field_to_dict(field)["floes"]:
            w.writerow([repr(f[c]) if isinstance(f[c], float) else f[c] for c in FIELD_COLUMNS])


# -- trajectories ------------------------------------------------------------

class TrajectoryWriter:
    """Sink writing one CSV row per floe per snapshot."""

    columns = ["t", "id", "x1", "x2", "angle", "v1", "v2", "omega"]
    units = ["s", "-", "m", "m", "rad", "m/s", "m/s", "rad/s"]

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(_header(self.columns, self.units))
        self.count = 0

    def __call__(self, state):
        f = state.field
        for i in range(len(f)):
            self._w.writerow([repr(float(state.t)), int(f.ids[i]), repr(float(f.position[i, 0])),
                              repr(float(f.position[i, 1])), repr(float(f.angle[i])),
                              repr(float(f.velocity[i, 0])), repr(float(f.velocity[i, 1])),
                              repr(float(f.omega[i]))])
        self.count += 1

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def ocean_to_dict(state: OceanState) -> dict:
    return {
        "t": state.t, "rossby": state.rossby, "side": state.side, "time_unit": state.time_unit,
        "modes": [{"k1": int(k[0]), "k2": int(k[1]), "class": str(c), "re": float(a.real),
                   "im": float(a.imag)} for k, c, a in zip(state.kvec, state.cls, state.amp)],
    }


def write_ocean_json(path, state: OceanState):
    Path(path).write_text(json.dumps(ocean_to_dict(state), indent=1))


# -- binary checkpoint -------------------------------------------------------
#
# little-endian, fixed layout:
#   header   8s magic "FLOECKP1", u32 version, u32 L, u32 M, f64 t, f64 side,
#            f64 rho_ice, f64 rossby, f64 time_unit
#   floes    L records of  i64 id, 8 x f64 (r, h, x1, x2, angle, v1, v2, omega), u8 super
#   modes    M records of  i64 k1, i64 k2, u8 class (0 GB, 1 g+, 2 g-), i64 partner,
#            f64 damping, phase, sigma, forcing re, forcing im, forcing freq,
#            eig1 re, eig1 im, eig2 re, eig2 im, amp re, amp im

MAGIC = b"FLOECKP1"
VERSION = 1
_HEAD = struct.Struct("<8sIIIddddd")
_FLOE = np.dtype([("id", "<i8"), ("vals", "<f8", (8,)), ("super", "u1")])
_MODE = np.dtype([("k", "<i8", (2,)), ("cls", "u1"), ("partner", "<i8"), ("vals", "<f8", (12,))])
_CLS = {"GB": 0, "gravity+": 1, "gravity-": 2}
_CLS_INV = {v: k for k, v in _CLS.items()}


def write_checkpoint(path, state) -> None:
    f, oc = state.field, state.ocean
    L, M = len(f), len(oc)
    floes = np.zeros(L, dtype=_FLOE)
    floes["id"] = f.ids
    floes["vals"] = np.column_stack([f.radius, f.thickness, f.position, f.angle, f.velocity, f.omega])
    floes["super"] = f.is_super
    modes = np.zeros(M, dtype=_MODE)
    modes["k"] = oc.kvec
    modes["cls"] = [_CLS[c] for c in oc.cls]
    modes["partner"] = oc.partner
    modes["vals"] = np.column_stack([
        oc.damping, oc.phase, oc.sigma, oc.forcing_amplitude.real, oc.forcing_amplitude.imag,
        oc.forcing_frequency, oc.eig[:, 0].real, oc.eig[:, 0].imag, oc.eig[:, 1].real,
        oc.eig[:, 1].imag, oc.amp.real, oc.amp.imag]).reshape(M, 12)
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, VERSION, L, M, state.t, f.domain.side, f.rho_ice, oc.rossby,
                            oc.time_unit))
        fh.write(floes.tobytes())
        fh.write(modes.tobytes())


def read_checkpoint(path):
    from .integrator import SimulationState
    data = Path(path).read_bytes()
    magic, version, L, M, t, side, rho, rossby, unit = _HEAD.unpack_from(data, 0)
    if magic != MAGIC or version != VERSION:
        raise ConfigurationError(f"{path}: not a version-{VERSION} checkpoint")
    off = _HEAD.size
    floes = np.frombuffer(data, dtype=_FLOE, count=L, offset=off)
    off += L * _FLOE.itemsize
    modes = np.frombuffer(data, dtype=_MODE, count=M, offset=off)
    v = floes["vals"]
    field = FloeField(Domain(side), floes["id"], v[:, 0], v[:, 1], v[:, 2:4], v[:, 4], v[:, 5:7],
                      v[:, 7], floes["super"].astype(bool), rho)
    m = modes["vals"]
    ocean = OceanState(modes["k"], [_CLS_INV[int(c)] for c in modes["cls"]], m[:, 0], m[:, 1], m[:, 2],
                       m[:, 3] + 1j * m[:, 4], m[:, 5],
                       np.column_stack([m[:, 6] + 1j * m[:, 7], m[:, 8] + 1j * m[:, 9]]),
                       modes["partner"], m[:, 10] + 1j * m[:, 11], t, rossby, side, unit)
    return SimulationState(field, ocean, t)


# -- tables ----------------------------------------------------------------

def write_table(path, columns: dict, units: dict | None = None):
    """CSV with one column per key; ``units`` annotate the header."""
    units = units or {}
    names = list(columns)
    arrays = [np.asarray(columns[n]).ravel() for n in names]
    n = len(arrays[0]) if arrays else 0
    if any(len(a) != n for a in arrays):
        raise ValueError("columns differ in length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"{c} [{units[c]}]" if units.get(c) else c for c in names])
        for i in range(n):
            w.writerow([_fmt(a[i]) for a in arrays])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def read_table(path) -> dict:
    """Read a CSV written by :func:`write_table`; numeric columns become arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigurationError(f"{path}: empty table")
    names = [h.split(" [")[0] for h in rows[0]]
    out = {}
    for j, name in enumerate(names):
        col = [r[j] for r in rows[1:]]
        try:
            out[name] = np.array([float(c) for c in col])
        except ValueError:
            out[name] = np.array(col, dtype=object)
    return out


def contact_rows(field: FloeField, mat, t: float, h_ref: float = 0.0) -> list:
    """``(t, l, j, overlap, |f_n|, |f_t|)`` for every contact (ids, l < j)."""
    from ._kernels import pair_law
    from .contact import contact_pairs
    rows = []
    for a, b in contact_pairs(field):
        dx, dy = minimum_image(field.position[b] - field.position[a], field.domain.side)
        ok, fx, fy, ft, overlap, c, fn = pair_law(
            float(dx), float(dy), field.radius[a], field.radius[b], field.thickness[a],
            field.thickness[b], field.velocity[a, 0], field.velocity[a, 1], field.velocity[b, 0],
            field.velocity[b, 1], field.omega[a], field.omega[b], mat.young, mat.shear,
            mat.friction, h_ref)
        if ok:
            rows.append((t, int(field.ids[a]), int(field.ids[b]), overlap, fn, abs(ft)))
    return rows


class ContactLogWriter:
    columns = ["t [s]", "l", "j", "overlap [m]", "f_n [N]", "f_t [N]"]

    def __init__(self, path, mat, h_ref=0.0):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(self.columns)
        self.mat = mat
        self.h_ref = h_ref

    def __call__(self, state):
        for row in contact_rows(state.field, self.mat, state.t, self.h_ref):
            self._w.writerow([_fmt(v) for v in row])

    def close(self):
        self._fh.close()


def write_grid_csv(path, state: OceanState, n: int = 64):
    from .ocean import grid_snapshot
    x1, x2, u1, u2, w = grid_snapshot(state, n)
    write_table(path, {"x1": x1, "x2": x2, "u1": u1, "u2": u2, "curl": w},
                {"x1": "m", "x2": "m", "u1": "m/s", "u2": "m/s", "curl": "1/s"})


# -- manifest ----------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> dict:
    import numba
    import scipy
    return {"floesim": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def write_manifest(outdir, command: str, cfg, seeds: dict, outputs: list, extra: dict | None = None):
    outdir = Path(outdir)
    files = {}
    for p in outputs:
        p = Path(p)
        files[p.name] = {"sha256": sha256_file(p), "bytes": p.stat().st_size}
    doc = {
        "command": command,
        "argv": sys.argv,
        "config_sha256": cfg.digest(),
        "config": cfg.values,
        "seeds": seeds,
        "versions": versions(),
        "outputs": files,
    }
    if extra:
        doc.update(extra)
    path = outdir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, default=str))
    return path
