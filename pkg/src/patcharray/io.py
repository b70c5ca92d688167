"""Geometry files, Touchstone and CSV exports, metric reports.

Geometry files are TOML with human-scale units (mm, GHz, um); everything
past :func:`read_geometry` is SI.
"""

from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .farfield import (
    FarFieldPattern,
    SphericalGrid,
    cut_metrics,
    directivity,
    realized_gain,
    total_pattern,
)
from .microstrip import (
    COPPER_CONDUCTIVITY,
    COPPER_THICKNESS,
    MicrostripLine,
    Substrate,
    design_patch,
    PatchElement,
    validity_warnings,
)
from .network import (
    ArrayLayout,
    NetworkResult,
    analyze_sweep,
    element_excitations,
    extract_bandwidth,
    Z_REF,
)

SECTIONS = ("substrate", "feed", "patch", "interconnect", "sweep")
OPTIONAL_SECTIONS = ("model",)
DB_FLOOR = -200.0


class GeometryError(ValueError):
    """Geometry file could not be parsed or violates a layout invariant."""


@dataclass
class Geometry:
    """A parsed geometry file: the raw document plus the SI layout and sweep."""

    doc: dict
    layout: ArrayLayout
    sweep: tuple[float, float, int]


def _field(doc, section, name, kind=float, required=True, default=None, check=None, why=""):
    sec = doc.get(section, {})
    if name not in sec:
        if required:
            raise GeometryError(f"{section}.{name}: missing required field")
        return default
    value = sec[name]
    if isinstance(value, bool) or not isinstance(value, (int, float) if kind is float else kind):
        raise GeometryError(f"{section}.{name}: expected {kind.__name__}, got {value!r}")
    value = kind(value)
    if check is not None and not check(value):
        raise GeometryError(f"{section}.{name}: {why}, got {value!r}")
    return value


def _positive(v):
    return v > 0


def parse_geometry(text: str) -> Geometry:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise GeometryError(f"parse error: {exc}") from None
    for sec in SECTIONS:
        if not isinstance(doc.get(sec), dict):
            raise GeometryError(f"{sec}: missing section")
    for sec in doc:
        if sec not in SECTIONS + OPTIONAL_SECTIONS:
            raise GeometryError(f"{sec}: unknown section")

    substrate = Substrate(
        eps_r=_field(doc, "substrate", "eps_r", check=lambda v: v >= 1, why="must be >= 1"),
        tan_delta=_field(doc, "substrate", "tan_delta", check=lambda v: v >= 0, why="must be >= 0"),
        height=_field(doc, "substrate", "height_mm", check=_positive, why="must be > 0") * 1e-3,
        metal_conductivity=_field(doc, "substrate", "metal_conductivity", required=False,
                                  default=COPPER_CONDUCTIVITY, check=_positive, why="must be > 0"),
        metal_thickness=_field(doc, "substrate", "metal_thickness_um", required=False,
                               default=COPPER_THICKNESS * 1e6, check=lambda v: v >= 0,
                               why="must be >= 0") * 1e-6,
    )
    feed = MicrostripLine(
        _field(doc, "feed", "width_mm", check=_positive, why="must be > 0") * 1e-3,
        _field(doc, "feed", "length_mm", check=lambda v: v >= 0, why="must be >= 0") * 1e-3,
    )

    count = _field(doc, "patch", "count", kind=int, check=lambda v: v >= 1, why="must be >= 1")
    width = _field(doc, "patch", "width_mm", required=False, check=_positive, why="must be > 0")
    length = _field(doc, "patch", "length_mm", required=False, check=_positive, why="must be > 0")
    f0 = _field(doc, "patch", "auto_design_f0_ghz", required=False, check=_positive,
                why="must be > 0")
    if (width is None or length is None) and f0 is None:
        raise GeometryError(
            "patch: give width_mm and length_mm, or auto_design_f0_ghz to synthesize them"
        )
    if width is None or length is None:
        synth = design_patch(f0 * 1e9, substrate)
        width = synth.width * 1e3 if width is None else width
        length = synth.length * 1e3 if length is None else length
    patch = PatchElement(width * 1e-3, length * 1e-3)

    interconnect = MicrostripLine(
        _field(doc, "interconnect", "width_mm", check=_positive, why="must be > 0") * 1e-3,
        _field(doc, "interconnect", "length_mm", check=_positive,
               why="must be > 0 (it is the patch gap)") * 1e-3,
    )

    f_start = _field(doc, "sweep", "f_start_ghz", check=_positive, why="must be > 0")
    f_stop = _field(doc, "sweep", "f_stop_ghz", check=lambda v: v > f_start,
                    why="must exceed f_start_ghz")
    points = _field(doc, "sweep", "points", kind=int, check=lambda v: v >= 2, why="must be >= 2")

    pitch = _field(doc, "model", "pitch_mm", required=False, check=_positive, why="must be > 0")
    slot_model = _field(doc, "model", "slot_model", kind=str, required=False, default="fringe",
                        check=lambda v: v in ("fringe", "closed_form"),
                        why="must be 'fringe' or 'closed_form'")
    z_ref = _field(doc, "model", "z_ref_ohm", required=False, default=Z_REF, check=_positive,
                   why="must be > 0")

    layout = ArrayLayout.uniform(
        substrate, feed, patch, count, interconnect,
        pitch=None if pitch is None else pitch * 1e-3, slot_model=slot_model, z_ref=z_ref,
    )
    return Geometry(doc, layout, (f_start * 1e9, f_stop * 1e9, points))


def read_geometry(path) -> Geometry:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise GeometryError(f"cannot read {path}: {exc.strerror}") from None
    return parse_geometry(text)


def load_geometry(path) -> ArrayLayout:
    return read_geometry(path).layout


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_geometry(doc: dict) -> str:
    lines = []
    for sec in SECTIONS + OPTIONAL_SECTIONS:
        if sec not in doc:
            continue
        lines.append(f"[{sec}]")
        lines += [f"{k} = {_toml_value(v)}" for k, v in doc[sec].items()]
        lines.append("")
    return "\n".join(lines)


def update_geometry(doc: dict, layout: ArrayLayout, changed) -> dict:
    """Copy of ``doc`` with the named design parameters taken from ``layout``."""
    doc = copy.deepcopy(doc)

    def mm(v):
        return float(f"{v * 1e3:.12g}")

    if {"L", "W"} & set(changed):
        patch = doc["patch"]
        patch["width_mm"] = mm(layout.patches[0].width)
        patch["length_mm"] = mm(layout.patches[0].length)
        patch.pop("auto_design_f0_ghz", None)
    if "gap" in changed and layout.interconnects:
        doc["interconnect"]["length_mm"] = mm(layout.interconnects[0].length)
    if "interconnect_width" in changed and layout.interconnects:
        doc["interconnect"]["width_mm"] = mm(layout.interconnects[0].width)
    return doc


def _num(x: float) -> str:
    x = float(x)
    if x == 0:
        return "0.0"
    return repr(x)


def write_touchstone(result: NetworkResult, path) -> None:
    """One-port Touchstone v1, frequency in GHz, S11 as real/imaginary."""
    if len(result) == 0:
        raise ValueError("empty network result")
    order = np.argsort(result.freqs, kind="stable")
    lines = ["! one-port S11 from series-fed array circuit model",
             f"# GHz S RI R {result.z_ref:g}"]
    for i in order:
        s = result.s11[i]
        lines.append(f"{_num(result.freqs[i] / 1e9)} {_num(s.real)} {_num(s.imag)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}


def read_touchstone(path) -> tuple[np.ndarray, np.ndarray, float]:
    """Parse a one-port Touchstone v1 file into ``(freqs_hz, s11, z_ref)``.

    Supports RI, MA and DB data formats and any frequency unit.
    """
    unit, fmt, z_ref = 1e9, "MA", 50.0
    freqs, s11 = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("!", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            tokens = line[1:].lower().split()
            for i, tok in enumerate(tokens):
                if tok in _UNITS:
                    unit = _UNITS[tok]
                elif tok in ("ri", "ma", "db"):
                    fmt = tok.upper()
                elif tok == "r":
                    z_ref = float(tokens[i + 1])
            continue
        f, a, b = (float(t) for t in line.split()[:3])
        if fmt == "RI":
            s = complex(a, b)
        elif fmt == "MA":
            s = a * np.exp(1j * np.radians(b))
        else:
            s = 10 ** (a / 20) * np.exp(1j * np.radians(b))
        freqs.append(f * unit)
        s11.append(s)
    return np.array(freqs), np.array(s11, dtype=complex), z_ref


def _db(x):
    with np.errstate(divide="ignore"):
        return np.maximum(10 * np.log10(x), DB_FLOOR)


def write_pattern_csv(pattern: FarFieldPattern, path, cut_phi: Optional[float] = None) -> int:
    """Grid export (directivity per sample, dBi) or a peak-normalized cut.

    Zero-intensity samples are written at the -200 dB floor. Returns the
    number of data rows written.
    """
    rows = []
    if cut_phi is None:
        header = ["theta_deg", "phi_deg", "intensity_dbi"]
        d = _db(pattern.directivity_map())
        theta, phi = pattern.grid.mesh()
        rows = zip(theta.ravel(), phi.ravel(), d.ravel())
    else:
        header = ["theta_deg", "level_db"]
        angles, u = pattern.cut(cut_phi)
        rows = zip(angles, _db(u / u.max()))
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) for v in row])
            n += 1
    return n


def write_sweep_csv(result: NetworkResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["freq_ghz", "s11_db", "vswr"])
        for f, db, v in zip(result.freqs, result.s11_db, result.vswr):
            w.writerow([_num(f / 1e9), _num(db), _num(v)])


def _finite(report: dict, reasons: dict, key: str, value, reason: str):
    if value is None or not math.isfinite(value):
        report[key] = None
        reasons[key] = reason
    else:
        report[key] = float(value)


def build_report(layout: ArrayLayout, sweep, freq: float,
                 grid: Optional[SphericalGrid] = None) -> dict:
    """Flat metric summary for ``layout``: network over ``sweep``, pattern at ``freq``.

    Non-finite values are reported as ``null`` with an entry in ``null_reasons``.
    """
    grid = grid or SphericalGrid()
    net = analyze_sweep(layout, *sweep)
    f_res, s11_min = net.resonance()
    band = extract_bandwidth(net, -10.0, f_res)

    report: dict = {"frequency_ghz": freq / 1e9, "elements": layout.n_elements}
    reasons: dict = {}
    report["resonance_ghz"] = f_res / 1e9
    _finite(report, reasons, "s11_min_db", s11_min, "perfect match: |S11| = 0")
    _finite(report, reasons, "vswr_min", float(np.min(net.vswr)), "total reflection")
    if band.empty:
        report["band_ghz"] = None
        reasons["band_ghz"] = "S11 at resonance is above -10 dB; no -10 dB band"
    else:
        report["band_ghz"] = [band.f_low / 1e9, band.f_high / 1e9]
    report["bandwidth_ghz"] = band.width / 1e9

    s11 = net.s11_at(freq)
    s11_db = 20 * math.log10(abs(s11)) if s11 != 0 else -math.inf
    _finite(report, reasons, "s11_db_at_freq", s11_db, "perfect match: |S11| = 0")
    mag = abs(s11)
    _finite(report, reasons, "vswr_at_freq", (1 + mag) / (1 - mag) if mag < 1 else math.inf,
            "total reflection")

    ex = element_excitations(layout, freq)
    pattern = total_pattern(layout, ex, freq, grid)
    d_dbi = directivity(pattern)
    gain = realized_gain(d_dbi, layout, net, freq)
    report["directivity_dbi"] = d_dbi
    _finite(report, reasons, "peak_gain_dbi", gain.realized_gain_dbi, "no power accepted")
    report["radiation_efficiency"] = gain.radiation_efficiency
    report["mismatch_factor"] = gain.mismatch_factor
    theta, phi = pattern.peak_direction()
    report["peak_theta_deg"] = theta
    report["peak_phi_deg"] = phi
    amps = np.abs(ex.amplitudes)
    report["element_amplitudes_db"] = [float(v) for v in _db((amps / amps.max()) ** 2)]
    report["element_phases_deg"] = [float(v) for v in np.degrees(np.angle(ex.amplitudes))]

    for cut in (0.0, 90.0):
        m = cut_metrics(pattern, cut)
        key = f"cut_phi{cut:g}"
        report[f"{key}_peak_theta_deg"] = m.peak_theta
        report[f"{key}_hpbw_deg"] = m.hpbw
        report[f"{key}_hpbw_truncated"] = m.hpbw_truncated
        _finite(report, reasons, f"{key}_sll_db", m.sll_db, "no sidelobe outside the main lobe")

    warnings = validity_warnings(layout.substrate, freq)
    warnings.append({
        "code": "no_inter_element_coupling",
        "message": "mutual coupling between patches is not modeled",
    })
    report["warnings"] = warnings
    report["null_reasons"] = reasons
    return report

