"""Series-fed array as an ABCD-matrix cascade.

The chain, source to load, is::

    feed . [slot . patch body . slot . interconnect] x N   (no interconnect after the last patch)

terminated in an open circuit. Every two-port is stored as a ``(..., 2, 2)``
complex array so a whole frequency sweep is cascaded in one pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import reduce
from typing import Optional, Sequence

import numpy as np

from .microstrip import (
    InvalidInputError,
    LineParams,
    MicrostripLine,
    PatchElement,
    Substrate,
    C0,
    characteristic_impedance,
    edge_susceptance,
    patch_slot_admittance,
)

Z_REF = 50.0

#: Slot susceptance models: "fringe" ties B to the fringe extension used by
#: patch synthesis, "closed_form" uses the thin-substrate B1 expression.
SLOT_MODELS = ("fringe", "closed_form")


class ResonantSingularityError(ArithmeticError):
    """Input impedance denominator vanished at some frequency."""


class PropagationError(ArithmeticError):
    """Node state along the chain became non-finite."""


@dataclass(frozen=True)
class TwoPortABCD:
    """Chain matrix; ``m`` has shape ``(..., 2, 2)`` with any leading frequency axes."""

    m: np.ndarray

    @property
    def a(self):
        return self.m[..., 0, 0]

    @property
    def b(self):
        return self.m[..., 0, 1]

    @property
    def c(self):
        return self.m[..., 1, 0]

    @property
    def d(self):
        return self.m[..., 1, 1]

    @property
    def det(self):
        return self.a * self.d - self.b * self.c

    def __matmul__(self, other: "TwoPortABCD") -> "TwoPortABCD":
        return TwoPortABCD(self.m @ other.m)

    def inverse(self) -> "TwoPortABCD":
        inv = np.stack(
            [np.stack([self.d, -self.b], -1), np.stack([-self.c, self.a], -1)], -2
        )
        return TwoPortABCD(inv / self.det[..., None, None])


def _pack(a, b, c, d):
    a, b, c, d = np.broadcast_arrays(*(np.asarray(x, dtype=complex) for x in (a, b, c, d)))
    return TwoPortABCD(np.stack([np.stack([a, b], -1), np.stack([c, d], -1)], -2))


def identity(shape=()) -> TwoPortABCD:
    return _pack(np.ones(shape), np.zeros(shape), np.zeros(shape), np.ones(shape))


def abcd_line(params: LineParams, length: float, freq) -> TwoPortABCD:
    """Uniform lossy line; attenuation is taken from ``params.alpha_d + params.alpha_c``."""
    if not length >= 0:
        raise InvalidInputError(f"line length must be >= 0, got {length}")
    beta = 2 * np.pi * np.asarray(freq, dtype=float) * math.sqrt(params.eps_eff) / C0
    gl = (params.alpha_d + params.alpha_c + 1j * beta) * length
    ch, sh = np.cosh(gl), np.sinh(gl)
    return _pack(ch, params.z0 * sh, sh / params.z0, ch)


def abcd_shunt(y) -> TwoPortABCD:
    y = np.asarray(y, dtype=complex)
    if not np.all(np.isfinite(y)):
        raise InvalidInputError("shunt admittance must be finite")
    return _pack(1.0, 0.0, y, 1.0)


def cascade(chain: Sequence[TwoPortABCD]) -> TwoPortABCD:
    """Matrix product in chain order, source to load."""
    if len(chain) == 0:
        raise InvalidInputError("cannot cascade an empty chain")
    return reduce(lambda x, y: x @ y, chain)


@dataclass(frozen=True)
class ArrayLayout:
    """Ordered geometry of a series-fed patch array.

    Interconnect lengths double as the edge-to-edge gap between patches.
    ``pitch`` overrides the center-to-center element spacing used for the
    array factor only; the circuit always uses the interconnect lengths.
    """

    substrate: Substrate
    feed: MicrostripLine
    patches: tuple[PatchElement, ...]
    interconnects: tuple[MicrostripLine, ...]
    pitch: Optional[float] = None
    slot_model: str = "fringe"
    z_ref: float = Z_REF

    def __post_init__(self):
        object.__setattr__(self, "patches", tuple(self.patches))
        object.__setattr__(self, "interconnects", tuple(self.interconnects))
        n = len(self.patches)
        if n < 1:
            raise InvalidInputError("layout needs at least one patch")
        if len(self.interconnects) != n - 1:
            raise InvalidInputError(
                f"{n} patches need {n - 1} interconnects, got {len(self.interconnects)}"
            )
        if self.pitch is not None and not self.pitch > 0:
            raise InvalidInputError(f"pitch must be > 0, got {self.pitch}")
        if self.slot_model not in SLOT_MODELS:
            raise InvalidInputError(
                f"slot_model must be one of {SLOT_MODELS}, got {self.slot_model!r}"
            )
        if not self.z_ref > 0:
            raise InvalidInputError(f"z_ref must be > 0, got {self.z_ref}")

    @classmethod
    def uniform(cls, substrate, feed, patch, count, interconnect, **kw) -> "ArrayLayout":
        return cls(substrate, feed, (patch,) * count, (interconnect,) * (count - 1), **kw)

    @property
    def n_elements(self) -> int:
        return len(self.patches)

    @property
    def gaps(self) -> list[float]:
        return [ic.length for ic in self.interconnects]

    def element_positions(self) -> np.ndarray:
        """Patch centers along the array axis, measured from the first patch's input edge."""
        if self.pitch is not None:
            return self.patches[0].length / 2 + self.pitch * np.arange(self.n_elements)
        x = [self.patches[0].length / 2]
        for prev, gap, nxt in zip(self.patches, self.gaps, self.patches[1:]):
            x.append(x[-1] + prev.length / 2 + gap + nxt.length / 2)
        return np.array(x)

    def line_segments(self) -> list[tuple[float, float]]:
        """``(width, length)`` of every transmission-line segment in the chain."""
        segs = [(self.feed.width, self.feed.length)]
        segs += [(p.width, p.length) for p in self.patches]
        segs += [(ic.width, ic.length) for ic in self.interconnects]
        return segs

    def replace(self, **changes) -> "ArrayLayout":
        return replace(self, **changes)


@dataclass
class Chain:
    """Full cascade plus the cumulative matrices up to each radiating-slot node.

    ``slot_nodes[2*k]`` and ``slot_nodes[2*k + 1]`` belong to patch ``k``.
    """

    abcd: TwoPortABCD
    slot_nodes: list[TwoPortABCD]
    stages: list[TwoPortABCD] = field(repr=False)


def slot_admittance(patch: PatchElement, substrate: Substrate, freq, slot_model="fringe"):
    """Complex shunt admittance of one radiating edge, mutual conductance included."""
    sa = patch_slot_admittance(patch, substrate, freq)
    b = edge_susceptance(patch, substrate, freq) if slot_model == "fringe" else sa.b1
    return sa.g1 + sa.g12 + 1j * b


def _line(line_width, length, substrate, freq):
    return abcd_line(characteristic_impedance(line_width, substrate, freq), length, freq)


def build_chain(layout: ArrayLayout, freq) -> Chain:
    sub = layout.substrate
    stages = [_line(layout.feed.width, layout.feed.length, sub, freq)]
    nodes = []
    total = stages[0]
    cache = {}
    for k, patch in enumerate(layout.patches):
        if patch not in cache:
            cache[patch] = (abcd_shunt(slot_admittance(patch, sub, freq, layout.slot_model)),
                            _line(patch.width, patch.length, sub, freq))
        y, body = cache[patch]
        nodes.append(total)
        total = total @ y @ body
        nodes.append(total)
        total = total @ y
        stages += [y, body, y]
        if k < len(layout.interconnects):
            ic = layout.interconnects[k]
            stage = _line(ic.width, ic.length, sub, freq)
            stages.append(stage)
            total = total @ stage
    return Chain(total, nodes, stages)


def input_impedance(chain: TwoPortABCD, z_load=None, freq=None):
    """Input impedance with load ``z_load``; ``None`` means an open circuit."""
    if z_load is None:
        num, den = chain.a, chain.c
    else:
        num, den = chain.a * z_load + chain.b, chain.c * z_load + chain.d
    singular = np.abs(den) <= 1e-300
    if np.any(singular):
        where = ""
        if freq is not None:
            bad = np.atleast_1d(np.broadcast_to(freq, singular.shape)[singular])
            where = f" at {bad[0] / 1e9:.6g} GHz"
        raise ResonantSingularityError(f"input impedance denominator vanished{where}")
    zin = num / den
    return complex(zin) if np.ndim(zin) == 0 else zin


@dataclass(frozen=True)
class Reflection:
    gamma: complex
    s11_db: float
    vswr: float


def reflection(zin, z_ref: float = Z_REF) -> Reflection:
    """Reflection coefficient, its magnitude in dB and VSWR against ``z_ref``.

    A perfect match gives ``s11_db = -inf``; total reflection gives ``vswr = inf``.
    """
    zin = np.asarray(zin, dtype=complex)
    den = zin + z_ref
    if np.any(den == 0):
        raise ResonantSingularityError("Zin + Zref vanished")
    gamma = (zin - z_ref) / den
    mag = np.abs(gamma)
    with np.errstate(divide="ignore", invalid="ignore"):
        s11_db = 20 * np.log10(mag)
        vswr = np.where(mag >= 1, np.inf, (1 + mag) / (1 - mag))
    if gamma.ndim == 0:
        return Reflection(complex(gamma), float(s11_db), float(vswr))
    return Reflection(gamma, s11_db, vswr)


@dataclass
class NetworkResult:
    freqs: np.ndarray
    s11: np.ndarray
    zin: np.ndarray
    vswr: np.ndarray
    z_ref: float = Z_REF

    @property
    def s11_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20 * np.log10(np.abs(self.s11))

    def __len__(self):
        return len(self.freqs)

    def resonance(self) -> tuple[float, float]:
        """Frequency and depth (dB) of the |S11| minimum."""
        i = int(np.argmin(np.abs(self.s11)))
        return float(self.freqs[i]), float(self.s11_db[i])

    def s11_at(self, freq: float) -> complex:
        """S11 at ``freq`` by linear interpolation of real and imaginary parts."""
        if not self.freqs[0] <= freq <= self.freqs[-1]:
            raise InvalidInputError(
                f"{freq / 1e9:.6g} GHz is outside the sweep "
                f"{self.freqs[0] / 1e9:.6g}-{self.freqs[-1] / 1e9:.6g} GHz"
            )
        re = np.interp(freq, self.freqs, self.s11.real)
        im = np.interp(freq, self.freqs, self.s11.imag)
        return complex(re, im)


def network_response(layout: ArrayLayout, freqs) -> NetworkResult:
    """Network response at arbitrary frequencies, in the given order."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    chain = build_chain(layout, freqs)
    zin = input_impedance(chain.abcd, None, freqs)
    r = reflection(zin, layout.z_ref)
    return NetworkResult(freqs, np.atleast_1d(r.gamma), np.atleast_1d(zin),
                         np.atleast_1d(r.vswr), layout.z_ref)


def analyze_sweep(layout: ArrayLayout, f_start: float, f_stop: float, n_points: int) -> NetworkResult:
    """Uniform sweep over ``[f_start, f_stop]`` inclusive."""
    if not 0 < f_start < f_stop:
        raise InvalidInputError(f"need 0 < f_start < f_stop, got {f_start}, {f_stop}")
    if n_points < 2:
        raise InvalidInputError(f"need at least 2 sweep points, got {n_points}")
    return network_response(layout, np.linspace(f_start, f_stop, n_points))


@dataclass(frozen=True)
class Band:
    f_low: float = math.nan
    f_high: float = math.nan
    empty: bool = True

    @property
    def width(self) -> float:
        return 0.0 if self.empty else self.f_high - self.f_low


def _crossing(f1, y1, f2, y2, level):
    if y2 == y1:
        return f1
    return f1 + (level - y1) * (f2 - f1) / (y2 - y1)


def extract_bandwidth(result: NetworkResult, threshold_db: float = -10.0,
                      f_center: Optional[float] = None) -> Band:
    """Maximal contiguous band around ``f_center`` with S11 at or below ``threshold_db``.

    ``f_center`` defaults to the resonance. Edges are interpolated linearly in
    (frequency, dB) between the last in-band and first out-of-band sample.
    """
    f = result.freqs
    db = result.s11_db
    if f_center is None:
        f_center = result.resonance()[0]
    if not f[0] <= f_center <= f[-1]:
        raise InvalidInputError(f"f_center {f_center} outside sweep range")
    if np.interp(f_center, f, np.maximum(db, -1e300)) > threshold_db:
        return Band()
    inside = db <= threshold_db
    # start from the sample nearest f_center that is in band
    idx = np.flatnonzero(inside)
    i0 = idx[np.argmin(np.abs(f[idx] - f_center))]
    lo = i0
    while lo > 0 and inside[lo - 1]:
        lo -= 1
    hi = i0
    while hi < len(f) - 1 and inside[hi + 1]:
        hi += 1
    f_low = f[0] if lo == 0 else _crossing(f[lo - 1], db[lo - 1], f[lo], db[lo], threshold_db)
    f_high = f[-1] if hi == len(f) - 1 else _crossing(f[hi], db[hi], f[hi + 1], db[hi + 1], threshold_db)
    return Band(float(f_low), float(f_high), False)


@dataclass(frozen=True)
class ExcitationVector:
    """Equivalent radiating amplitude of each patch at one frequency.

    ``slot_voltages`` has shape ``(N, 2)``: input-edge and far-edge voltage.
    """

    freq: float
    amplitudes: np.ndarray
    slot_voltages: np.ndarray

    def __len__(self):
        return len(self.amplitudes)

    def scaled(self, factor: complex) -> "ExcitationVector":
        return ExcitationVector(self.freq, self.amplitudes * factor, self.slot_voltages * factor)


def element_excitations(layout: ArrayLayout, freq: float, source_voltage: complex = 1.0) -> ExcitationVector:
    """Per-patch radiating amplitudes from a source of impedance ``layout.z_ref``.

    The (V, I) state at each slot node is recovered from the input state
    through the inverse cumulative ABCD. Each patch's amplitude is half the
    difference of its two edge voltages: the edges sit a half wave apart with
    opposite outward normals, so their equivalent magnetic currents add in
    phase when the edge voltages are in antiphase.
    """
    chain = build_chain(layout, freq)
    zin = input_impedance(chain.abcd, None, freq)
    v_in = source_voltage * zin / (zin + layout.z_ref)
    state = np.array([v_in, v_in / zin])
    volts = np.empty(2 * layout.n_elements, dtype=complex)
    for k, node in enumerate(chain.slot_nodes):
        v, _ = node.inverse().m @ state
        if not np.isfinite(v):
            raise PropagationError(f"non-finite voltage at element {k // 2 + 1}")
        volts[k] = v
    volts = volts.reshape(-1, 2)
    amps = (volts[:, 0] - volts[:, 1]) / 2
    return ExcitationVector(float(freq), amps, volts)


def line_efficiency(layout: ArrayLayout, freq: float) -> float:
    """``exp(-2 sum(alpha_i l_i))`` over every line segment of the chain."""
    total = 0.0
    for width, length in layout.line_segments():
        p = characteristic_impedance(width, layout.substrate, freq)
        total += p.alpha * length
    return float(np.exp(-2 * total))
