"""Closed-form microstrip physics.

Quasi-static Hammerstad expressions for effective permittivity and
characteristic impedance, dielectric/conductor attenuation, rectangular
patch synthesis and the transmission-line-model slot admittances.

All functions take SI units (meters, hertz) and accept scalar or numpy
array frequencies where noted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import j0

C0 = 299_792_458.0
MU0 = 4e-7 * math.pi
ETA0 = 120 * math.pi

COPPER_CONDUCTIVITY = 5.8e7
COPPER_THICKNESS = 35e-6

#: h / lambda0 above which the closed forms are flagged as out of their comfort zone.
THIN_SUBSTRATE_LIMIT = 0.05

G12_POINTS = 2001


class InvalidInputError(ValueError):
    """Raised when a physical parameter is outside its valid domain."""


class SynthesisError(ValueError):
    """Raised when patch synthesis yields a non-physical geometry."""


@dataclass(frozen=True)
class Substrate:
    eps_r: float
    tan_delta: float
    height: float
    metal_conductivity: float = COPPER_CONDUCTIVITY
    metal_thickness: float = COPPER_THICKNESS

    def __post_init__(self):
        if not self.eps_r >= 1:
            raise InvalidInputError(f"eps_r must be >= 1, got {self.eps_r}")
        if not self.tan_delta >= 0:
            raise InvalidInputError(f"tan_delta must be >= 0, got {self.tan_delta}")
        if not self.height > 0:
            raise InvalidInputError(f"height must be > 0, got {self.height}")
        if not self.metal_conductivity > 0:
            raise InvalidInputError(
                f"metal_conductivity must be > 0, got {self.metal_conductivity}"
            )
        if not self.metal_thickness >= 0:
            raise InvalidInputError(
                f"metal_thickness must be >= 0, got {self.metal_thickness}"
            )


@dataclass(frozen=True)
class MicrostripLine:
    width: float
    length: float

    def __post_init__(self):
        if not self.width > 0:
            raise InvalidInputError(f"line width must be > 0, got {self.width}")
        if not self.length >= 0:
            raise InvalidInputError(f"line length must be >= 0, got {self.length}")


@dataclass(frozen=True)
class PatchElement:
    """Rectangular patch. ``length`` is the resonant dimension along the feed axis."""

    width: float
    length: float

    def __post_init__(self):
        if not self.width > 0:
            raise InvalidInputError(f"patch width must be > 0, got {self.width}")
        if not self.length > 0:
            raise InvalidInputError(f"patch length must be > 0, got {self.length}")


@dataclass(frozen=True)
class LineParams:
    z0: float
    eps_eff: float
    alpha_d: float = 0.0
    alpha_c: float = 0.0

    @property
    def alpha(self):
        return self.alpha_d + self.alpha_c


@dataclass(frozen=True)
class SlotAdmittance:
    g1: float
    b1: float
    g12: float


def _check_width(width):
    if not width > 0:
        raise InvalidInputError(f"width must be > 0, got {width}")


def _check_freq(freq):
    if not np.all(np.asarray(freq) > 0):
        raise InvalidInputError(f"frequency must be > 0, got {freq}")


def wavenumber(freq):
    """Free-space wavenumber k0 in rad/m."""
    return 2 * np.pi * np.asarray(freq, dtype=float) / C0


def effective_permittivity(width: float, substrate: Substrate) -> float:
    """Hammerstad quasi-static effective permittivity of a microstrip line."""
    _check_width(width)
    er = substrate.eps_r
    u = width / substrate.height
    q = (1 + 12 / u) ** -0.5
    if u < 1:
        q += 0.04 * (1 - u) ** 2
    return (er + 1) / 2 + (er - 1) / 2 * q


def characteristic_impedance(width: float, substrate: Substrate, freq=None) -> LineParams:
    """Characteristic impedance and effective permittivity of a microstrip line.

    When ``freq`` is given the attenuation constants are filled in for a unit
    length of line; otherwise they are zero.
    """
    _check_width(width)
    u = width / substrate.height
    eps_eff = effective_permittivity(width, substrate)
    if u < 1:
        z0 = 60 / math.sqrt(eps_eff) * math.log(8 / u + u / 4)
    else:
        z0 = ETA0 / (math.sqrt(eps_eff) * (u + 1.393 + 0.667 * math.log(u + 1.444)))
    if freq is None:
        return LineParams(z0, eps_eff)
    alpha_d, alpha_c = _attenuation(width, z0, eps_eff, substrate, freq)
    return LineParams(z0, eps_eff, alpha_d, alpha_c)


def _attenuation(width, z0, eps_eff, substrate, freq):
    _check_freq(freq)
    k0 = wavenumber(freq)
    er = substrate.eps_r
    if er > 1:
        filling = er * (eps_eff - 1) / (er - 1)
    else:
        # er -> 1 limit of er*(eeff-1)/(er-1); eeff == 1 here so the term vanishes
        filling = eps_eff - 1
    alpha_d = k0 * filling * substrate.tan_delta / (2 * math.sqrt(eps_eff))
    rs = np.sqrt(np.pi * np.asarray(freq, dtype=float) * MU0 / substrate.metal_conductivity)
    alpha_c = rs / (z0 * width)
    return alpha_d, alpha_c


def line_loss(line: MicrostripLine, substrate: Substrate, freq):
    """Dielectric and conductor attenuation ``(alpha_d, alpha_c)`` in Np/m."""
    p = characteristic_impedance(line.width, substrate)
    return _attenuation(line.width, p.z0, p.eps_eff, substrate, freq)


def fringe_extension(width: float, substrate: Substrate) -> float:
    """Hammerstad open-end length extension (delta L) of a patch edge."""
    _check_width(width)
    h = substrate.height
    eps_eff = effective_permittivity(width, substrate)
    u = width / h
    return 0.412 * h * (eps_eff + 0.3) * (u + 0.264) / ((eps_eff - 0.258) * (u + 0.8))


def design_patch(f0: float, substrate: Substrate) -> PatchElement:
    """Synthesize the width and length of a patch resonant at ``f0``."""
    if not f0 > 0:
        raise InvalidInputError(f"design frequency must be > 0, got {f0}")
    width = C0 / (2 * f0) * math.sqrt(2 / (substrate.eps_r + 1))
    eps_eff = effective_permittivity(width, substrate)
    dl = fringe_extension(width, substrate)
    length = C0 / (2 * f0 * math.sqrt(eps_eff)) - 2 * dl
    if length <= 0:
        raise SynthesisError(
            f"synthesized patch length {length:.6g} m is not positive: "
            f"fringe extension delta L = {dl:.6g} m exceeds half the guided wavelength"
        )
    return PatchElement(width, length)


def patch_slot_admittance(
    patch: PatchElement, substrate: Substrate, freq, n_points: int = G12_POINTS
) -> SlotAdmittance:
    """Self conductance, self susceptance and mutual conductance of the radiating slots.

    ``freq`` may be an array, in which case each field is an array.
    """
    _check_freq(freq)
    freq = np.asarray(freq, dtype=float)
    lam0 = C0 / freq
    kh = 2 * np.pi * substrate.height / lam0
    scale = patch.width / (120 * lam0)
    g1 = scale * (1 - kh**2 / 24)
    b1 = scale * (1 - 0.636 * np.log(kh))
    g12 = mutual_conductance(patch.width, patch.length, freq, n_points)
    if freq.ndim == 0:
        return SlotAdmittance(float(g1), float(b1), float(g12))
    return SlotAdmittance(g1, b1, g12)


def mutual_conductance(width, separation, freq, n_points: int = G12_POINTS):
    """Mutual conductance of two slots of ``width`` spaced ``separation`` apart.

    Uniform trapezoid over theta in [0, pi]. ``freq`` may be an array.
    """
    freq = np.asarray(freq, dtype=float)
    k0 = wavenumber(freq)[..., None]
    theta = np.linspace(0.0, np.pi, n_points)
    a = k0 * width / 2
    # sin(a cos t) / cos t written through sinc so cos t = 0 is exact
    slot = a * np.sinc(a * np.cos(theta) / np.pi)
    integrand = slot**2 * j0(k0 * separation * np.sin(theta)) * np.sin(theta) ** 3
    g12 = np.trapezoid(integrand, theta, axis=-1) / (120 * np.pi**2)
    return float(g12) if g12.ndim == 0 else g12


def edge_susceptance(patch: PatchElement, substrate: Substrate, freq):
    """Open-end susceptance equivalent to the fringe extension of a patch edge.

    ``B = tan(beta * delta_L) / Z0`` of the patch-width line, so that the
    slot-body-slot section resonates where the extended length
    ``L + 2 delta_L`` is half a guided wavelength.
    """
    _check_freq(freq)
    p = characteristic_impedance(patch.width, substrate)
    beta = wavenumber(freq) * math.sqrt(p.eps_eff)
    return np.tan(beta * fringe_extension(patch.width, substrate)) / p.z0


def electrical_thickness(substrate: Substrate, freq: float) -> float:
    """Substrate height in free-space wavelengths."""
    return substrate.height * freq / C0


def validity_warnings(substrate: Substrate, freq: float) -> list[dict]:
    """Machine-readable model-validity notes for a substrate at ``freq``."""
    warnings = []
    t = electrical_thickness(substrate, freq)
    if t > THIN_SUBSTRATE_LIMIT:
        warnings.append(
            {
                "code": "thick_substrate",
                "message": (
                    f"h/lambda0 = {t:.3f} exceeds {THIN_SUBSTRATE_LIMIT}; "
                    "closed-form microstrip models are outside their thin-substrate regime"
                ),
                "value": t,
            }
        )
    return warnings
