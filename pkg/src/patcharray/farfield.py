"""Pattern multiplication and far-field metrics.

Coordinates: patches lie in the xy-plane over an infinite ground plane,
the array axis is x, theta is measured from the broadside normal (z) and
phi from the array axis. The ``phi = 0`` cut therefore contains the array
axis (patch E-plane) and ``phi = 90`` is the orthogonal plane (patch
H-plane). Radiation is confined to ``theta <= 90``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .microstrip import InvalidInputError, PatchElement, Substrate, fringe_extension, wavenumber
from .network import ArrayLayout, ExcitationVector, NetworkResult, line_efficiency

ElementModel = Union[str, Callable]


@dataclass(frozen=True)
class SphericalGrid:
    theta_step: float = 0.5
    phi_step: float = 0.5

    def __post_init__(self):
        for name, step, span in (("theta_step", self.theta_step, 180.0),
                                 ("phi_step", self.phi_step, 360.0)):
            if not step > 0:
                raise InvalidInputError(f"{name} must be > 0, got {step}")
            n = span / step
            if abs(n - round(n)) > 1e-9:
                raise InvalidInputError(f"{name} = {step} does not divide {span:g} degrees")

    @property
    def theta(self) -> np.ndarray:
        """Polar samples in degrees, 0 to 180 inclusive."""
        return np.linspace(0.0, 180.0, round(180 / self.theta_step) + 1)

    @property
    def phi(self) -> np.ndarray:
        """Azimuth samples in degrees, 0 inclusive to 360 exclusive."""
        n = round(360 / self.phi_step)
        return np.arange(n) * (360.0 / n)

    def mesh(self):
        return np.meshgrid(self.theta, self.phi, indexing="ij")

    def refined(self, factor: int = 2) -> "SphericalGrid":
        return SphericalGrid(self.theta_step / factor, self.phi_step / factor)


@dataclass
class FarFieldPattern:
    """Radiation intensity sampled on ``grid``, shape ``(n_theta, n_phi)``."""

    grid: SphericalGrid
    intensity: np.ndarray
    freq: float

    def __post_init__(self):
        self.intensity = np.asarray(self.intensity, dtype=float)
        shape = (len(self.grid.theta), len(self.grid.phi))
        if self.intensity.shape != shape:
            raise InvalidInputError(f"intensity shape {self.intensity.shape} != grid {shape}")
        if np.any(self.intensity < 0):
            raise InvalidInputError("radiation intensity must be non-negative")

    def total_power(self) -> float:
        """Integral of U sin(theta) over the sphere, trapezoid in theta, periodic in phi."""
        th = np.radians(self.grid.theta)
        ring = self.intensity.sum(axis=1) * math.radians(360.0 / len(self.grid.phi))
        return float(np.trapezoid(ring * np.sin(th), th))

    def directivity_map(self) -> np.ndarray:
        """Directivity (linear) at every sample."""
        p = self.total_power()
        if not p > 0:
            raise InvalidInputError("pattern has no radiated power")
        return 4 * np.pi * self.intensity / p

    def peak_direction(self) -> tuple[float, float]:
        i, j = np.unravel_index(np.argmax(self.intensity), self.intensity.shape)
        return float(self.grid.theta[i]), float(self.grid.phi[j])

    def cut(self, phi: float) -> tuple[np.ndarray, np.ndarray]:
        """Great-circle cut through ``phi`` over the visible half-space.

        Returns signed angles in ``[-90, 90]`` (negative side taken from
        ``phi + 180``) and the linear intensity along them.
        """
        phis = self.grid.phi
        j = _phi_index(phis, phi)
        k = _phi_index(phis, (phi + 180.0) % 360.0)
        theta = self.grid.theta
        vis = theta <= 90.0 + 1e-9
        t = theta[vis]
        angles = np.concatenate([-t[:0:-1], t])
        values = np.concatenate([self.intensity[vis, k][:0:-1], self.intensity[vis, j]])
        return angles, values


def _phi_index(phis, phi):
    d = np.abs((phis - phi + 180.0) % 360.0 - 180.0)
    j = int(np.argmin(d))
    if d[j] > 1e-6:
        raise InvalidInputError(f"cut phi = {phi} is not on the grid")
    return j


@dataclass(frozen=True)
class CutMetrics:
    peak_theta: float
    hpbw: float
    sll_db: float
    cut_phi: float
    hpbw_truncated: bool = False


@dataclass(frozen=True)
class GainSummary:
    directivity_dbi: float
    radiation_efficiency: float
    mismatch_factor: float
    realized_gain_dbi: float


def patch_element_pattern(patch: PatchElement, substrate: Substrate, freq: float,
                          theta, phi, projection: bool = True):
    """Field magnitude of a rectangular patch modeled as two radiating slots.

    ``sinc`` slot factor across the width times the two-slot factor over the
    effective length ``L + 2 delta_L``. With ``projection`` the standard
    ``sqrt(cos^2 phi + cos^2 theta sin^2 phi)`` polarization projection is
    applied; without it the scalar aperture factor alone is returned, which
    tends to 1 everywhere in the point-source limit. Angles in degrees.
    """
    th = np.radians(theta)
    ph = np.radians(phi)
    k0 = float(wavenumber(freq))
    le = patch.length + 2 * fringe_extension(patch.width, substrate)
    st = np.sin(th)
    x = k0 * patch.width / 2 * st * np.sin(ph)
    f = np.abs(np.sinc(x / np.pi) * np.cos(k0 * le / 2 * st * np.cos(ph)))
    if projection:
        f = f * np.sqrt(np.cos(ph) ** 2 + (np.cos(th) * np.sin(ph)) ** 2)
    return f


def array_factor(excitations, positions, freq: float, theta, phi):
    """``sum a_n exp(j k0 x_n sin(theta) cos(phi))`` for elements on the x axis."""
    amps = np.asarray(getattr(excitations, "amplitudes", excitations), dtype=complex)
    x = np.asarray(positions, dtype=float)
    if amps.shape != x.shape:
        raise InvalidInputError(
            f"{len(amps)} excitations but {len(x)} positions"
        )
    k0 = float(wavenumber(freq))
    u = np.sin(np.radians(theta)) * np.cos(np.radians(phi))
    u = np.asarray(u, dtype=float)
    af = np.zeros(u.shape, dtype=complex)
    for a, xn in zip(amps, x):
        af += a * np.exp(1j * k0 * xn * u)
    return af if af.ndim else complex(af)


def total_pattern(layout: ArrayLayout, excitations: ExcitationVector, freq: float,
                  grid: Optional[SphericalGrid] = None,
                  element: ElementModel = "patch") -> FarFieldPattern:
    """Intensity ``|element * AF|^2`` over ``grid``, zero below the ground plane.

    ``element`` is ``"patch"`` (first patch of the layout), ``"isotropic"``,
    or a callable ``f(theta_deg, phi_deg) -> magnitude``.
    """
    grid = grid or SphericalGrid()
    theta, phi = grid.mesh()
    e = element_field(layout, freq, theta, phi, element)
    af = array_factor(excitations, layout.element_positions(), freq, theta, phi)
    u = np.abs(e * af) ** 2
    u[theta > 90.0 + 1e-9] = 0.0
    return FarFieldPattern(grid, u, freq)


def element_field(layout, freq, theta, phi, element: ElementModel = "patch"):
    if callable(element):
        return element(theta, phi)
    if element == "patch":
        return patch_element_pattern(layout.patches[0], layout.substrate, freq, theta, phi)
    if element == "isotropic":
        return np.ones(np.shape(theta))
    raise InvalidInputError(f"unknown element model {element!r}")


def directivity(pattern: FarFieldPattern) -> float:
    """Peak directivity in dBi."""
    p = pattern.total_power()
    if not p > 0:
        raise InvalidInputError("pattern has no radiated power")
    return float(10 * np.log10(4 * np.pi * pattern.intensity.max() / p))


def _to_db(values, ref):
    with np.errstate(divide="ignore"):
        return 10 * np.log10(values / ref)


def _edge_crossing(angles, db, i_in, i_out, level=-3.0):
    a1, a2, y1, y2 = angles[i_in], angles[i_out], db[i_in], db[i_out]
    return a1 + (level - y1) * (a2 - a1) / (y2 - y1)


def cut_metrics(pattern: FarFieldPattern, cut_phi: float) -> CutMetrics:
    """Peak direction, half-power beamwidth and sidelobe level along a cut.

    The half-power points are found by walking out from the peak and
    interpolating linearly in dB. When a side reaches the horizon before
    dropping 3 dB the width is measured to the horizon and flagged as
    truncated. The main lobe spans from the peak to the first local minimum
    on each side; the sidelobe level is the highest local maximum outside
    it (horizon samples count when they rise above their neighbor), or
    ``-inf`` when there is none.
    """
    angles, u = pattern.cut(cut_phi)
    peak = u.max()
    if not peak > 0:
        raise InvalidInputError(f"cut at phi = {cut_phi} carries no power")
    # floor keeps exact nulls interpolable
    db = np.maximum(_to_db(u, peak), -400.0)
    ip = int(np.argmax(u))
    n = len(u)

    truncated = False
    i = ip
    while i > 0 and db[i - 1] > -3.0:
        i -= 1
    if i == 0:
        left = angles[0]
        truncated = True
    else:
        left = _edge_crossing(angles, db, i, i - 1)
    i = ip
    while i < n - 1 and db[i + 1] > -3.0:
        i += 1
    if i == n - 1:
        right = angles[-1]
        truncated = True
    else:
        right = _edge_crossing(angles, db, i, i + 1)

    lo = ip
    while lo > 0 and u[lo - 1] <= u[lo]:
        lo -= 1
    hi = ip
    while hi < n - 1 and u[hi + 1] <= u[hi]:
        hi += 1

    sll = -math.inf
    for k in list(range(0, lo)) + list(range(hi + 1, n)):
        left_ok = k == 0 or u[k] >= u[k - 1]
        right_ok = k == n - 1 or u[k] >= u[k + 1]
        if left_ok and right_ok and u[k] > 0:
            sll = max(sll, float(db[k]))
    return CutMetrics(float(angles[ip]), float(right - left), sll, float(cut_phi), truncated)


def realized_gain(directivity_dbi: float, layout: ArrayLayout, network: NetworkResult,
                  freq: float) -> GainSummary:
    """Discount directivity by line-loss efficiency and input mismatch at ``freq``."""
    eff = line_efficiency(layout, freq)
    gamma = network.s11_at(freq)
    mismatch = max(0.0, 1.0 - abs(gamma) ** 2)
    with np.errstate(divide="ignore"):
        penalty = 10 * np.log10(eff * mismatch)
    return GainSummary(directivity_dbi, eff, mismatch, float(directivity_dbi + min(penalty, 0.0)))
