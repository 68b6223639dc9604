"""
Element pattern, planar array layout, steering and composite array gain.

Arrays are uniform rectangular panels in the local y-z plane with
boresight along local +x. ``boresight_azimuth_deg`` rotates the panel about z.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from chansim.errors import ModelValidityError
from chansim.scenario import spherical_unit_vector, wrap_azimuth_deg

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ElementPattern:
    """
    Directional element with parabolic-in-angle cuts and a back-lobe floor.

    Args:
        max_gain: Boresight gain in dBi
        hpbw_azimuth_deg: Azimuth 3 dB beamwidth
        hpbw_zenith_deg: Zenith 3 dB beamwidth
        floor_db: Front-to-back ratio and side-lobe limit
        slant_deg: Polarization slant angle (0 is vertical)
        isotropic: Ignore the shape and radiate 0 dBi everywhere
    """

    max_gain: float = 8.0
    hpbw_azimuth_deg: float = 65.0
    hpbw_zenith_deg: float = 65.0
    floor_db: float = 30.0
    slant_deg: float = 0.0
    isotropic: bool = False

    @classmethod
    def isotropic_element(cls, slant_deg: float = 0.0) -> "ElementPattern":
        return cls(max_gain=0.0, slant_deg=slant_deg, isotropic=True)


def element_gain(p: ElementPattern, theta_deg, phi_deg):
    """
    Element gain in dBi.

    Args:
        p: Element pattern
        theta_deg: Zenith angle(s) in [0, 180]
        phi_deg: Azimuth angle(s), wrapped internally

    Returns:
        Gain with the broadcast shape of the inputs
    """
    theta = np.asarray(theta_deg, dtype=float)
    phi = np.asarray(wrap_azimuth_deg(phi_deg), dtype=float)
    if p.isotropic:
        return np.zeros(np.broadcast(theta, phi).shape) + p.max_gain
    vertical = -np.minimum(12.0 * ((theta - 90.0) / p.hpbw_zenith_deg) ** 2, p.floor_db)
    horizontal = -np.minimum(12.0 * (phi / p.hpbw_azimuth_deg) ** 2, p.floor_db)
    return -np.minimum(-(vertical + horizontal), p.floor_db) + p.max_gain


def field_pattern(p: ElementPattern, theta_deg, phi_deg, slant_deg: Optional[float] = None):
    """
    Polarized field components (F_theta, F_phi) of a slanted element.

    Args:
        p: Element pattern
        theta_deg: Zenith angle(s)
        phi_deg: Azimuth angle(s)
        slant_deg: Overrides the pattern's own slant

    Returns:
        Tuple of real arrays (F_theta, F_phi)
    """
    slant = np.deg2rad(p.slant_deg if slant_deg is None else slant_deg)
    amplitude = np.sqrt(10.0 ** (element_gain(p, theta_deg, phi_deg) / 10.0))
    return amplitude * np.cos(slant), amplitude * np.sin(slant)


@dataclass(frozen=True)
class AntennaArraySpec:
    """
    Uniform planar array.

    Args:
        rows: Elements per column (vertical)
        columns: Elements per row (horizontal)
        polarizations: 1 or 2; dual polarization duplicates the panel at +-45 deg slant
        d_h: Horizontal spacing in wavelengths
        d_v: Vertical spacing in wavelengths
        element: Element pattern
        boresight_azimuth_deg: Panel orientation
    """

    rows: int = 1
    columns: int = 1
    polarizations: int = 1
    d_h: float = 0.5
    d_v: float = 0.7
    element: ElementPattern = field(default_factory=ElementPattern)
    boresight_azimuth_deg: float = 0.0

    def __post_init__(self):
        if self.rows < 1 or self.columns < 1:
            raise ModelValidityError(f"array needs rows, columns >= 1, got {self.rows}x{self.columns}")
        if self.polarizations not in (1, 2):
            raise ModelValidityError(f"polarizations must be 1 or 2, got {self.polarizations}")
        if self.d_h <= 0 or self.d_v <= 0:
            raise ModelValidityError(f"element spacings must be positive, got d_h={self.d_h:g}, d_v={self.d_v:g}")

    @classmethod
    def isotropic(cls) -> "AntennaArraySpec":
        """Single isotropic, vertically polarized element."""
        return cls(element=ElementPattern.isotropic_element())

    @property
    def elements_per_polarization(self) -> int:
        return self.rows * self.columns

    @property
    def num_elements(self) -> int:
        return self.rows * self.columns * self.polarizations

    def slants_deg(self) -> np.ndarray:
        """Slant angle of every element, polarization-major order."""
        if self.polarizations == 1:
            slants = [self.element.slant_deg]
        else:
            slants = [45.0, -45.0]
        return np.repeat(np.array(slants), self.elements_per_polarization)

    def local_azimuth_deg(self, phi_deg):
        """Azimuth measured from the panel boresight."""
        return wrap_azimuth_deg(np.asarray(phi_deg, dtype=float) - self.boresight_azimuth_deg)


# Reference panels of the array gain figures. The large panel's aperture is
# about 6.4 wavelengths in both directions (8 deg beams); the small panel is
# electrically narrow horizontally, so its azimuth beam follows the element.
LARGE_PANEL = AntennaArraySpec(rows=8, columns=16, polarizations=2, d_h=0.4, d_v=0.8)
SMALL_PANEL = AntennaArraySpec(rows=2, columns=4, polarizations=2, d_h=0.05, d_v=0.8)


def element_positions(spec: AntennaArraySpec, wavelength: float, single_polarization: bool = False) -> np.ndarray:
    """
    Element locations in meters, centered on the array phase center.

    Args:
        spec: Array layout
        wavelength: Wavelength in meters
        single_polarization: Return one panel only (rows*columns entries)

    Returns:
        Array of shape (num_elements, 3), polarization-major then row then column
    """
    col_offsets = (np.arange(spec.columns) - (spec.columns - 1) / 2.0) * spec.d_h * wavelength
    row_offsets = (np.arange(spec.rows) - (spec.rows - 1) / 2.0) * spec.d_v * wavelength
    zz, yy = np.meshgrid(row_offsets, col_offsets, indexing="ij")
    local = np.stack([np.zeros(zz.size), yy.ravel(), zz.ravel()], axis=1)
    beta = np.deg2rad(spec.boresight_azimuth_deg)
    rotation = np.array([[np.cos(beta), -np.sin(beta), 0.0],
                         [np.sin(beta), np.cos(beta), 0.0],
                         [0.0, 0.0, 1.0]])
    panel = local @ rotation.T
    if single_polarization or spec.polarizations == 1:
        return panel
    return np.concatenate([panel] * spec.polarizations, axis=0)


def steering_vector_from_positions(positions: np.ndarray, wavelength: float,
                                   theta_deg: float, phi_deg: float) -> np.ndarray:
    """Phase 2 pi (r_hat . d_m) / lambda for arbitrary element locations."""
    direction = spherical_unit_vector(np.deg2rad(theta_deg), np.deg2rad(phi_deg))
    return np.exp(1j * 2.0 * np.pi * (np.asarray(positions) @ direction) / wavelength)


def steering_vector(spec: AntennaArraySpec, wavelength: float, theta_deg: float, phi_deg: float) -> np.ndarray:
    """
    Steering vector of one polarization panel.

    Args:
        spec: Array layout
        wavelength: Wavelength in meters
        theta_deg: Zenith of the direction
        phi_deg: Azimuth of the direction

    Returns:
        Unit-magnitude complex vector of length rows*columns
    """
    positions = element_positions(spec, wavelength, single_polarization=True)
    return steering_vector_from_positions(positions, wavelength, theta_deg, phi_deg)


@dataclass
class GainMap:
    """Gain in dBi over a (theta, phi) grid, theta along axis 0."""

    theta_deg: np.ndarray
    phi_deg: np.ndarray
    gain_dbi: np.ndarray

    def peak(self) -> tuple[float, float, float]:
        """Return (gain, theta, phi) of the maximum."""
        i, j = np.unravel_index(np.argmax(self.gain_dbi), self.gain_dbi.shape)
        return float(self.gain_dbi[i, j]), float(self.theta_deg[i]), float(self.phi_deg[j])

    def integrated_power(self) -> float:
        """Sphere integral of linear gain divided by 4 pi."""
        linear = 10.0 ** (self.gain_dbi / 10.0)
        theta = np.deg2rad(self.theta_deg)
        phi = np.deg2rad(self.phi_deg)
        over_phi = trapezoid(linear, phi, axis=1)
        return float(trapezoid(over_phi * np.sin(theta), theta) / (4.0 * np.pi))

    def to_frame(self) -> pd.DataFrame:
        theta, phi = np.meshgrid(self.theta_deg, self.phi_deg, indexing="ij")
        return pd.DataFrame({
            "theta_deg": theta.ravel(),
            "phi_deg": phi.ravel(),
            "gain_dbi": self.gain_dbi.ravel(),
        })


def angle_grid(step_deg: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Full-sphere grid; azimuth includes both -180 and 180 so the trapezoid rule closes."""
    if not 0 < step_deg <= 1.0:
        raise ModelValidityError(f"grid step must be in (0, 1] deg, got {step_deg:g}")
    theta = np.linspace(0.0, 180.0, int(round(180.0 / step_deg)) + 1)
    phi = np.linspace(-180.0, 180.0, int(round(360.0 / step_deg)) + 1)
    return theta, phi


def _uniform_line_factor(count: int, spacing: float, delta: np.ndarray) -> np.ndarray:
    """Sum of exp(j 2 pi spacing k delta) over centered indices k."""
    offsets = np.arange(count) - (count - 1) / 2.0
    total = np.zeros(delta.shape, dtype=complex)
    for k in offsets:
        total += np.exp(1j * 2.0 * np.pi * spacing * k * delta)
    return total


def array_gain_pattern(spec: AntennaArraySpec, steer_to: tuple[float, float] = (90.0, 0.0),
                       grid_step_deg: float = 0.5) -> GainMap:
    """
    Composite gain of one polarization panel steered to (theta0, phi0).

    The panel is driven with unit-norm conjugate weights, so the array
    factor peaks at rows*columns and a single isotropic element gives 0 dBi
    everywhere. The element pattern is added on top.

    Args:
        spec: Array layout and element
        steer_to: Steering direction (theta0, phi0) in degrees
        grid_step_deg: Grid resolution, at most 1 degree

    Returns:
        GainMap over the full sphere
    """
    theta_deg, phi_deg = angle_grid(grid_step_deg)
    theta = np.deg2rad(theta_deg)[:, None]
    local_phi = np.deg2rad(spec.local_azimuth_deg(phi_deg))[None, :]
    theta0 = np.deg2rad(steer_to[0])
    phi0 = np.deg2rad(float(spec.local_azimuth_deg(steer_to[1])))

    # direction cosines along the panel axes (local y horizontal, z vertical)
    delta_u = np.sin(theta) * np.sin(local_phi) - np.sin(theta0) * np.sin(phi0)
    delta_w = np.broadcast_to(np.cos(theta) - np.cos(theta0), delta_u.shape)
    horizontal = _uniform_line_factor(spec.columns, spec.d_h, delta_u)
    vertical = _uniform_line_factor(spec.rows, spec.d_v, delta_w)
    array_power = np.abs(horizontal * vertical) ** 2 / spec.elements_per_polarization

    element_db = element_gain(spec.element, np.broadcast_to(np.rad2deg(theta), delta_u.shape),
                              np.broadcast_to(np.rad2deg(local_phi), delta_u.shape))
    with np.errstate(divide="ignore"):
        gain = element_db + 10.0 * np.log10(array_power)
    # exact nulls would be -inf; clip far below any sidelobe
    gain = np.maximum(gain, -200.0)
    logger.debug("gain map %dx%d for %dx%d panel", theta_deg.size, phi_deg.size, spec.rows, spec.columns)
    return GainMap(theta_deg, phi_deg, gain)


def directivity_dbi(gain_map: GainMap) -> float:
    """Peak gain relative to the sphere-averaged gain of a full-sphere map."""
    peak, _, _ = gain_map.peak()
    return float(peak - 10.0 * np.log10(gain_map.integrated_power()))


def hpbw(gain_map: GainMap, cut: str) -> float:
    """
    Half-power beamwidth along the azimuth or zenith cut through the peak.

    Crossings of the -3 dB level are linearly interpolated between grid
    points.

    Args:
        gain_map: Gain map containing the peak
        cut: "azimuth" or "zenith"

    Returns:
        Beamwidth in degrees
    """
    i, j = np.unravel_index(np.argmax(gain_map.gain_dbi), gain_map.gain_dbi.shape)
    if cut == "azimuth":
        values, angles, centre = gain_map.gain_dbi[i, :], gain_map.phi_deg, j
    elif cut == "zenith":
        values, angles, centre = gain_map.gain_dbi[:, j], gain_map.theta_deg, i
    else:
        raise ModelValidityError(f"cut must be 'azimuth' or 'zenith', got '{cut}'")

    threshold = values[centre] - 3.0
    if np.all(values >= threshold):
        return float(angles[-1] - angles[0])
    if centre == 0 or centre == values.size - 1:
        raise ModelValidityError("gain peak lies on the grid boundary")

    left = centre
    while left > 0 and values[left - 1] >= threshold:
        left -= 1
    right = centre
    while right < values.size - 1 and values[right + 1] >= threshold:
        right += 1
    if left == 0 or right == values.size - 1:
        raise ModelValidityError("main lobe extends to the grid boundary")

    def crossing(inside: int, outside: int) -> float:
        fraction = (values[inside] - threshold) / (values[inside] - values[outside])
        return float(angles[inside] + fraction * (angles[outside] - angles[inside]))

    return crossing(right, right + 1) - crossing(left, left - 1)
