"""
Geometry primitives, carrier handling and scenario enumeration.

Angle convention: zenith measured from +z (0 straight up, 90 the horizon),
azimuth counter-clockwise from +x. Internals work in radians, everything
crossing a module boundary as a named ``*_deg`` value is in degrees.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.constants import speed_of_light

from chansim.errors import ModelValidityError, check_range
from utils.config import ENV_HEIGHT_M

SPEED_OF_LIGHT = speed_of_light  # 2.99792458e8 m/s

MIN_CARRIER_HZ = 4.5e8
MAX_CARRIER_HZ = 1.0e11


class ScenarioKind(Enum):
    """Propagation scenarios known to the simulator."""

    UMI = "UMi-StreetCanyon"
    UMA = "UMa"
    RMA = "RMa"
    INH = "InH"
    INDOOR_3G = "Indoor3G"
    VEHICULAR_3G = "Vehicular3G"
    O2I_3G = "O2I-3G"

    @classmethod
    def parse(cls, name: str) -> "ScenarioKind":
        """
        Look up a scenario by its printed name (case-insensitive).

        Args:
            name: e.g. "UMa", "umi-streetcanyon", "UMi"

        Returns:
            Matching ScenarioKind
        """
        lowered = name.strip().lower()
        for kind in cls:
            if kind.value.lower() == lowered or kind.name.lower() == lowered:
                return kind
        raise ValueError(f"Unknown scenario '{name}'. Expected one of {[k.value for k in cls]}")


class LinkState(Enum):
    """Propagation condition of a link."""

    LOS = "LOS"
    NLOS = "NLOS"
    O2I = "O2I"

    @classmethod
    def parse(cls, name: str) -> "LinkState":
        try:
            return cls(name.strip().upper())
        except ValueError:
            raise ValueError(f"Unknown link state '{name}'. Expected LOS, NLOS or O2I") from None


@dataclass(frozen=True)
class Position3D:
    """Cartesian position in meters."""

    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_sequence(cls, values) -> "Position3D":
        x, y, z = (float(v) for v in values)
        return cls(x, y, z)


@dataclass(frozen=True)
class MsVelocity:
    """
    Mobile velocity as speed plus direction of travel.

    The travel zenith follows the same convention as arrival angles, so
    90 degrees is horizontal motion.
    """

    speed: float = 0.0
    travel_azimuth_deg: float = 0.0
    travel_zenith_deg: float = 90.0

    def vector(self) -> np.ndarray:
        """Velocity vector in m/s."""
        return self.speed * spherical_unit_vector(
            np.deg2rad(self.travel_zenith_deg), np.deg2rad(self.travel_azimuth_deg)
        )


@dataclass(frozen=True)
class CarrierSpec:
    """Carrier frequency and bandwidth in Hz."""

    f_c: float
    bandwidth: float = 100e6

    def __post_init__(self):
        check_range("f_c", self.f_c, MIN_CARRIER_HZ, MAX_CARRIER_HZ, "Hz")
        if self.bandwidth <= 0:
            raise ModelValidityError(f"bandwidth must be positive, got {self.bandwidth:g} Hz")

    @classmethod
    def from_ghz(cls, f_ghz: float, bandwidth_mhz: float = 100.0) -> "CarrierSpec":
        return cls(f_ghz * 1e9, bandwidth_mhz * 1e6)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def f_ghz(self) -> float:
        return self.f_c / 1e9


@dataclass(frozen=True)
class LinkGeometry:
    """
    One BS-MS link: positions, derived distances and MS motion.
    """

    bs_pos: Position3D
    ms_pos: Position3D
    ms_velocity: MsVelocity = field(default_factory=MsVelocity)
    d2d: float = field(init=False)
    d3d: float = field(init=False)

    def __post_init__(self):
        if self.bs_pos.z < 0 or self.ms_pos.z < 0:
            raise ModelValidityError(
                f"BS/MS heights must be non-negative, got h_t={self.bs_pos.z:g}, h_r={self.ms_pos.z:g}"
            )
        d2d, d3d = compute_link_distances(self.bs_pos, self.ms_pos)
        object.__setattr__(self, "d2d", d2d)
        object.__setattr__(self, "d3d", d3d)

    @classmethod
    def from_positions(cls, bs: Position3D, ms: Position3D,
                       velocity: MsVelocity | None = None) -> "LinkGeometry":
        return cls(bs, ms, velocity or MsVelocity())

    @property
    def h_t(self) -> float:
        return self.bs_pos.z

    @property
    def h_r(self) -> float:
        return self.ms_pos.z

    def moved_to(self, ms: Position3D) -> "LinkGeometry":
        """Same link with the MS at a new position."""
        return LinkGeometry.from_positions(self.bs_pos, ms, self.ms_velocity)

    # LOS directions: departure from BS towards MS, arrival at MS from BS

    @property
    def los_aod_deg(self) -> float:
        delta = self.ms_pos.as_array() - self.bs_pos.as_array()
        return float(np.rad2deg(np.arctan2(delta[1], delta[0])))

    @property
    def los_zod_deg(self) -> float:
        delta = self.ms_pos.as_array() - self.bs_pos.as_array()
        return float(np.rad2deg(np.arctan2(np.hypot(delta[0], delta[1]), delta[2])))

    @property
    def los_aoa_deg(self) -> float:
        return wrap_azimuth_deg(self.los_aod_deg + 180.0)

    @property
    def los_zoa_deg(self) -> float:
        return 180.0 - self.los_zod_deg


def compute_link_distances(bs: Position3D, ms: Position3D) -> tuple[float, float]:
    """
    Ground-plane and 3D distance between two positions.

    Args:
        bs: Base station position
        ms: Mobile station position

    Returns:
        Tuple of (d2d, d3d) in meters
    """
    d2d = float(np.hypot(ms.x - bs.x, ms.y - bs.y))
    d3d = float(np.hypot(d2d, ms.z - bs.z))
    return d2d, d3d


def breakpoint_distance(h_t: float, h_r: float, f_c: float, h_env: float = ENV_HEIGHT_M) -> float:
    """
    Breakpoint distance 4 h'_t h'_r f_c / c with effective heights h - h_env.

    Args:
        h_t: BS height in meters
        h_r: MS height in meters
        f_c: Carrier frequency in Hz
        h_env: Effective environment height in meters

    Returns:
        Breakpoint distance in meters
    """
    h_t_eff = h_t - h_env
    h_r_eff = h_r - h_env
    if h_t_eff <= 0 or h_r_eff <= 0:
        raise ModelValidityError(
            f"effective antenna heights must be positive (h_t={h_t:g}, h_r={h_r:g}, h_env={h_env:g})"
        )
    return 4.0 * h_t_eff * h_r_eff * f_c / SPEED_OF_LIGHT


def spherical_unit_vector(theta, phi) -> np.ndarray:
    """
    Unit vector for zenith theta and azimuth phi, both in radians.

    Broadcasts over array inputs; the vector components are the last axis.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    sin_theta = np.sin(theta)
    return np.stack(
        np.broadcast_arrays(sin_theta * np.cos(phi), sin_theta * np.sin(phi), np.cos(theta)),
        axis=-1,
    )


def wrap_azimuth_deg(angle):
    """Wrap azimuth into [-180, 180)."""
    wrapped = (np.asarray(angle, dtype=float) + 180.0) % 360.0 - 180.0
    return float(wrapped) if np.ndim(wrapped) == 0 else wrapped


def wrap_zenith_deg(angle):
    """Fold zenith into [0, 180] by reflecting through the poles."""
    folded = np.asarray(angle, dtype=float) % 360.0
    folded = np.where(folded > 180.0, 360.0 - folded, folded)
    return float(folded) if np.ndim(folded) == 0 else folded
