"""
LOS probability, gaseous absorption, outdoor-to-indoor penetration and
angular blockage.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Protocol

import numpy as np

from chansim.errors import ModelValidityError
from chansim.scenario import SPEED_OF_LIGHT, LinkState, wrap_azimuth_deg
from utils.config import INDOOR_LOSS_DB_PER_M
from utils.helpers import db2lin, lin2db, load_data

logger = logging.getLogger(__name__)

MATERIALS_FILE = "atmos_materials.json"


class LosModel(Enum):
    UMI_3GPP = "UMi-3GPP"
    UMA_3GPP = "UMa-3GPP"
    NYU_SQUARED = "NYU-squared"


@dataclass(frozen=True)
class LosProbParams:
    """d1/d2 LOS probability model settings."""

    d1: float = 18.0
    d2: float = 36.0
    model: LosModel = LosModel.UMI_3GPP

    def __post_init__(self):
        if self.d1 <= 0 or self.d2 <= 0:
            raise ModelValidityError(f"d1 and d2 must be positive, got d1={self.d1:g}, d2={self.d2:g}")


def _d1_d2(params: LosProbParams, d: float) -> float:
    if d <= params.d1:
        return 1.0
    decay = np.exp(-d / params.d2)
    return float(params.d1 / d * (1.0 - decay) + decay)


def _uma_height_correction(d: float, h_r: float) -> float:
    if h_r < 13.0:
        return 0.0
    if h_r > 23.0:
        logger.warning("UMa LOS correction undefined for h_r=%.1f m, using h_r=23 m", h_r)
        h_r = 23.0
    g = 1.25e-6 * d ** 2 * np.exp(-d / 150.0) if d > 18.0 else 0.0
    return float(((h_r - 13.0) / 10.0) ** 1.5 * g)


def los_probability(model: LosProbParams, d2d_out: float, h_r: float = 1.5) -> float:
    """
    Probability that a link at outdoor distance d2d_out is LOS.

    Args:
        model: d1/d2 parameters and model variant
        d2d_out: Outdoor ground distance in meters
        h_r: MS height in meters (UMa correction)

    Returns:
        Probability in [0, 1]
    """
    if d2d_out < 0:
        raise ModelValidityError(f"d2d_out must be >= 0, got {d2d_out:g} m")
    base = _d1_d2(model, d2d_out)
    if model.model is LosModel.UMA_3GPP:
        base *= 1.0 + _uma_height_correction(d2d_out, h_r)
    elif model.model is LosModel.NYU_SQUARED:
        base = base ** 2
    return float(np.clip(base, 0.0, 1.0))


def draw_los_state(p: float, rng: np.random.Generator) -> LinkState:
    """Bernoulli draw of LOS (probability p) versus NLOS."""
    if not 0.0 <= p <= 1.0:
        raise ModelValidityError(f"probability must be in [0, 1], got {p:g}")
    return LinkState.LOS if rng.random() < p else LinkState.NLOS


@dataclass(frozen=True)
class OxygenTable:
    """Sampled specific attenuation alpha(f) in dB/km, linearly interpolated."""

    frequency_ghz: np.ndarray
    alpha_db_per_km: np.ndarray

    def __post_init__(self):
        freqs = np.asarray(self.frequency_ghz, dtype=float)
        alpha = np.asarray(self.alpha_db_per_km, dtype=float)
        if freqs.shape != alpha.shape or freqs.ndim != 1 or freqs.size < 2:
            raise ModelValidityError("absorption table needs matching 1-D frequency and alpha arrays")
        if np.any(np.diff(freqs) <= 0):
            raise ModelValidityError("absorption table frequencies must be strictly increasing")
        if np.any(alpha < 0):
            raise ModelValidityError("absorption table alpha values must be >= 0")
        object.__setattr__(self, "frequency_ghz", freqs)
        object.__setattr__(self, "alpha_db_per_km", alpha)

    @classmethod
    def load(cls, file_name: str = MATERIALS_FILE) -> "OxygenTable":
        section = load_data(file_name)["absorption"]
        return cls(np.array(section["frequency_ghz"]), np.array(section["alpha_db_per_km"]))

    def alpha(self, f: float) -> float:
        """Interpolated alpha at f GHz."""
        low, high = self.frequency_ghz[0], self.frequency_ghz[-1]
        if not low <= f <= high:
            raise ModelValidityError(f"f={f:g} GHz outside absorption table range [{low:g}, {high:g}] GHz")
        return float(np.interp(f, self.frequency_ghz, self.alpha_db_per_km))


def oxygen_loss(tbl: OxygenTable, f: float, d3d: float, tau_n: float = 0.0, tau_delta: float = 0.0) -> float:
    """
    Absorption loss of one cluster, alpha(f)/1000 * (d3d + c (tau_n + tau_delta)).

    Args:
        tbl: Absorption table
        f: Frequency in GHz
        d3d: LOS distance in meters
        tau_n: Cluster excess delay in seconds
        tau_delta: Ray delay offset in seconds

    Returns:
        Loss in dB
    """
    if min(d3d, tau_n, tau_delta) < 0:
        raise ModelValidityError("oxygen loss arguments must be non-negative")
    return tbl.alpha(f) / 1000.0 * (d3d + SPEED_OF_LIGHT * (tau_n + tau_delta))


@dataclass(frozen=True)
class Material:
    """Penetration loss a + b f (dB, f in GHz) weighted by proportion p."""

    name: str
    proportion: float
    a_db: float
    b_db_per_ghz: float

    def loss_db(self, f: float) -> float:
        return self.a_db + self.b_db_per_ghz * f


@dataclass(frozen=True)
class MaterialMix:
    """Building facade as a proportion-weighted mix of materials."""

    materials: tuple[Material, ...]
    pl_npi_db: float = 5.0
    sigma_p_db: float = 4.4
    indoor_loss_db_per_m: float = INDOOR_LOSS_DB_PER_M

    def __post_init__(self):
        proportions = np.array([m.proportion for m in self.materials])
        if proportions.size == 0:
            raise ModelValidityError("material mix needs at least one material")
        if np.any(proportions < 0):
            raise ModelValidityError("material proportions must be >= 0")
        if not np.isclose(proportions.sum(), 1.0, rtol=0.0, atol=1e-9):
            raise ModelValidityError(f"material proportions must sum to 1, got {proportions.sum():.6g}")

    @classmethod
    def preset(cls, name: str, file_name: str = MATERIALS_FILE) -> "MaterialMix":
        """
        Load the "low-loss" or "high-loss" facade preset.

        Args:
            name: Preset name in the materials data file
            file_name: Data file to read

        Returns:
            MaterialMix with the preset's composition, PL_npi and sigma
        """
        data = load_data(file_name)
        presets = data["presets"]
        if name not in presets:
            raise ModelValidityError(f"unknown material preset '{name}', expected one of {sorted(presets)}")
        preset = presets[name]
        materials = tuple(
            Material(material, float(p), **data["materials"][material])
            for material, p in preset["composition"].items()
        )
        return cls(materials, float(preset["pl_npi_db"]), float(preset["sigma_p_db"]))

    @classmethod
    def single(cls, name: str, a_db: float, b_db_per_ghz: float, pl_npi_db: float = 5.0,
               sigma_p_db: float = 0.0) -> "MaterialMix":
        return cls((Material(name, 1.0, a_db, b_db_per_ghz),), pl_npi_db, sigma_p_db)

    def through_wall_db(self, f: float) -> float:
        """Mean through-wall loss at f GHz."""
        linear = sum(m.proportion * db2lin(-m.loss_db(f)) for m in self.materials)
        return float(self.pl_npi_db - lin2db(linear))


@dataclass(frozen=True)
class O2ILoss:
    pl_tw: float
    pl_in: float
    excess: float

    @property
    def total(self) -> float:
        return self.pl_tw + self.pl_in + self.excess


def o2i_loss(mix: MaterialMix, f: float, d_in: float, rng: np.random.Generator) -> O2ILoss:
    """
    Outdoor-to-indoor loss: through-wall, indoor and a Gaussian excess.

    The total is meant to be added to the shadow-fading realization in dB.

    Args:
        mix: Facade composition
        f: Frequency in GHz
        d_in: Indoor distance in meters
        rng: Random stream for the excess term

    Returns:
        O2ILoss with the three components in dB
    """
    if d_in < 0:
        raise ModelValidityError(f"indoor distance must be >= 0, got {d_in:g} m")
    excess = float(rng.normal(0.0, mix.sigma_p_db)) if mix.sigma_p_db > 0 else 0.0
    return O2ILoss(mix.through_wall_db(f), mix.indoor_loss_db_per_m * d_in, excess)


def draw_indoor_distance(rng: np.random.Generator, max_m: float = 25.0) -> float:
    """Indoor 2D distance as the smaller of two uniform draws on [0, max_m]."""
    return float(min(rng.uniform(0.0, max_m), rng.uniform(0.0, max_m)))


class AngleSide(Enum):
    AOA = "AOA"
    AOD = "AOD"


@dataclass(frozen=True)
class BlockerRegion:
    """
    Angular region that attenuates clusters seen inside it.

    Azimuth membership wraps around +-180 degrees.
    """

    azimuth_center_deg: float
    azimuth_span_deg: float
    zenith_center_deg: float
    zenith_span_deg: float
    attenuation_db: float
    applies_to: AngleSide = AngleSide.AOA

    def __post_init__(self):
        if not 0 < self.azimuth_span_deg <= 360 or not 0 < self.zenith_span_deg <= 180:
            raise ModelValidityError(
                f"blocker spans must be non-empty, got azimuth {self.azimuth_span_deg:g}, "
                f"zenith {self.zenith_span_deg:g} deg"
            )
        if self.attenuation_db < 0:
            raise ModelValidityError(f"blocker attenuation must be >= 0, got {self.attenuation_db:g} dB")

    def contains(self, azimuth_deg, zenith_deg) -> np.ndarray:
        """Membership mask for arrays of directions in degrees."""
        az_offset = np.abs(wrap_azimuth_deg(np.asarray(azimuth_deg, dtype=float) - self.azimuth_center_deg))
        zen_offset = np.abs(np.asarray(zenith_deg, dtype=float) - self.zenith_center_deg)
        return (az_offset <= self.azimuth_span_deg / 2.0) & (zen_offset <= self.zenith_span_deg / 2.0)


class SupportsClusterAngles(Protocol):
    """Anything carrying per-cluster mean angles in degrees."""

    phi_aoa: np.ndarray
    theta_zoa: np.ndarray
    phi_aod: np.ndarray
    theta_zod: np.ndarray


def blockage_attenuation(regions: Iterable[BlockerRegion], cluster_angles: SupportsClusterAngles) -> np.ndarray:
    """
    Per-cluster blockage attenuation in dB, additive across regions.

    Args:
        regions: Blocker regions
        cluster_angles: Per-cluster mean angles

    Returns:
        Array with one attenuation per cluster
    """
    attenuation = np.zeros(np.shape(cluster_angles.phi_aoa), dtype=float)
    for region in regions:
        if region.applies_to is AngleSide.AOA:
            mask = region.contains(cluster_angles.phi_aoa, cluster_angles.theta_zoa)
        else:
            mask = region.contains(cluster_angles.phi_aod, cluster_angles.theta_zod)
        attenuation += np.where(mask, region.attenuation_db, 0.0)
    return attenuation


def self_blocking_region(mode: str = "portrait", file_name: str = MATERIALS_FILE) -> BlockerRegion:
    """Self-blocking region of a handheld terminal ("portrait" or "landscape")."""
    presets = load_data(file_name)["blockage"]["self_blocking"]
    if mode not in presets:
        raise ModelValidityError(f"unknown self-blocking mode '{mode}', expected one of {sorted(presets)}")
    return BlockerRegion(applies_to=AngleSide.AOA, **presets[mode])


def draw_blocker_regions(count: int, rng: np.random.Generator,
                         applies_to: AngleSide = AngleSide.AOA,
                         file_name: str = MATERIALS_FILE) -> list[BlockerRegion]:
    """
    Draw non-self-blocking regions with uniform azimuth centers and widths.

    Args:
        count: Number of blockers
        rng: Random stream
        applies_to: Which end of the link the blockers sit at
        file_name: Data file with the blocker statistics

    Returns:
        List of BlockerRegion
    """
    stats = load_data(file_name)["blockage"]["non_self_blocking"]
    regions = []
    for _ in range(count):
        regions.append(BlockerRegion(
            azimuth_center_deg=float(rng.uniform(-180.0, 180.0)),
            azimuth_span_deg=float(rng.uniform(stats["azimuth_span_deg_min"], stats["azimuth_span_deg_max"])),
            zenith_center_deg=float(stats["zenith_center_deg"]),
            zenith_span_deg=float(stats["zenith_span_deg"]),
            attenuation_db=float(stats["attenuation_db"]),
            applies_to=applies_to,
        ))
    return regions
