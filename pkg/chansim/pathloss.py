"""
Closed-form pathloss models and lognormal shadow fading.

Every model raises ModelValidityError outside its validity range instead
of extrapolating.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from chansim.errors import ModelValidityError, check_range
from chansim.scenario import (
    SPEED_OF_LIGHT,
    LinkGeometry,
    LinkState,
    Position3D,
    ScenarioKind,
    breakpoint_distance,
)
from utils.config import ENV_HEIGHT_M
from utils.helpers import load_data

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PathlossResult:
    """Mean pathloss plus one shadow-fading realization, all in dB."""

    model_id: str
    mean_pl: float
    shadow: float = 0.0

    @property
    def total(self) -> float:
        return self.mean_pl + self.shadow


@dataclass(frozen=True)
class HataParams:
    """
    Okumura-Hata inputs for a medium-sized city.

    Args:
        f: Carrier frequency in MHz
        h_t: BS height in meters
        h_r: MS height in meters
        city_size: Only "medium" is modeled
    """

    f: float
    h_t: float
    h_r: float
    city_size: str = "medium"

    def __post_init__(self):
        check_range("f", self.f, 150.0, 1500.0, "MHz")
        check_range("h_t", self.h_t, 30.0, 200.0, "m")
        check_range("h_r", self.h_r, 1.0, 10.0, "m")
        if self.city_size != "medium":
            raise ModelValidityError(f"city_size '{self.city_size}' not supported, only 'medium'")


@dataclass(frozen=True)
class UMaNlos4GParams:
    """Street width W, average building height h and antenna heights, all in meters."""

    W: float = 20.0
    h: float = 20.0
    h_t: float = 25.0
    h_r: float = 1.5

    def __post_init__(self):
        check_range("h", self.h, 5.0, 50.0, "m")
        check_range("W", self.W, 5.0, 50.0, "m")
        check_range("h_t", self.h_t, 10.0, 150.0, "m")
        check_range("h_r", self.h_r, 1.5, 22.5, "m")

    @classmethod
    def from_geometry(cls, geom: LinkGeometry, W: float = 20.0, h: float = 20.0) -> "UMaNlos4GParams":
        return cls(W=W, h=h, h_t=geom.h_t, h_r=geom.h_r)


@dataclass(frozen=True)
class ShadowConfig:
    """
    Shadow-fading process settings.

    Args:
        sigma: Standard deviation in dB
        decorrelation_distance: Distance at which correlation falls to 1/e, meters
        seed: Seed of the process
        correlated: False draws i.i.d. samples regardless of positions
    """

    sigma: float
    decorrelation_distance: float = 50.0
    seed: int = 0
    correlated: bool = True

    def __post_init__(self):
        if self.sigma < 0:
            raise ModelValidityError(f"shadow sigma must be >= 0, got {self.sigma:g} dB")
        if self.decorrelation_distance <= 0:
            raise ModelValidityError(
                f"decorrelation distance must be > 0, got {self.decorrelation_distance:g} m"
            )


class ThreeGKind(Enum):
    INDOOR = "Indoor"
    O2I = "O2I"
    VEHICULAR = "Vehicular"


def free_space_pathloss_db(f: float, d: float) -> float:
    """
    Free-space pathloss 20 log10(4 pi d / lambda).

    Args:
        f: Frequency in Hz
        d: Distance in meters
    """
    if d <= 0:
        raise ModelValidityError(f"distance must be positive, got {d:g} m")
    wavelength = SPEED_OF_LIGHT / f
    return float(20.0 * np.log10(4.0 * np.pi * d / wavelength))


def friis_received_power(p_t: float, g_t_dbi: float, g_r_dbi: float, f: float, d: float) -> float:
    """
    Received power over a free-space link.

    Only meaningful in the far field of both antennas; the caller is
    responsible for that.

    Args:
        p_t: Transmit power in W
        g_t_dbi: Transmit antenna gain in dBi
        g_r_dbi: Receive antenna gain in dBi
        f: Frequency in Hz
        d: Distance in meters

    Returns:
        Received power in W
    """
    if d <= 0:
        raise ModelValidityError(f"distance must be positive, got {d:g} m")
    wavelength = SPEED_OF_LIGHT / f
    gains = 10.0 ** ((g_t_dbi + g_r_dbi) / 10.0)
    return float(p_t * gains * (wavelength / (4.0 * np.pi * d)) ** 2)


def pl_okumura_hata(p: HataParams, d: float) -> float:
    """
    Okumura-Hata urban pathloss.

    Args:
        p: Frequency (MHz) and antenna heights
        d: Distance in km

    Returns:
        Pathloss in dB
    """
    check_range("d", d, 1.0, 20.0, "km")
    log_f = np.log10(p.f)
    log_ht = np.log10(p.h_t)
    # mobile antenna correction, medium city
    a_hr = (1.1 * log_f - 0.7) * p.h_r - 1.56 * log_f - 0.8
    pl = 69.55 + 26.16 * log_f - 13.82 * log_ht - a_hr + (44.9 - 6.55 * log_ht) * np.log10(d)
    return float(pl)


def pl_3g(kind: ThreeGKind, d: float, f: float = 2000.0, n_floors: int = 0,
          delta_h_t: float = 15.0, indoor_distance_unit: str = "m") -> float:
    """
    3G indoor office, outdoor-to-indoor and vehicular pathloss.

    Args:
        kind: Which of the three environments
        d: Distance; km for O2I and vehicular, meters (or km) for indoor
        f: Carrier frequency in MHz (O2I and vehicular)
        n_floors: Floors crossed by the indoor path
        delta_h_t: BS height above average rooftop in meters (vehicular)
        indoor_distance_unit: "m" or "km" for the indoor distance

    Returns:
        Pathloss in dB
    """
    if d <= 0:
        raise ModelValidityError(f"distance must be positive, got {d:g}")
    if kind is ThreeGKind.INDOOR:
        if n_floors < 0:
            raise ModelValidityError(f"n_floors must be >= 0, got {n_floors}")
        if indoor_distance_unit not in ("m", "km"):
            raise ModelValidityError(f"indoor distance unit must be 'm' or 'km', got '{indoor_distance_unit}'")
        floor_term = 0.0
        if n_floors > 0:
            floor_term = 18.3 * n_floors ** ((n_floors + 2.0) / (n_floors + 1.0) - 0.46)
        d_m = d * 1000.0 if indoor_distance_unit == "km" else d
        return float(37.0 + 30.0 * np.log10(d_m) + floor_term)
    if kind is ThreeGKind.O2I:
        return float(40.0 * np.log10(d) + 30.0 * np.log10(f) + 49.0)
    if kind is ThreeGKind.VEHICULAR:
        if not 0.0 < delta_h_t <= 50.0:
            raise ModelValidityError(f"delta_h_t={delta_h_t:g} m outside validity range (0, 50] m")
        return float(
            40.0 * (1.0 - 4e-3 * delta_h_t) * np.log10(d)
            - 18.0 * np.log10(delta_h_t)
            + 21.0 * np.log10(f)
            + 80.0
        )
    raise ModelValidityError(f"unsupported 3G model kind {kind!r}")


def _los_two_slope(d: float, f_ghz: float, h_t: float, h_r: float, h_env: float) -> float:
    """
    Dual-slope LOS pathloss shared by 4G UMi/UMa and 5G UMa.

    The post-breakpoint expression sits 9 log10(1 + dh^2/d_bp^2) dB below
    the pre-breakpoint one at d_bp, so it is held at the breakpoint value
    until the 40 dB/decade branch catches up.
    """
    d_bp = breakpoint_distance(h_t, h_r, f_ghz * 1e9, h_env)
    freq_term = 20.0 * np.log10(f_ghz)
    if d <= d_bp:
        return float(22.0 * np.log10(d) + 28.0 + freq_term)
    at_breakpoint = 22.0 * np.log10(d_bp) + 28.0 + freq_term
    beyond = (40.0 * np.log10(d) + 28.0 + freq_term
              - 9.0 * np.log10(d_bp ** 2 + (h_t - h_r) ** 2))
    return float(max(beyond, at_breakpoint))


def pl_4g(scenario: ScenarioKind, state: LinkState, geom: LinkGeometry, f: float,
          uma_nlos: Optional[UMaNlos4GParams] = None, h_env: float = ENV_HEIGHT_M) -> float:
    """
    4G UMi and UMa pathloss.

    Args:
        scenario: ScenarioKind.UMI or ScenarioKind.UMA
        state: LOS or NLOS
        geom: Link geometry, d3d is the model distance
        f: Carrier frequency in GHz
        uma_nlos: Street/building parameters for UMa NLOS (defaults from geometry)
        h_env: Effective environment height for the breakpoint

    Returns:
        Pathloss in dB
    """
    d = geom.d3d
    if state is LinkState.LOS and scenario in (ScenarioKind.UMI, ScenarioKind.UMA):
        check_range("d3d", d, 10.0, 5000.0, "m")
        return _los_two_slope(d, f, geom.h_t, geom.h_r, h_env)
    if state is LinkState.NLOS and scenario is ScenarioKind.UMI:
        check_range("d3d", d, 10.0, 2000.0, "m")
        return float(36.7 * np.log10(d) + 22.7 + 26.0 * np.log10(f) - 0.3 * (geom.h_r - 1.5))
    if state is LinkState.NLOS and scenario is ScenarioKind.UMA:
        check_range("d3d", d, 10.0, 5000.0, "m")
        p = uma_nlos or UMaNlos4GParams.from_geometry(geom)
        log_ht = np.log10(p.h_t)
        pl = (161.04 - 7.1 * np.log10(p.W) + 7.5 * np.log10(p.h)
              - (24.37 - 3.7 * (p.h / p.h_t) ** 2) * log_ht
              + (43.42 - 3.1 * log_ht) * (np.log10(d) - 3.0)
              + 20.0 * np.log10(f)
              - (3.2 * np.log10(17.625) ** 2 - 4.97)
              - 0.6 * (p.h_r - 1.5))
        return float(pl)
    raise ModelValidityError(f"no 4G pathloss for {scenario.value} {state.value}")


def pl_5g_uma(geom: LinkGeometry, f: float, h_env: float = ENV_HEIGHT_M) -> tuple[float, float]:
    """
    5G UMa LOS and NLOS pathloss.

    Args:
        geom: Link geometry, d3d is the model distance
        f: Carrier frequency in GHz
        h_env: Effective environment height for the breakpoint

    Returns:
        Tuple of (los, nlos) in dB; nlos is never below los
    """
    d = geom.d3d
    check_range("d3d", d, 10.0, 5000.0, "m")
    los = _los_two_slope(d, f, geom.h_t, geom.h_r, h_env)
    nlos_prime = 13.54 + 39.081 * np.log10(d) + 20.0 * np.log10(f) - 0.6 * (geom.h_r - 1.5)
    return los, float(max(los, nlos_prime))


def default_shadow_sigma(model_id: str) -> float:
    """
    Shadow-fading sigma for a model id such as "UMa/NLOS" or "Vehicular3G".

    Args:
        model_id: Scenario value, optionally followed by "/<state>"

    Returns:
        Sigma in dB
    """
    table = load_data("scenario_parameters.json")["shadow_sigma_db"]
    if model_id not in table:
        raise ModelValidityError(f"no default shadow sigma for '{model_id}'")
    return float(table[model_id])


def apply_shadow(model_id: str, mean_pl: float, shadow: float = 0.0) -> PathlossResult:
    """Bundle a mean pathloss with a shadow realization."""
    return PathlossResult(model_id=model_id, mean_pl=float(mean_pl), shadow=float(shadow))


def shadow_draw(cfg: ShadowConfig, positions: Sequence[Position3D],
                rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Draw shadow fading along a sequence of positions.

    Consecutive samples follow a first-order autoregression with
    correlation exp(-delta/d_corr), delta being the distance between the
    positions, so the process is stationary with std sigma.

    Args:
        cfg: Sigma, decorrelation distance and seed
        positions: Positions ordered along the trajectory
        rng: Optional generator; defaults to one seeded from cfg.seed

    Returns:
        Array of shadow values in dB, one per position
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    count = len(positions)
    if count == 0:
        return np.zeros(0)
    white = rng.standard_normal(count)
    if cfg.sigma == 0:
        return np.zeros(count)
    if not cfg.correlated or count == 1:
        return cfg.sigma * white

    coords = np.array([p.as_array() for p in positions])
    steps = np.linalg.norm(np.diff(coords, axis=0), axis=1)
    rho = np.exp(-steps / cfg.decorrelation_distance)
    innovation = np.sqrt(1.0 - rho ** 2)
    samples = np.empty(count)
    samples[0] = white[0]
    for k in range(1, count):
        samples[k] = rho[k - 1] * samples[k - 1] + innovation[k - 1] * white[k]
    return cfg.sigma * samples
