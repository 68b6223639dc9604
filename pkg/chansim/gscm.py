"""
Geometry-based stochastic cluster channel.

Drop generation runs in a fixed order: link state, pathloss, large-scale
parameters, cluster delays, cluster powers, angles, cross-polarization and
phases, and finally the per element-pair coefficients. Every random draw
comes from one per-drop stream, so (config, seed, drop) fixes the output bit
for bit.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from chansim.antenna import AntennaArraySpec, element_positions, field_pattern
from chansim.errors import ModelValidityError
from chansim.link_state import (
    BlockerRegion,
    LosModel,
    LosProbParams,
    MaterialMix,
    OxygenTable,
    blockage_attenuation,
    draw_indoor_distance,
    draw_los_state,
    los_probability,
    o2i_loss,
    oxygen_loss,
)
from chansim.pathloss import pl_4g, pl_5g_uma
from chansim.scenario import (
    CarrierSpec,
    LinkGeometry,
    LinkState,
    ScenarioKind,
    spherical_unit_vector,
    wrap_azimuth_deg,
    wrap_zenith_deg,
)
from utils.config import ENV_HEIGHT_M
from utils.helpers import drop_rng, load_data

logger = logging.getLogger(__name__)

LSP_NAMES = ("DS", "ASD", "ASA", "ZSA")
MAX_AZIMUTH_SPREAD_DEG = 104.0
MAX_ZENITH_SPREAD_DEG = 52.0


@dataclass(frozen=True)
class AffineParameter:
    """slope * basis(f) + intercept, f in GHz."""

    slope: float
    intercept: float
    basis: str = "const"

    def evaluate(self, f_ghz: float) -> float:
        if self.basis == "const":
            return self.intercept
        if self.basis == "log10_1p_fc":
            return self.slope * np.log10(1.0 + f_ghz) + self.intercept
        if self.basis == "log10_fc":
            return self.slope * np.log10(f_ghz) + self.intercept
        raise ModelValidityError(f"unknown frequency basis '{self.basis}'")


@dataclass(frozen=True)
class ParameterEntry:
    """Statistics of one (scenario, state) pair."""

    scenario: ScenarioKind
    state: LinkState
    lsp: dict
    clusters: int
    delay_scaling: float
    cluster_shadowing_db: float
    c_asd: float
    c_asa: float
    c_zsa: float
    xpr_mu_db: float
    xpr_sigma_db: float
    shadow_sigma_db: float
    k_mu_db: Optional[float] = None
    k_sigma_db: Optional[float] = None

    def __post_init__(self):
        if self.clusters < 1:
            raise ModelValidityError(f"cluster count must be >= 1, got {self.clusters}")
        if self.delay_scaling <= 1.0:
            raise ModelValidityError(f"delay scaling must be > 1, got {self.delay_scaling:g}")

    def mu(self, name: str, f_ghz: float) -> float:
        return float(self.lsp[name][0].evaluate(f_ghz))

    def sigma(self, name: str, f_ghz: float) -> float:
        value = float(self.lsp[name][1].evaluate(f_ghz))
        if value < 0:
            raise ModelValidityError(
                f"{self.scenario.value} {self.state.value} sigma_lg{name} negative at {f_ghz:g} GHz"
            )
        return value


class ScenarioParameterTable:
    """
    Per-scenario, per-state large-scale and cluster statistics.

    Args:
        entries: ParameterEntry keyed by (ScenarioKind, LinkState)
        max_frequency_ghz: Upper frequency bound per scenario
        ray_offsets: Normalized intra-cluster ray offsets
        azimuth_scaling: (cluster counts, factors) for azimuth generation
        zenith_scaling: (cluster counts, factors) for zenith generation
    """

    def __init__(self, entries: dict, max_frequency_ghz: dict, ray_offsets: Sequence[float],
                 azimuth_scaling: tuple, zenith_scaling: tuple):
        self.entries = dict(entries)
        self.max_frequency_ghz = dict(max_frequency_ghz)
        self.ray_offsets = np.asarray(ray_offsets, dtype=float)
        self._azimuth_scaling = tuple(np.asarray(v, dtype=float) for v in azimuth_scaling)
        self._zenith_scaling = tuple(np.asarray(v, dtype=float) for v in zenith_scaling)

    @classmethod
    def load(cls, file_name: str = "scenario_parameters.json") -> "ScenarioParameterTable":
        data = load_data(file_name)
        if len(data["ray_offsets"]) != data["rays_per_cluster"]:
            raise ModelValidityError("ray offset table length must equal rays_per_cluster")
        sigmas = data["shadow_sigma_db"]
        entries, max_freq = {}, {}
        for scenario_name, block in data["scenarios"].items():
            scenario = ScenarioKind.parse(scenario_name)
            max_freq[scenario] = float(block["max_frequency_ghz"])
            for state_name, row in block.items():
                if state_name == "max_frequency_ghz":
                    continue
                state = LinkState.parse(state_name)
                lsp = {
                    name: (AffineParameter(**row[f"lg{name}"]["mu"]), AffineParameter(**row[f"lg{name}"]["sigma"]))
                    for name in LSP_NAMES
                }
                entries[(scenario, state)] = ParameterEntry(
                    scenario=scenario,
                    state=state,
                    lsp=lsp,
                    clusters=int(row["clusters"]),
                    delay_scaling=float(row["delay_scaling"]),
                    cluster_shadowing_db=float(row["cluster_shadowing_db"]),
                    c_asd=float(row["c_asd"]),
                    c_asa=float(row["c_asa"]),
                    c_zsa=float(row["c_zsa"]),
                    xpr_mu_db=float(row["xpr_mu_db"]),
                    xpr_sigma_db=float(row["xpr_sigma_db"]),
                    shadow_sigma_db=float(sigmas[f"{scenario.value}/{state.value}"]),
                    k_mu_db=row.get("k_mu_db"),
                    k_sigma_db=row.get("k_sigma_db"),
                )
        azimuth = (data["azimuth_scaling"]["clusters"], data["azimuth_scaling"]["factor"])
        zenith = (data["zenith_scaling"]["clusters"], data["zenith_scaling"]["factor"])
        return cls(entries, max_freq, data["ray_offsets"], azimuth, zenith)

    @property
    def rays_per_cluster(self) -> int:
        return int(self.ray_offsets.size)

    def entry(self, scenario: ScenarioKind, state: LinkState) -> ParameterEntry:
        try:
            return self.entries[(scenario, state)]
        except KeyError:
            raise ModelValidityError(
                f"no parameter table entry for {scenario.value} {state.value}"
            ) from None

    def override(self, scenario: ScenarioKind, state: LinkState, **changes) -> "ScenarioParameterTable":
        """Copy of the table with some fields of one entry replaced."""
        entries = dict(self.entries)
        entries[(scenario, state)] = replace(self.entry(scenario, state), **changes)
        return ScenarioParameterTable(entries, self.max_frequency_ghz, self.ray_offsets,
                                      self._azimuth_scaling, self._zenith_scaling)

    def check_frequency(self, scenario: ScenarioKind, f_ghz: float) -> None:
        limit = self.max_frequency_ghz.get(scenario)
        if limit is not None and f_ghz > limit:
            raise ModelValidityError(
                f"{scenario.value} parameters are valid up to {limit:g} GHz, got {f_ghz:g} GHz"
            )

    def azimuth_scaling(self, clusters: int) -> float:
        counts, factors = self._azimuth_scaling
        return float(np.interp(clusters, counts, factors))

    def zenith_scaling(self, clusters: int) -> float:
        counts, factors = self._zenith_scaling
        return float(np.interp(clusters, counts, factors))


@dataclass(frozen=True)
class LargeScaleParams:
    """
    One draw of the large-scale parameters.

    Spreads are capped for angle generation; ``lg`` keeps the raw log10
    draws, which is what the statistics are checked against.
    """

    ds: float
    asd: float
    asa: float
    zsa: float
    sf_db: float
    k_db: Optional[float]
    lg: dict


def draw_lsps(table: ScenarioParameterTable, scenario: ScenarioKind, state: LinkState, f_c: float,
              rng: np.random.Generator, correlation: Optional[np.ndarray] = None) -> LargeScaleParams:
    """
    Draw delay spread, angle spreads, shadow fading and (LOS) K-factor.

    Args:
        table: Parameter table
        scenario: Scenario
        state: Link state
        f_c: Carrier frequency in Hz
        rng: Random stream
        correlation: Optional 4x4 correlation of (DS, ASD, ASA, ZSA) in the log domain

    Returns:
        LargeScaleParams
    """
    entry = table.entry(scenario, state)
    f_ghz = f_c / 1e9
    table.check_frequency(scenario, f_ghz)

    z = rng.standard_normal(len(LSP_NAMES))
    if correlation is not None:
        correlation = np.asarray(correlation, dtype=float)
        if correlation.shape != (len(LSP_NAMES), len(LSP_NAMES)):
            raise ModelValidityError(f"LSP correlation must be 4x4, got {correlation.shape}")
        try:
            z = np.linalg.cholesky(correlation) @ z
        except np.linalg.LinAlgError:
            raise ModelValidityError("LSP correlation matrix is not positive definite") from None
    lg = {name: entry.mu(name, f_ghz) + entry.sigma(name, f_ghz) * z[i] for i, name in enumerate(LSP_NAMES)}
    sf_db = float(rng.normal(0.0, entry.shadow_sigma_db))
    k_draw = float(rng.standard_normal())
    k_db = None
    if state is LinkState.LOS and entry.k_mu_db is not None:
        k_db = float(entry.k_mu_db + (entry.k_sigma_db or 0.0) * k_draw)

    return LargeScaleParams(
        ds=10.0 ** lg["DS"],
        asd=min(10.0 ** lg["ASD"], MAX_AZIMUTH_SPREAD_DEG),
        asa=min(10.0 ** lg["ASA"], MAX_AZIMUTH_SPREAD_DEG),
        zsa=min(10.0 ** lg["ZSA"], MAX_ZENITH_SPREAD_DEG),
        sf_db=sf_db,
        k_db=k_db,
        lg=lg,
    )


def generate_cluster_delays(ds: float, r_tau: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """
    Exponentially distributed cluster delays, sorted, first delay zero.

    Args:
        ds: Delay spread in seconds
        r_tau: Delay scaling factor (> 1)
        n: Number of clusters
        rng: Random stream

    Returns:
        Delays in seconds
    """
    if ds <= 0 or r_tau <= 1 or n < 1:
        raise ModelValidityError(f"need ds > 0, r_tau > 1, n >= 1 (got {ds:g}, {r_tau:g}, {n})")
    raw = -r_tau * ds * np.log(rng.uniform(size=n))
    raw = np.sort(raw)
    return raw - raw[0]


def cluster_power_profile(delays: np.ndarray, ds: float, r_tau: float, shadowing_db: np.ndarray,
                          k_db: Optional[float] = None) -> np.ndarray:
    """
    Normalized cluster powers for given delays and per-cluster shadowing.

    With a K-factor the first cluster additionally carries the direct ray.
    """
    powers = np.exp(-np.asarray(delays) * (r_tau - 1.0) / (r_tau * ds)) * 10.0 ** (-np.asarray(shadowing_db) / 10.0)
    powers = powers / powers.sum()
    if k_db is None:
        return powers
    if np.isposinf(k_db):
        powers = np.zeros_like(powers)
        powers[0] = 1.0
        return powers
    k = 10.0 ** (k_db / 10.0)
    powers = powers / (k + 1.0)
    powers[0] += k / (k + 1.0)
    return powers


def generate_cluster_powers(delays: np.ndarray, ds: float, r_tau: float, zeta: float,
                            k_db: Optional[float], rng: np.random.Generator) -> np.ndarray:
    """
    Exponential power-delay profile with lognormal per-cluster shadowing.

    Args:
        delays: Sorted cluster delays in seconds
        ds: Delay spread in seconds
        r_tau: Delay scaling factor
        zeta: Per-cluster shadowing std in dB
        k_db: Ricean K-factor in dB, None for NLOS
        rng: Random stream

    Returns:
        Powers summing to one
    """
    if zeta < 0:
        raise ModelValidityError(f"cluster shadowing std must be >= 0, got {zeta:g}")
    shadowing_db = zeta * rng.standard_normal(np.size(delays))
    return cluster_power_profile(delays, ds, r_tau, shadowing_db, k_db)


@dataclass(frozen=True)
class ClusterAngles:
    """Per-cluster mean angles (N,) and per-ray angles (N, M), degrees."""

    phi_aod: np.ndarray
    phi_aoa: np.ndarray
    theta_zod: np.ndarray
    theta_zoa: np.ndarray
    ray_aod: np.ndarray
    ray_aoa: np.ndarray
    ray_zod: np.ndarray
    ray_zoa: np.ndarray


def _scale_to_spread(deviation: np.ndarray, powers: np.ndarray, target: float, intra: float,
                     offsets: np.ndarray) -> np.ndarray:
    # rays add intra^2 * mean(offset^2) to the power-weighted variance
    cluster_target = np.sqrt(max(target ** 2 - intra ** 2 * np.mean(offsets ** 2), 0.0))
    mean = np.sum(powers * deviation) / np.sum(powers)
    current = np.sqrt(np.sum(powers * (deviation - mean) ** 2) / np.sum(powers))
    if current <= 0:
        return deviation
    return deviation * (cluster_target / current)


def _cluster_offsets(powers: np.ndarray, spread: float, scaling: float, zenith: bool,
                     los: bool, rng: np.random.Generator) -> np.ndarray:
    ratio = np.maximum(powers / powers.max(), np.finfo(float).tiny)
    if zenith:
        base = -spread * np.log(ratio) / scaling
    else:
        base = 2.0 * (spread / 1.4) * np.sqrt(-np.log(ratio)) / scaling
    sign = rng.integers(0, 2, size=powers.size) * 2 - 1
    deviation = sign * base + rng.normal(0.0, spread / 7.0, size=powers.size)
    if los:
        deviation = deviation - deviation[0]
    return deviation


def generate_angles(powers: np.ndarray, spreads: tuple[float, float, float],
                    mean_direction: tuple[float, float, float, float], intra_spreads: tuple[float, float, float],
                    rng: np.random.Generator, table: ScenarioParameterTable,
                    k_db: Optional[float] = None) -> ClusterAngles:
    """
    Cluster and ray angles around the LOS directions.

    Cluster offsets follow the inverse-Gaussian power-angle mapping, so
    weaker clusters sit farther from the baseline. The offsets are then
    rescaled so the power-weighted spread over all rays equals the target
    spread. Rays use the fixed offset table scaled by the intra-cluster
    spread and are randomly coupled across the four angle sets.

    Args:
        powers: Normalized cluster powers
        spreads: (ASD, ASA, ZSA) in degrees
        mean_direction: LOS (AOD, AOA, ZOD, ZOA) in degrees
        intra_spreads: (c_ASD, c_ASA, c_ZSA) in degrees
        rng: Random stream
        table: Source of scaling factors and ray offsets
        k_db: K-factor in dB for LOS links, None otherwise

    Returns:
        ClusterAngles
    """
    powers = np.asarray(powers, dtype=float)
    if min(spreads) <= 0:
        raise ModelValidityError(f"angle spreads must be positive, got {spreads}")
    n = powers.size
    offsets = table.ray_offsets
    los = k_db is not None
    c_phi = table.azimuth_scaling(n)
    c_theta = table.zenith_scaling(n)
    if los and np.isfinite(k_db):
        c_phi *= 1.1035 - 0.028 * k_db - 2e-3 * k_db ** 2 + 1e-4 * k_db ** 3
        c_theta *= 1.3086 + 0.0339 * k_db - 0.0077 * k_db ** 2 + 2e-4 * k_db ** 3

    asd, asa, zsa = spreads
    c_asd, c_asa, c_zsa = intra_spreads
    aod0, aoa0, zod0, zoa0 = mean_direction
    plan = (
        (asd, c_asd, aod0, False, c_phi),
        (asa, c_asa, aoa0, False, c_phi),
        (zsa, c_zsa, zod0, True, c_theta),
        (zsa, c_zsa, zoa0, True, c_theta),
    )
    means, rays = [], []
    for spread, intra, baseline, zenith, scaling in plan:
        deviation = _cluster_offsets(powers, spread, scaling, zenith, los, rng)
        deviation = _scale_to_spread(deviation, powers, spread, intra, offsets)
        cluster_mean = baseline + deviation
        ray = rng.permuted(cluster_mean[:, None] + intra * offsets[None, :], axis=1)
        if zenith:
            means.append(wrap_zenith_deg(cluster_mean))
            rays.append(wrap_zenith_deg(ray))
        else:
            means.append(wrap_azimuth_deg(cluster_mean))
            rays.append(wrap_azimuth_deg(ray))

    return ClusterAngles(
        phi_aod=np.atleast_1d(means[0]), phi_aoa=np.atleast_1d(means[1]),
        theta_zod=np.atleast_1d(means[2]), theta_zoa=np.atleast_1d(means[3]),
        ray_aod=np.atleast_2d(rays[0]), ray_aoa=np.atleast_2d(rays[1]),
        ray_zod=np.atleast_2d(rays[2]), ray_zoa=np.atleast_2d(rays[3]),
    )


def generate_xpr_phases(n: int, m: int, mu_db: float, sigma_db: float,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """
    Per-ray cross-polarization ratios (linear) and initial phases.

    Returns:
        (xpr of shape (n, m), phases of shape (n, m, 2, 2) ordered
        [[theta-theta, theta-phi], [phi-theta, phi-phi]])
    """
    xpr = 10.0 ** (rng.normal(mu_db, sigma_db, size=(n, m)) / 10.0)
    phases = rng.uniform(-np.pi, np.pi, size=(n, m, 2, 2))
    return xpr, phases


@dataclass(frozen=True)
class ClusterSet:
    """
    Clusters of one link.

    Delay-related context (delay spread, scaling, per-cluster shadowing and
    K-factor) is carried along so powers can be re-derived when delays move.
    """

    delays: np.ndarray
    powers: np.ndarray
    shadowing_db: np.ndarray
    angles: ClusterAngles
    xpr: np.ndarray
    phases: np.ndarray
    delay_spread: float
    delay_scaling: float
    k_db: Optional[float] = None

    @property
    def num_clusters(self) -> int:
        return int(self.delays.size)

    @property
    def num_rays(self) -> int:
        return int(self.xpr.shape[1])

    # per-cluster mean angles, so a ClusterSet can be used for blockage directly

    @property
    def phi_aod(self) -> np.ndarray:
        return self.angles.phi_aod

    @property
    def phi_aoa(self) -> np.ndarray:
        return self.angles.phi_aoa

    @property
    def theta_zod(self) -> np.ndarray:
        return self.angles.theta_zod

    @property
    def theta_zoa(self) -> np.ndarray:
        return self.angles.theta_zoa

    def validate(self, strict: bool = True) -> None:
        """
        Check the structural invariants.

        Args:
            strict: Also require ascending delays starting at zero, which holds
                for freshly drawn sets but not for sets evolved along a track
        """
        n, m = self.num_clusters, self.num_rays
        if self.powers.shape != (n,) or self.xpr.shape != (n, m) or self.phases.shape != (n, m, 2, 2):
            raise ModelValidityError("cluster set arrays have inconsistent shapes")
        if abs(self.powers.sum() - 1.0) > 1e-12:
            raise ModelValidityError(f"cluster powers sum to {self.powers.sum():.15g}, expected 1")
        if np.any(self.xpr <= 0):
            raise ModelValidityError("cross-polarization ratios must be positive")
        if strict and (self.delays[0] != 0.0 or np.any(np.diff(self.delays) < 0)):
            raise ModelValidityError("cluster delays must ascend from zero")


def rms_delay_spread(delays: np.ndarray, powers: np.ndarray) -> float:
    """Power-weighted rms delay spread."""
    weights = np.asarray(powers) / np.sum(powers)
    mean = np.sum(weights * delays)
    return float(np.sqrt(np.sum(weights * (np.asarray(delays) - mean) ** 2)))


def circular_angle_spread(angles_deg: np.ndarray, powers: np.ndarray) -> float:
    """Power-weighted circular spread sqrt(-2 ln |sum P e^{j phi}| / sum P), in degrees."""
    weights = np.asarray(powers, dtype=float)
    resultant = np.abs(np.sum(weights * np.exp(1j * np.deg2rad(angles_deg)))) / np.sum(weights)
    return float(np.rad2deg(np.sqrt(-2.0 * np.log(min(resultant, 1.0)))))


def arrival_directions(clusters: ClusterSet) -> np.ndarray:
    """Unit arrival vectors of every ray, shape (N, M, 3)."""
    return spherical_unit_vector(np.deg2rad(clusters.angles.ray_zoa), np.deg2rad(clusters.angles.ray_aoa))


def doppler_frequency(arrival_direction: np.ndarray, ms_velocity: np.ndarray, wavelength: float) -> np.ndarray:
    """
    Doppler shift r_rx . v / lambda.

    Args:
        arrival_direction: Unit vector(s), components on the last axis
        ms_velocity: Velocity vector in m/s
        wavelength: Wavelength in meters

    Returns:
        Doppler frequency in Hz with the leading shape of the directions
    """
    if wavelength <= 0:
        raise ModelValidityError(f"wavelength must be positive, got {wavelength:g}")
    return np.asarray(arrival_direction) @ np.asarray(ms_velocity, dtype=float) / wavelength


def adpd_sample(s_tau: float, s_phi: float, rng: np.random.Generator, size: Optional[int] = None):
    """
    Sample the exponential-delay, Laplacian-azimuth power profile.

    Args:
        s_tau: Delay scale (mean delay) in seconds
        s_phi: Azimuth scale in degrees
        rng: Random stream
        size: Number of samples, None for scalars

    Returns:
        Tuple (tau, phi)
    """
    if s_tau <= 0 or s_phi <= 0:
        raise ModelValidityError(f"ADPD scales must be positive, got {s_tau:g}, {s_phi:g}")
    return rng.exponential(s_tau, size=size), rng.laplace(0.0, s_phi, size=size)


def _element_fields(spec: AntennaArraySpec, zenith_deg: np.ndarray, azimuth_deg: np.ndarray) -> np.ndarray:
    """Field vectors of every element for every ray, shape (elements, N, M, 2)."""
    local_azimuth = spec.local_azimuth_deg(azimuth_deg)
    return np.stack([np.stack(field_pattern(spec.element, zenith_deg, local_azimuth, slant), axis=-1)
                     for slant in spec.slants_deg()])


def channel_coefficients(clusters: ClusterSet, tx: AntennaArraySpec, rx: AntennaArraySpec,
                         carrier: CarrierSpec, ms_velocity: np.ndarray, times: np.ndarray,
                         cluster_loss_db: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Coefficients h[u, s, n, t] of every element pair and cluster.

    Args:
        clusters: Cluster set
        tx: Transmit (BS) array
        rx: Receive (MS) array
        carrier: Carrier
        ms_velocity: MS velocity vector in m/s
        times: Sample times in seconds
        cluster_loss_db: Optional extra loss per cluster

    Returns:
        Complex array of shape (rx elements, tx elements, clusters, times)
    """
    wavelength = carrier.wavelength
    times = np.atleast_1d(np.asarray(times, dtype=float))
    ang = clusters.angles
    r_rx = arrival_directions(clusters)
    r_tx = spherical_unit_vector(np.deg2rad(ang.ray_zod), np.deg2rad(ang.ray_aod))

    f_rx = _element_fields(rx, ang.ray_zoa, ang.ray_aoa)
    f_tx = _element_fields(tx, ang.ray_zod, ang.ray_aod)

    cross = 1.0 / np.sqrt(clusters.xpr)
    phase = np.exp(1j * clusters.phases)
    polarization = phase * np.stack(
        [np.stack([np.ones_like(cross), cross], axis=-1), np.stack([cross, np.ones_like(cross)], axis=-1)],
        axis=-2,
    )

    a_rx = np.exp(1j * 2.0 * np.pi * (r_rx @ element_positions(rx, wavelength).T) / wavelength)
    a_tx = np.exp(1j * 2.0 * np.pi * (r_tx @ element_positions(tx, wavelength).T) / wavelength)
    nu = doppler_frequency(r_rx, ms_velocity, wavelength)
    doppler = np.exp(1j * 2.0 * np.pi * nu[..., None] * times[None, None, :])

    rays = np.einsum("unmi,nmij,snmj->usnm", f_rx, polarization, f_tx)
    rays = rays * np.moveaxis(a_rx, -1, 0)[:, None] * np.moveaxis(a_tx, -1, 0)[None, :]
    h = np.einsum("usnm,nmt->usnt", rays, doppler)

    amplitude = np.sqrt(clusters.powers / clusters.num_rays)
    if cluster_loss_db is not None:
        amplitude = amplitude * 10.0 ** (-np.asarray(cluster_loss_db) / 20.0)
    return h * amplitude[None, None, :, None]


def channel_coefficient(clusters: ClusterSet, n: int, tx: AntennaArraySpec, rx: AntennaArraySpec,
                        carrier: CarrierSpec, ms_velocity: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Coefficients h[u, s, t] of cluster n."""
    if not 0 <= n < clusters.num_clusters:
        raise ModelValidityError(f"cluster index {n} out of range [0, {clusters.num_clusters})")
    single = _select_clusters(clusters, [n])
    return channel_coefficients(single, tx, rx, carrier, ms_velocity, times)[:, :, 0, :]


def _select_clusters(clusters: ClusterSet, index: Sequence[int]) -> ClusterSet:
    index = np.asarray(index)
    ang = clusters.angles
    angles = ClusterAngles(*(getattr(ang, f)[index] for f in ClusterAngles.__dataclass_fields__))
    return replace(clusters, delays=clusters.delays[index], powers=clusters.powers[index],
                   shadowing_db=clusters.shadowing_db[index], angles=angles,
                   xpr=clusters.xpr[index], phases=clusters.phases[index])


@dataclass(frozen=True)
class LinkConfig:
    """
    Everything needed to generate drops of one link.

    Args:
        scenario: Scenario
        carrier: Carrier
        geometry: Link geometry
        state: Forced link state, or None to draw it from the LOS probability
        tx_array: BS array
        rx_array: MS array
        times: Sample times in seconds
        oxygen: Apply gaseous absorption per cluster
        o2i_preset: Facade preset for O2I links, None disables O2I loss
        blockers: Blocker regions, empty disables blockage
        lsp_correlation: Optional LSP correlation matrix
        h_env: Effective environment height for breakpoints
    """

    scenario: ScenarioKind
    carrier: CarrierSpec
    geometry: LinkGeometry
    state: Optional[LinkState] = None
    tx_array: AntennaArraySpec = field(default_factory=AntennaArraySpec.isotropic)
    rx_array: AntennaArraySpec = field(default_factory=AntennaArraySpec.isotropic)
    times: tuple = (0.0,)
    oxygen: bool = False
    o2i_preset: Optional[str] = None
    blockers: tuple = ()
    lsp_correlation: Optional[np.ndarray] = None
    h_env: float = ENV_HEIGHT_M


@dataclass
class ChannelCoefficientTensor:
    """Coefficients h[u, s, n, t] with cluster delays and run metadata."""

    coefficients: np.ndarray
    times: np.ndarray
    delays: np.ndarray
    cluster_loss_db: np.ndarray
    clusters: ClusterSet
    metadata: dict

    def __post_init__(self):
        if not np.all(np.isfinite(self.coefficients)):
            raise ModelValidityError("channel coefficients contain non-finite values")

    @property
    def shape(self) -> tuple:
        return self.coefficients.shape

    def wideband_power(self) -> np.ndarray:
        """Sum over clusters of |h|^2, shape (U, S, T)."""
        return np.sum(np.abs(self.coefficients) ** 2, axis=2)


LOS_MODELS = {ScenarioKind.UMA: LosModel.UMA_3GPP, ScenarioKind.UMI: LosModel.UMI_3GPP}


def resolve_link_state(config: LinkConfig, rng: np.random.Generator) -> LinkState:
    """
    Forced state, or a Bernoulli draw from the scenario's LOS probability.

    Raises:
        ModelValidityError: No state is forced and the scenario has no LOS model
    """
    if config.state is not None:
        return config.state
    model = LOS_MODELS.get(config.scenario)
    if model is None:
        raise ModelValidityError(f"{config.scenario.value} has no LOS probability model; set the link state")
    p = los_probability(LosProbParams(model=model), config.geometry.d2d, config.geometry.h_r)
    return draw_los_state(p, rng)


def link_pathloss(config: LinkConfig, state: LinkState) -> Optional[float]:
    """
    Mean pathloss of the link, None for scenarios without a closed form here.

    O2I links use the outdoor NLOS value; penetration is added separately.
    """
    f_ghz = config.carrier.f_ghz
    geom = config.geometry
    if config.scenario is ScenarioKind.UMA:
        los, nlos = pl_5g_uma(geom, f_ghz, config.h_env)
        return los if state is LinkState.LOS else nlos
    if config.scenario is ScenarioKind.UMI:
        outdoor = LinkState.LOS if state is LinkState.LOS else LinkState.NLOS
        return pl_4g(config.scenario, outdoor, geom, f_ghz, h_env=config.h_env)
    return None


def draw_cluster_set(table: ScenarioParameterTable, scenario: ScenarioKind, state: LinkState,
                     lsps: LargeScaleParams, geometry: LinkGeometry, rng: np.random.Generator) -> ClusterSet:
    """
    Delays, powers, angles, cross-polarization and phases of one drop.

    Args:
        table: Parameter table
        scenario: Scenario
        state: Link state
        lsps: Large-scale parameters of the drop
        geometry: Link geometry (LOS directions)
        rng: Random stream

    Returns:
        Validated ClusterSet
    """
    entry = table.entry(scenario, state)
    delays = generate_cluster_delays(lsps.ds, entry.delay_scaling, entry.clusters, rng)
    shadowing_db = entry.cluster_shadowing_db * rng.standard_normal(entry.clusters)
    powers = cluster_power_profile(delays, lsps.ds, entry.delay_scaling, shadowing_db, lsps.k_db)
    angles = generate_angles(
        powers,
        (lsps.asd, lsps.asa, lsps.zsa),
        (geometry.los_aod_deg, geometry.los_aoa_deg, geometry.los_zod_deg, geometry.los_zoa_deg),
        (entry.c_asd, entry.c_asa, entry.c_zsa),
        rng,
        table,
        lsps.k_db,
    )
    xpr, phases = generate_xpr_phases(entry.clusters, table.rays_per_cluster,
                                      entry.xpr_mu_db, entry.xpr_sigma_db, rng)
    clusters = ClusterSet(delays, powers, shadowing_db, angles, xpr, phases,
                          lsps.ds, entry.delay_scaling, lsps.k_db)
    clusters.validate()
    return clusters


def assemble_link(config: LinkConfig, seed: int, drop_index: int = 0,
                  table: Optional[ScenarioParameterTable] = None) -> ChannelCoefficientTensor:
    """
    Generate one drop of the link.

    Args:
        config: Link configuration
        seed: Run seed
        drop_index: Drop number, selects an independent stream
        table: Parameter table, loaded from the data root when omitted

    Returns:
        ChannelCoefficientTensor; identical inputs give identical tensors
    """
    table = table or ScenarioParameterTable.load()
    rng = drop_rng(seed, drop_index)
    geom = config.geometry

    state = resolve_link_state(config, rng)
    pathloss_db = link_pathloss(config, state)
    lsps = draw_lsps(table, config.scenario, state, config.carrier.f_c, rng, config.lsp_correlation)

    shadow_db = lsps.sf_db
    if state is LinkState.O2I and config.o2i_preset:
        penetration = o2i_loss(MaterialMix.preset(config.o2i_preset), config.carrier.f_ghz,
                               draw_indoor_distance(rng), rng)
        shadow_db += penetration.total

    clusters = draw_cluster_set(table, config.scenario, state, lsps, geom, rng)

    cluster_loss_db = np.zeros(clusters.num_clusters)
    if config.oxygen:
        absorption = OxygenTable.load()
        cluster_loss_db += np.array([
            oxygen_loss(absorption, config.carrier.f_ghz, geom.d3d, tau) for tau in clusters.delays
        ])
    if config.blockers:
        cluster_loss_db += blockage_attenuation(config.blockers, clusters)

    times = np.asarray(config.times, dtype=float)
    coefficients = channel_coefficients(clusters, config.tx_array, config.rx_array, config.carrier,
                                        geom.ms_velocity.vector(), times, cluster_loss_db)
    logger.debug("drop %d: %s %s, %d clusters", drop_index, config.scenario.value, state.value,
                 clusters.num_clusters)
    metadata = {
        "f_c_hz": config.carrier.f_c,
        "seed": int(seed),
        "drop": int(drop_index),
        "scenario": config.scenario.value,
        "state": state.value,
        "pathloss_db": pathloss_db,
        "shadow_db": shadow_db,
        "lsp": dict(lsps.lg),
    }
    return ChannelCoefficientTensor(coefficients, times, clusters.delays.copy(), cluster_loss_db,
                                    clusters, metadata)
