"""
Spatially consistent cluster evolution along an MS trajectory.

Each cluster is treated as seen through an anchor at distance
d3d + c * tau along its arrival direction. Per step the MS displacement
changes the path length by its projection on the arrival direction and
turns the angles by the transverse part over the anchor distance.
"""
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np
import pandas as pd

from chansim.errors import ModelValidityError
from chansim.gscm import (
    ClusterAngles,
    ClusterSet,
    LinkConfig,
    ScenarioParameterTable,
    cluster_power_profile,
    draw_cluster_set,
    draw_lsps,
    resolve_link_state,
)
from chansim.scenario import (
    SPEED_OF_LIGHT,
    LinkGeometry,
    Position3D,
    spherical_unit_vector,
    wrap_azimuth_deg,
    wrap_zenith_deg,
)
from utils.helpers import drop_rng

logger = logging.getLogger(__name__)

MAX_STEP_M = 1.0
ANGLE_KINDS = ("aod", "aoa", "zod", "zoa")


class SCMode(Enum):
    SC_I = "SC-I"
    DROP = "drop"

    @classmethod
    def parse(cls, name: str) -> "SCMode":
        lowered = name.strip().lower()
        for mode in cls:
            if mode.value.lower() == lowered or mode.name.lower() == lowered:
                return mode
        raise ValueError(f"Unknown trajectory mode '{name}'. Expected SC-I or drop")


@dataclass(frozen=True)
class Trajectory:
    """
    Piecewise-linear MS route walked at constant speed.

    Args:
        waypoints: Route corners
        speed: Speed in m/s
        step: Distance between channel updates in meters
        correlation_distance: Large-scale correlation distance in meters
    """

    waypoints: tuple
    speed: float
    step: float = 0.1
    correlation_distance: float = 15.0

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ModelValidityError("trajectory needs at least two waypoints")
        if self.speed <= 0:
            raise ModelValidityError(f"speed must be positive, got {self.speed:g} m/s")
        if not 0 < self.step <= self.correlation_distance:
            raise ModelValidityError(
                f"step must be in (0, {self.correlation_distance:g}] m, got {self.step:g} m"
            )

    @property
    def update_interval(self) -> float:
        return self.step / self.speed

    def length(self) -> float:
        points = np.array([p.as_array() for p in self.waypoints])
        return float(np.sum(np.linalg.norm(np.diff(points, axis=0), axis=1)))

    def positions(self) -> np.ndarray:
        """Route sampled every ``step`` meters (last sample at the end point), shape (K, 3)."""
        points = np.array([p.as_array() for p in self.waypoints])
        cumulative = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(points, axis=0), axis=1))])
        total = cumulative[-1]
        samples = np.arange(0.0, total, self.step)
        if total - samples[-1] > 1e-9 * max(total, 1.0):
            samples = np.append(samples, total)
        return np.stack([np.interp(samples, cumulative, points[:, i]) for i in range(3)], axis=-1)

    def reversed(self) -> "Trajectory":
        return replace(self, waypoints=tuple(reversed(self.waypoints)))


def _tangent_vectors(zenith_deg: np.ndarray, azimuth_deg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    theta, phi = np.deg2rad(zenith_deg), np.deg2rad(azimuth_deg)
    theta_hat = np.stack([np.cos(theta) * np.cos(phi), np.cos(theta) * np.sin(phi), -np.sin(theta)], axis=-1)
    phi_hat = np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)], axis=-1)
    return theta_hat, phi_hat


def _angle_shift(displacement: np.ndarray, zenith_deg: np.ndarray, azimuth_deg: np.ndarray,
                 anchor: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Zenith and azimuth change (deg) of a direction when its anchor moves by ``displacement``."""
    theta_hat, phi_hat = _tangent_vectors(zenith_deg, azimuth_deg)
    sin_theta = np.maximum(np.sin(np.deg2rad(zenith_deg)), 1e-6)
    d_zenith = np.rad2deg(theta_hat @ displacement / anchor)
    d_azimuth = np.rad2deg(phi_hat @ displacement / (anchor * sin_theta))
    return d_zenith, d_azimuth


def sc_update_step(prev: ClusterSet, geometry: LinkGeometry, dt: float, ms_velocity: np.ndarray) -> ClusterSet:
    """
    Advance a cluster set by one MS step.

    Args:
        prev: Cluster set at the start of the step
        geometry: Link geometry at the start of the step
        dt: Step duration in seconds
        ms_velocity: MS velocity vector in m/s over the step

    Returns:
        Updated ClusterSet; delays drift absolutely and are not re-zeroed
    """
    displacement = np.asarray(ms_velocity, dtype=float) * dt
    distance = float(np.linalg.norm(displacement))
    if distance > MAX_STEP_M:
        raise ModelValidityError(f"step of {distance:g} m exceeds the {MAX_STEP_M:g} m update limit")
    if distance == 0.0:
        return prev

    ang = prev.angles
    anchor = geometry.d3d + SPEED_OF_LIGHT * prev.delays
    arrival = spherical_unit_vector(np.deg2rad(ang.theta_zoa), np.deg2rad(ang.phi_aoa))
    delays = prev.delays - arrival @ displacement / SPEED_OF_LIGHT

    d_zoa, d_aoa = _angle_shift(displacement, ang.theta_zoa, ang.phi_aoa, anchor)
    d_zod, d_aod = _angle_shift(displacement, ang.theta_zod, ang.phi_aod, anchor)
    # arrival directions turn against the motion, departure directions follow it
    d_zoa, d_aoa = -d_zoa, -d_aoa

    angles = ClusterAngles(
        phi_aod=wrap_azimuth_deg(ang.phi_aod + d_aod),
        phi_aoa=wrap_azimuth_deg(ang.phi_aoa + d_aoa),
        theta_zod=wrap_zenith_deg(ang.theta_zod + d_zod),
        theta_zoa=wrap_zenith_deg(ang.theta_zoa + d_zoa),
        ray_aod=wrap_azimuth_deg(ang.ray_aod + d_aod[:, None]),
        ray_aoa=wrap_azimuth_deg(ang.ray_aoa + d_aoa[:, None]),
        ray_zod=wrap_zenith_deg(ang.ray_zod + d_zod[:, None]),
        ray_zoa=wrap_zenith_deg(ang.ray_zoa + d_zoa[:, None]),
    )
    powers = cluster_power_profile(delays, prev.delay_spread, prev.delay_scaling, prev.shadowing_db, prev.k_db)
    updated = replace(prev, delays=delays, powers=powers, angles=angles)
    updated.validate(strict=False)
    return updated


def evolve_clusters(initial: ClusterSet, geometry: LinkGeometry, positions: np.ndarray,
                    dt: float) -> list[ClusterSet]:
    """
    Run sc_update_step over consecutive positions.

    Args:
        initial: Cluster set at positions[0]
        geometry: Link geometry; the MS is moved to each position in turn
        positions: MS positions, shape (K, 3)
        dt: Time between positions in seconds

    Returns:
        K cluster sets, the first being ``initial``
    """
    snapshots = [initial]
    for start, end in zip(positions[:-1], positions[1:]):
        current = geometry.moved_to(Position3D.from_sequence(start))
        snapshots.append(sc_update_step(snapshots[-1], current, dt, (end - start) / dt))
    return snapshots


@dataclass
class EvolvingClusterTrack:
    """Cluster snapshots along a route; cluster indices are stable across steps."""

    mode: SCMode
    positions: np.ndarray
    cumulative_distance: np.ndarray
    snapshots: list = field(default_factory=list)

    @property
    def num_steps(self) -> int:
        return len(self.snapshots)

    def delays(self) -> np.ndarray:
        """Delays in seconds, shape (steps, clusters)."""
        return np.array([s.delays for s in self.snapshots])

    def powers(self) -> np.ndarray:
        return np.array([s.powers for s in self.snapshots])

    def angles(self, kind: str, unwrap: bool = False) -> np.ndarray:
        """
        Cluster mean angles in degrees, shape (steps, clusters).

        Args:
            kind: One of aod, aoa, zod, zoa
            unwrap: Remove 360 degree jumps along each track
        """
        if kind not in ANGLE_KINDS:
            raise ValueError(f"Unknown angle kind '{kind}'. Expected one of {ANGLE_KINDS}")
        attribute = {"aod": "phi_aod", "aoa": "phi_aoa", "zod": "theta_zod", "zoa": "theta_zoa"}[kind]
        values = np.array([getattr(s, attribute) for s in self.snapshots])
        if unwrap and kind in ("aod", "aoa"):
            values = np.unwrap(values, period=360.0, axis=0)
        return values

    def to_frame(self) -> pd.DataFrame:
        n_steps = self.num_steps
        n_clusters = self.snapshots[0].num_clusters
        with np.errstate(divide="ignore"):
            power_db = 10.0 * np.log10(self.powers())
        return pd.DataFrame({
            "step": np.repeat(np.arange(n_steps), n_clusters),
            "cum_dist_m": np.repeat(self.cumulative_distance, n_clusters),
            "cluster": np.tile(np.arange(n_clusters), n_steps),
            "delay_ns": self.delays().ravel() * 1e9,
            "aod_deg": self.angles("aod").ravel(),
            "aoa_deg": self.angles("aoa").ravel(),
            "power_db": power_db.ravel(),
        })


def max_step_delay_jump(track: EvolvingClusterTrack, cluster: Optional[int] = None) -> float:
    """Largest per-step delay change in seconds, over all clusters or one."""
    delays = track.delays()
    if cluster is not None:
        delays = delays[:, [cluster]]
    if delays.shape[0] < 2:
        return 0.0
    return float(np.max(np.abs(np.diff(delays, axis=0))))


def step_delay_jumps(track: EvolvingClusterTrack, cluster: int) -> np.ndarray:
    """Per-step delay changes of one cluster in seconds."""
    return np.abs(np.diff(track.delays()[:, cluster]))


def simulate_trajectory(config: LinkConfig, trajectory: Trajectory, mode: SCMode, seed: int,
                        table: Optional[ScenarioParameterTable] = None) -> EvolvingClusterTrack:
    """
    Cluster tracks along a route.

    SC-I draws one cluster set at the start and evolves it step by step.
    Drop mode redraws every step from an independent stream. An SC-I route
    whose step exceeds MAX_STEP_M degenerates to drop mode and yields the
    same cluster sets. The link state is drawn once at the start and kept
    for the whole route.

    Args:
        config: Link configuration; its MS position is replaced by the route
        trajectory: Route
        mode: SC-I or drop
        seed: Run seed
        table: Parameter table, loaded when omitted

    Returns:
        EvolvingClusterTrack
    """
    table = table or ScenarioParameterTable.load()
    positions = trajectory.positions()
    cumulative = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(positions, axis=0), axis=1))])
    start = config.geometry.moved_to(Position3D.from_sequence(positions[0]))
    config = replace(config, geometry=start)

    rng = drop_rng(seed, 0)
    state = resolve_link_state(config, rng)
    degenerate = mode is SCMode.SC_I and trajectory.step > MAX_STEP_M
    if degenerate:
        logger.info("%.3g m steps exceed the %.3g m update limit, redrawing clusters every step",
                    trajectory.step, MAX_STEP_M)
    if mode is SCMode.SC_I and not degenerate:
        lsps = draw_lsps(table, config.scenario, state, config.carrier.f_c, rng, config.lsp_correlation)
        initial = draw_cluster_set(table, config.scenario, state, lsps, start, rng)
        snapshots = evolve_clusters(initial, start, positions, trajectory.update_interval)
    else:
        snapshots = []
        for k, position in enumerate(positions):
            step_rng = rng if k == 0 else drop_rng(seed, k)
            geometry = start.moved_to(Position3D.from_sequence(position))
            lsps = draw_lsps(table, config.scenario, state, config.carrier.f_c, step_rng, config.lsp_correlation)
            snapshots.append(draw_cluster_set(table, config.scenario, state, lsps, geometry, step_rng))
    logger.info("%s track: %d steps over %.1f m", mode.value, len(snapshots), cumulative[-1])
    return EvolvingClusterTrack(mode, positions, cumulative, snapshots)

