"""
Test suite for the cluster channel engine: parameter draws, clusters,
angles and channel coefficients.
"""
from dataclasses import replace

import numpy as np
import pytest

from chansim.antenna import AntennaArraySpec, ElementPattern
from chansim.errors import ModelValidityError
from chansim.gscm import (
    AffineParameter,
    ChannelCoefficientTensor,
    ClusterAngles,
    ClusterSet,
    LinkConfig,
    adpd_sample,
    assemble_link,
    channel_coefficient,
    channel_coefficients,
    circular_angle_spread,
    doppler_frequency,
    draw_lsps,
    generate_angles,
    generate_cluster_delays,
    generate_cluster_powers,
    generate_xpr_phases,
    resolve_link_state,
    rms_delay_spread,
)
from chansim.link_state import BlockerRegion
from chansim.scenario import (
    CarrierSpec,
    LinkGeometry,
    LinkState,
    MsVelocity,
    Position3D,
    ScenarioKind,
    spherical_unit_vector,
    wrap_azimuth_deg,
)

LSP_ORDER = ("DS", "ASD", "ASA", "ZSA")
NOWHERE = (0.0, 180.0, 90.0, 90.0)


def static_clusters(powers, phases, xpr=np.inf) -> ClusterSet:
    """Cluster set with every ray at broadside and the given phases (N, M, 2, 2)."""
    powers = np.asarray(powers, dtype=float)
    n, m = phases.shape[:2]
    flat = np.zeros((n, m))
    angles = ClusterAngles(np.zeros(n), np.zeros(n), np.full(n, 90.0), np.full(n, 90.0),
                           flat, flat, flat + 90.0, flat + 90.0)
    return ClusterSet(np.zeros(n), powers, np.zeros(n), angles,
                      np.full((n, m), xpr), phases, 1e-7, 2.3)


def isotropic(slant: float = 0.0) -> AntennaArraySpec:
    return AntennaArraySpec(element=ElementPattern.isotropic_element(slant_deg=slant))


@pytest.mark.gscm
class TestLargeScaleParameters:
    """Test cases for large-scale parameter draws."""

    def test_umi_los_median_asd(self, parameter_table):
        """Test the UMi LOS ASD median at 9 GHz."""
        entry = parameter_table.entry(ScenarioKind.UMI, LinkState.LOS)
        assert entry.mu("ASD", 9.0) == pytest.approx(1.16), "Expected mu_lgASD = 1.16"
        assert 10 ** entry.mu("ASD", 9.0) == pytest.approx(14.45, abs=0.01), "Expected a 14.45 degree median"

    def test_zero_sigma_is_deterministic(self, parameter_table, rng):
        """Test that forcing sigma_lg = 0 pins every spread at 10^mu."""
        entry = parameter_table.entry(ScenarioKind.UMI, LinkState.NLOS)
        flat = {name: (mu, AffineParameter(0.0, 0.0)) for name, (mu, _) in entry.lsp.items()}
        table = parameter_table.override(ScenarioKind.UMI, LinkState.NLOS, lsp=flat)
        lsps = draw_lsps(table, ScenarioKind.UMI, LinkState.NLOS, 2e9, rng)
        assert lsps.ds == pytest.approx(10 ** entry.mu("DS", 2.0)), "DS must equal its median"
        assert lsps.asa == pytest.approx(10 ** entry.mu("ASA", 2.0)), "ASA must equal its median"

    @pytest.mark.slow
    @pytest.mark.parametrize("scenario, state", [
        (ScenarioKind.UMI, LinkState.LOS),
        (ScenarioKind.UMI, LinkState.NLOS),
        (ScenarioKind.UMA, LinkState.LOS),
        (ScenarioKind.UMA, LinkState.NLOS),
    ])
    @pytest.mark.parametrize("f_ghz", [2.0, 6.0, 28.0, 70.0])
    def test_log_spreads_match_table(self, parameter_table, scenario, state, f_ghz):
        """Test sample mean and std of the log10 spreads over 1e4 draws."""
        rng = np.random.default_rng(2024)
        entry = parameter_table.entry(scenario, state)
        draws = [draw_lsps(parameter_table, scenario, state, f_ghz * 1e9, rng).lg for _ in range(10_000)]
        for name in LSP_ORDER:
            values = np.array([d[name] for d in draws])
            mu, sigma = entry.mu(name, f_ghz), entry.sigma(name, f_ghz)
            assert abs(values.mean() - mu) <= 4 * sigma / np.sqrt(values.size), \
                f"{name} mean {values.mean():.4f} too far from {mu:.4f}"
            assert values.std() == pytest.approx(sigma, rel=0.05), f"{name} std {values.std():.4f} vs {sigma:.4f}"

    def test_correlation_matrix(self, parameter_table, rng):
        """Test that the LSP correlation carries over to the log spreads."""
        correlation = np.eye(4)
        correlation[0, 1] = correlation[1, 0] = 0.8
        draws = [draw_lsps(parameter_table, ScenarioKind.UMA, LinkState.NLOS, 28e9, rng, correlation).lg
                 for _ in range(10_000)]
        ds = np.array([d["DS"] for d in draws])
        asd = np.array([d["ASD"] for d in draws])
        asa = np.array([d["ASA"] for d in draws])
        assert np.corrcoef(ds, asd)[0, 1] == pytest.approx(0.8, abs=0.03), "DS-ASD correlation must be 0.8"
        assert abs(np.corrcoef(ds, asa)[0, 1]) < 0.05, "DS-ASA must stay uncorrelated"

    def test_not_positive_definite(self, parameter_table, rng):
        """Test that an invalid correlation matrix is rejected."""
        bad = np.full((4, 4), 0.99)
        bad[0, 1] = bad[1, 0] = -0.99
        np.fill_diagonal(bad, 1.0)
        with pytest.raises(ModelValidityError):
            draw_lsps(parameter_table, ScenarioKind.UMA, LinkState.NLOS, 28e9, rng, bad)

    def test_missing_entry(self, parameter_table, rng):
        """Test that scenarios without table rows are rejected."""
        with pytest.raises(ModelValidityError):
            draw_lsps(parameter_table, ScenarioKind.O2I_3G, LinkState.NLOS, 2e9, rng)

    def test_rma_above_seven_ghz(self, parameter_table, rng):
        """Test that RMa is not extrapolated beyond its table range."""
        with pytest.raises(ModelValidityError):
            draw_lsps(parameter_table, ScenarioKind.RMA, LinkState.LOS, 28e9, rng)

    def test_k_factor_only_for_los(self, parameter_table, rng):
        """Test that only LOS draws carry a K-factor."""
        assert draw_lsps(parameter_table, ScenarioKind.UMA, LinkState.LOS, 28e9, rng).k_db is not None, \
            "LOS draws need a K-factor"
        assert draw_lsps(parameter_table, ScenarioKind.UMA, LinkState.NLOS, 28e9, rng).k_db is None, \
            "NLOS draws have no K-factor"

    def test_spreads_capped(self, parameter_table, rng):
        """Test the azimuth and zenith spread caps."""
        for _ in range(2000):
            lsps = draw_lsps(parameter_table, ScenarioKind.UMI, LinkState.NLOS, 2e9, rng)
            assert 0 < lsps.asa <= 104.0 and 0 < lsps.asd <= 104.0, "Azimuth spreads must lie in (0, 104]"
            assert 0 < lsps.zsa <= 52.0, "Zenith spread must lie in (0, 52]"


@pytest.mark.gscm
class TestDelaysAndPowers:
    """Test cases for cluster delays and powers."""

    def test_single_cluster(self, rng):
        """Test that one cluster sits at zero delay."""
        assert list(generate_cluster_delays(1e-7, 2.3, 1, rng)) == [0.0], "Expected a single zero delay"

    def test_sorted_from_zero(self, rng):
        """Test ascending delays starting at zero."""
        delays = generate_cluster_delays(1e-7, 2.3, 20, rng)
        assert delays[0] == 0.0 and np.all(np.diff(delays) >= 0), "Delays must ascend from zero"

    def test_linear_in_delay_spread(self):
        """Test that doubling DS doubles every delay for a fixed seed."""
        single = generate_cluster_delays(1e-7, 2.1, 19, np.random.default_rng(4))
        double = generate_cluster_delays(2e-7, 2.1, 19, np.random.default_rng(4))
        assert double == pytest.approx(2 * single), "Delays must scale with DS"

    def test_invalid_inputs(self, rng):
        """Test that r_tau <= 1 is rejected."""
        with pytest.raises(ModelValidityError):
            generate_cluster_delays(1e-7, 1.0, 5, rng)

    def test_rms_spread_near_target(self, rng):
        """Test the median rms delay spread of regenerated profiles."""
        ds = 1e-7
        spreads = []
        for _ in range(2000):
            delays = generate_cluster_delays(ds, 2.1, 19, rng)
            spreads.append(rms_delay_spread(delays, generate_cluster_powers(delays, ds, 2.1, 0.0, None, rng)))
        ratio = np.median(spreads) / ds
        assert 0.6 <= ratio <= 1.1, f"Median rms delay spread should track DS, got ratio {ratio:.3f}"

    def test_equal_delays_equal_powers(self, rng):
        """Test equal powers for equal delays without shadowing."""
        powers = generate_cluster_powers(np.zeros(5), 1e-7, 2.3, 0.0, None, rng)
        assert powers == pytest.approx(np.full(5, 0.2)), "Expected equal powers"

    def test_decreasing_without_shadowing(self, rng):
        """Test strictly decreasing powers in delay when zeta is zero."""
        delays = np.linspace(0.0, 1e-6, 12)
        powers = generate_cluster_powers(delays, 1e-7, 2.3, 0.0, None, rng)
        assert np.all(np.diff(powers) < 0), "Powers must decrease with delay"

    def test_sum_to_one(self, rng):
        """Test normalization with shadowing and K-factor."""
        for k_db in (None, -5.0, 9.0):
            delays = generate_cluster_delays(3e-7, 2.5, 12, rng)
            powers = generate_cluster_powers(delays, 3e-7, 2.5, 3.0, k_db, rng)
            assert abs(powers.sum() - 1.0) <= 1e-12, f"Powers must sum to one (K={k_db})"

    def test_infinite_k_factor(self, rng):
        """Test that K = +inf puts all power into the first cluster."""
        delays = generate_cluster_delays(1e-7, 2.5, 12, rng)
        powers = generate_cluster_powers(delays, 1e-7, 2.5, 3.0, np.inf, rng)
        assert powers[0] == 1.0 and powers[1:].sum() == 0.0, "Expected all power at cluster 0"

    def test_finite_k_factor_floor(self, rng):
        """Test that the first cluster carries at least K/(K+1)."""
        delays = generate_cluster_delays(1e-7, 2.5, 12, rng)
        powers = generate_cluster_powers(delays, 1e-7, 2.5, 3.0, 10.0, rng)
        assert powers[0] >= 10 / 11, f"First cluster power {powers[0]} below K/(K+1)"


@pytest.mark.gscm
class TestAngles:
    """Test cases for cluster and ray angle generation."""

    def test_single_cluster_without_intra_spread(self, parameter_table, rng):
        """Test that all rays share the cluster mean when the intra spread is zero."""
        angles = generate_angles(np.array([1.0]), (10.0, 10.0, 10.0), (30.0, -150.0, 100.0, 80.0),
                                 (0.0, 0.0, 0.0), rng, parameter_table)
        assert np.allclose(angles.ray_aoa, angles.phi_aoa[0]), "Rays must sit at the cluster mean"
        assert np.allclose(angles.ray_zod, angles.theta_zod[0]), "Rays must sit at the cluster mean"

    def test_rays_use_offset_table(self, parameter_table, rng):
        """Test that each cluster's rays are its mean plus the scaled offsets, in some order."""
        powers = np.array([0.5, 0.3, 0.2])
        angles = generate_angles(powers, (20.0, 30.0, 8.0), NOWHERE, (2.0, 15.0, 7.0), rng, parameter_table)
        assert angles.ray_aoa.shape == (3, 20), f"Expected (3, 20) rays, got {angles.ray_aoa.shape}"
        expected = np.sort(15.0 * parameter_table.ray_offsets)
        for n in range(3):
            spread = np.sort(wrap_azimuth_deg(angles.ray_aoa[n] - angles.phi_aoa[n]))
            assert spread == pytest.approx(expected, abs=1e-9), f"Cluster {n} rays do not match the offsets"

    def test_los_cluster_on_baseline(self, parameter_table, rng):
        """Test that the first cluster of a LOS link points along the LOS direction."""
        powers = np.array([0.7, 0.2, 0.1])
        angles = generate_angles(powers, (20.0, 30.0, 8.0), (25.0, -155.0, 100.0, 80.0), (5.0, 11.0, 7.0),
                                 rng, parameter_table, k_db=9.0)
        assert angles.phi_aod[0] == pytest.approx(25.0), "AOD of cluster 0 must equal the LOS AOD"
        assert angles.phi_aoa[0] == pytest.approx(-155.0), "AOA of cluster 0 must equal the LOS AOA"
        assert angles.theta_zoa[0] == pytest.approx(80.0), "ZOA of cluster 0 must equal the LOS ZOA"

    def test_circular_spread_tracks_target(self, parameter_table, rng):
        """Test the median power-weighted circular azimuth spread over regenerations."""
        target = 20.0
        spreads = []
        for _ in range(500):
            delays = generate_cluster_delays(1e-7, 2.3, 20, rng)
            powers = generate_cluster_powers(delays, 1e-7, 2.3, 3.0, None, rng)
            angles = generate_angles(powers, (10.0, target, 8.0), NOWHERE, (2.0, 5.0, 7.0), rng, parameter_table)
            ray_powers = np.repeat(powers[:, None] / 20.0, 20, axis=1)
            spreads.append(circular_angle_spread(angles.ray_aoa, ray_powers))
        median = np.median(spreads)
        assert median == pytest.approx(target, rel=0.15), f"Median spread {median:.2f} not within 15% of {target}"

    def test_strongest_cluster_closest_to_baseline(self, parameter_table, rng):
        """Test that the strongest cluster deviates least from the baseline on average."""
        strongest, others = [], []
        for _ in range(2000):
            delays = generate_cluster_delays(1e-7, 2.3, 20, rng)
            powers = generate_cluster_powers(delays, 1e-7, 2.3, 3.0, None, rng)
            angles = generate_angles(powers, (10.0, 30.0, 8.0), NOWHERE, (2.0, 15.0, 7.0), rng, parameter_table)
            deviation = np.abs(wrap_azimuth_deg(angles.phi_aoa - NOWHERE[1]))
            top = int(np.argmax(powers))
            strongest.append(deviation[top])
            others.append(np.delete(deviation, top).mean())
        assert np.mean(strongest) < np.mean(others), "Strongest cluster must sit closest to the baseline"

    def test_non_positive_spread(self, parameter_table, rng):
        """Test that zero spreads are rejected."""
        with pytest.raises(ModelValidityError):
            generate_angles(np.array([1.0]), (0.0, 10.0, 10.0), NOWHERE, (1.0, 1.0, 1.0), rng, parameter_table)

    def test_xpr_and_phases(self, rng):
        """Test XPR positivity and the phase range."""
        xpr, phases = generate_xpr_phases(12, 20, 8.0, 3.0, rng)
        assert xpr.shape == (12, 20) and phases.shape == (12, 20, 2, 2), "Unexpected shapes"
        assert np.all(xpr > 0), "XPR must be positive"
        assert np.all((phases >= -np.pi) & (phases <= np.pi)), "Phases must lie in [-pi, pi]"


@pytest.mark.gscm
class TestDopplerAndAdpd:
    """Test cases for Doppler shifts and ADPD sampling."""

    def test_towards_arrival(self):
        """Test the maximum Doppler when moving along the arrival direction."""
        direction = spherical_unit_vector(np.pi / 2, 0.3)
        nu = doppler_frequency(direction, 3.0 * direction, 0.1)
        assert nu == pytest.approx(30.0), f"Expected v/lambda = 30 Hz, got {nu}"

    def test_perpendicular(self):
        """Test zero Doppler for perpendicular motion."""
        assert doppler_frequency(np.array([1.0, 0.0, 0.0]), np.array([0.0, 2.0, 0.0]), 0.1) == 0.0, \
            "Perpendicular motion gives no Doppler"

    def test_walking_speed_reference(self):
        """Test 0.83 m/s at 3.5 GHz."""
        carrier = CarrierSpec.from_ghz(3.5)
        nu = doppler_frequency(np.array([1.0, 0.0, 0.0]), np.array([0.83, 0.0, 0.0]), carrier.wavelength)
        assert nu == pytest.approx(9.69, abs=0.01), f"Expected 9.69 Hz, got {nu}"

    def test_bound_over_drop(self, parameter_table, moving_geometry, carrier_28):
        """Test |nu| <= v/lambda for every ray of a drop."""
        config = LinkConfig(ScenarioKind.UMA, carrier_28, moving_geometry, LinkState.NLOS)
        tensor = assemble_link(config, seed=3, table=parameter_table)
        rays = spherical_unit_vector(np.deg2rad(tensor.clusters.angles.ray_zoa),
                                     np.deg2rad(tensor.clusters.angles.ray_aoa))
        nu = doppler_frequency(rays, moving_geometry.ms_velocity.vector(), carrier_28.wavelength)
        assert np.all(np.abs(nu) <= 0.83 / carrier_28.wavelength + 1e-9), "Doppler exceeds v/lambda"

    def test_adpd_statistics(self, rng):
        """Test the exponential mean, Laplacian median and symmetry."""
        tau, phi = adpd_sample(5e-8, 12.0, rng, size=200_000)
        assert tau.mean() == pytest.approx(5e-8, rel=0.02), f"Mean delay {tau.mean()} off"
        assert np.median(np.abs(phi)) == pytest.approx(12.0 * np.log(2), rel=0.03), "Median |phi| off"
        assert abs(phi.mean()) < 0.02 * 12.0, "Azimuth distribution must be symmetric"

    def test_adpd_invalid(self, rng):
        """Test that non-positive scales are rejected."""
        with pytest.raises(ModelValidityError):
            adpd_sample(0.0, 10.0, rng)


@pytest.mark.gscm
class TestChannelCoefficients:
    """Test cases for per element-pair channel coefficients."""

    def test_all_factors_unity(self):
        """Test h = sqrt(P_n) for one ray with unit factors."""
        clusters = static_clusters([0.7, 0.3], np.zeros((2, 1, 2, 2)))
        h = channel_coefficient(clusters, 1, isotropic(), isotropic(), CarrierSpec.from_ghz(28.0),
                                np.zeros(3), np.array([0.0]))
        assert h.shape == (1, 1, 1), f"Expected (1, 1, 1), got {h.shape}"
        assert h[0, 0, 0] == pytest.approx(np.sqrt(0.3)), f"Expected sqrt(0.3), got {h[0, 0, 0]}"

    def test_constant_without_motion(self, rng):
        """Test a time-invariant channel at zero velocity."""
        phases = rng.uniform(-np.pi, np.pi, (3, 20, 2, 2))
        clusters = static_clusters([0.5, 0.3, 0.2], phases, xpr=10.0)
        h = channel_coefficients(clusters, isotropic(), isotropic(), CarrierSpec.from_ghz(3.5),
                                 np.zeros(3), np.linspace(0.0, 0.01, 5))
        assert np.allclose(h, h[..., :1]), "Coefficients must not change over time"

    def test_power_conservation(self):
        """Test E|h|^2 = P_n over 1e5 independent phase draws."""
        rng = np.random.default_rng(77)
        total, count = 0.0, 0
        for _ in range(5):
            clusters = static_clusters(np.full(20_000, 0.4), rng.uniform(-np.pi, np.pi, (20_000, 20, 2, 2)))
            h = channel_coefficients(clusters, isotropic(), isotropic(), CarrierSpec.from_ghz(28.0),
                                     np.zeros(3), np.array([0.0]))
            total += np.sum(np.abs(h) ** 2)
            count += h.shape[2]
        assert total / count == pytest.approx(0.4, rel=0.02), f"Mean power {total / count} not 0.4"

    def test_cross_polar_ratio(self):
        """Test that cross-polar over co-polar power equals 1/XPR for ideal antennas."""
        rng = np.random.default_rng(78)
        co, cross = 0.0, 0.0
        for _ in range(5):
            clusters = static_clusters(np.full(20_000, 1.0), rng.uniform(-np.pi, np.pi, (20_000, 20, 2, 2)), xpr=8.0)
            args = (CarrierSpec.from_ghz(28.0), np.zeros(3), np.array([0.0]))
            co += np.sum(np.abs(channel_coefficients(clusters, isotropic(), isotropic(), *args)) ** 2)
            cross += np.sum(np.abs(channel_coefficients(clusters, isotropic(), isotropic(90.0), *args)) ** 2)
        assert cross / co == pytest.approx(1 / 8.0, rel=0.02), f"Expected 1/8, got {cross / co}"

    def test_phase_negation_conjugates(self, rng):
        """Test that negating all phases conjugates h for co-located real patterns at t = 0."""
        phases = rng.uniform(-np.pi, np.pi, (4, 20, 2, 2))
        dual = AntennaArraySpec(polarizations=2)
        args = (dual, dual, CarrierSpec.from_ghz(28.0), np.zeros(3), np.array([0.0]))
        h = channel_coefficients(static_clusters(np.full(4, 0.25), phases, xpr=5.0), *args)
        h_neg = channel_coefficients(static_clusters(np.full(4, 0.25), -phases, xpr=5.0), *args)
        assert np.allclose(h_neg, np.conj(h)), "Negated phases must conjugate the channel"

    def test_cluster_index_range(self):
        """Test that a cluster index outside the set is rejected."""
        clusters = static_clusters([1.0], np.zeros((1, 1, 2, 2)))
        with pytest.raises(ModelValidityError):
            channel_coefficient(clusters, 2, isotropic(), isotropic(), CarrierSpec.from_ghz(28.0),
                                np.zeros(3), np.array([0.0]))

    def test_non_finite_rejected(self):
        """Test that a tensor with NaN entries is rejected."""
        clusters = static_clusters([1.0], np.zeros((1, 1, 2, 2)))
        with pytest.raises(ModelValidityError):
            ChannelCoefficientTensor(np.full((1, 1, 1, 1), np.nan + 0j), np.zeros(1), np.zeros(1),
                                     np.zeros(1), clusters, {})


@pytest.mark.gscm
class TestAssembleLink:
    """Test cases for full drop generation."""

    def test_deterministic(self, parameter_table, uma_geometry, carrier_28):
        """Test bit-identical tensors for identical inputs."""
        config = LinkConfig(ScenarioKind.UMA, carrier_28, uma_geometry,
                            tx_array=AntennaArraySpec(rows=2, columns=2, polarizations=2),
                            times=(0.0, 1e-3))
        first = assemble_link(config, seed=42, drop_index=3, table=parameter_table)
        second = assemble_link(config, seed=42, drop_index=3, table=parameter_table)
        assert np.array_equal(first.coefficients, second.coefficients), "Same inputs must give the same tensor"
        other = assemble_link(config, seed=42, drop_index=4, table=parameter_table)
        assert not np.array_equal(first.coefficients, other.coefficients), "Drops must be independent"

    def test_tensor_shape_and_metadata(self, parameter_table, uma_geometry, carrier_28):
        """Test tensor dimensions and run metadata."""
        config = LinkConfig(ScenarioKind.UMA, carrier_28, uma_geometry, LinkState.NLOS,
                            tx_array=AntennaArraySpec(rows=2, columns=4, polarizations=2),
                            rx_array=AntennaArraySpec(rows=1, columns=2),
                            times=(0.0, 1e-3, 2e-3))
        tensor = assemble_link(config, seed=1, table=parameter_table)
        assert tensor.shape == (2, 16, 20, 3), f"Expected (2, 16, 20, 3), got {tensor.shape}"
        assert tensor.metadata["state"] == "NLOS" and tensor.metadata["seed"] == 1, "Metadata incomplete"
        assert tensor.metadata["f_c_hz"] == 28e9, "Carrier missing from metadata"
        assert tensor.metadata["pathloss_db"] > 0, "UMa links need a pathloss"

    def test_los_link_first_cluster_dominant(self, parameter_table, uma_geometry, carrier_28):
        """Test that a LOS drop carries the K-factor in cluster 0."""
        config = LinkConfig(ScenarioKind.UMA, carrier_28, uma_geometry, LinkState.LOS)
        clusters = assemble_link(config, seed=5, table=parameter_table).clusters
        k = 10 ** (clusters.k_db / 10)
        assert clusters.powers[0] >= k / (k + 1), "Cluster 0 must carry the direct ray"

    @pytest.mark.slow
    def test_wideband_power_normalized(self, parameter_table, uma_geometry, carrier_28):
        """Test E[sum_n |h_n|^2] = 1 over 1e4 drops with isotropic antennas."""
        config = LinkConfig(ScenarioKind.UMA, carrier_28, uma_geometry, LinkState.NLOS)
        powers = [assemble_link(config, seed=11, drop_index=k, table=parameter_table).wideband_power()[0, 0, 0]
                  for k in range(10_000)]
        assert np.mean(powers) == pytest.approx(1.0, rel=0.02), f"Mean wideband power {np.mean(powers)} not 1"

    def test_oxygen_reduces_every_cluster(self, parameter_table, uma_geometry):
        """Test that absorption at 60 GHz lowers every cluster's power."""
        base = LinkConfig(ScenarioKind.UMA, CarrierSpec.from_ghz(60.0), uma_geometry, LinkState.NLOS)
        plain = assemble_link(base, seed=8, table=parameter_table)
        absorbed = assemble_link(replace(base, oxygen=True), seed=8, table=parameter_table)
        assert np.all(absorbed.cluster_loss_db > 0), "Every cluster must see absorption"
        assert np.all(np.abs(absorbed.coefficients) < np.abs(plain.coefficients)), "Every cluster must lose power"

    def test_blockage_attenuates_covered_clusters(self, parameter_table, uma_geometry, carrier_28):
        """Test that a full-sphere blocker attenuates every cluster by its loss."""
        config = LinkConfig(ScenarioKind.UMA, carrier_28, uma_geometry, LinkState.NLOS,
                            blockers=(BlockerRegion(0.0, 360.0, 90.0, 180.0, 20.0),))
        tensor = assemble_link(config, seed=9, table=parameter_table)
        assert np.all(tensor.cluster_loss_db == 20.0), "All clusters must be blocked"

    def test_o2i_penetration_added_to_shadowing(self, parameter_table, uma_geometry, carrier_28):
        """Test that the O2I preset adds penetration loss on top of the shadow draw."""
        base = LinkConfig(ScenarioKind.UMA, carrier_28, uma_geometry, LinkState.O2I)
        outdoor = assemble_link(base, seed=12, table=parameter_table).metadata
        indoor = assemble_link(replace(base, o2i_preset="low-loss"), seed=12, table=parameter_table).metadata
        assert indoor["lsp"] == outdoor["lsp"], "Penetration must not disturb the LSP draw"
        assert indoor["shadow_db"] > outdoor["shadow_db"], "Penetration must add loss"

    def test_free_link_state_is_drawn(self, parameter_table, carrier_28):
        """Test that a very short link is LOS when the state is left open."""
        geometry = LinkGeometry.from_positions(Position3D(0.0, 0.0, 25.0), Position3D(10.0, 0.0, 1.5),
                                               MsVelocity())
        tensor = assemble_link(LinkConfig(ScenarioKind.UMA, carrier_28, geometry), seed=2, table=parameter_table)
        assert tensor.metadata["state"] == "LOS", "P_LOS = 1 below 18 m"

    def test_open_state_needs_los_model(self, uma_geometry, rng):
        """Test that InH and RMa links without a forced state are rejected."""
        carrier = CarrierSpec.from_ghz(6.0)
        for scenario in (ScenarioKind.INH, ScenarioKind.RMA):
            with pytest.raises(ModelValidityError):
                resolve_link_state(LinkConfig(scenario, carrier, uma_geometry), rng)
            forced = LinkConfig(scenario, carrier, uma_geometry, LinkState.NLOS)
            assert resolve_link_state(forced, rng) is LinkState.NLOS, "A forced state must be kept"
