"""
Test suite for tapped-delay-line fading and Doppler spectra.
"""
import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import j0
from scipy.stats import kstest, rayleigh

from chansim.errors import ModelValidityError
from chansim.tdl import (
    DopplerShape,
    SpectrumKind,
    TapProfile,
    doppler_spectrum_eval,
    fading_process,
    tdl_impulse_response,
)


def autocorrelation(samples: np.ndarray, max_lag: int) -> np.ndarray:
    """Unbiased estimate of E[g(t + k) g*(t)] for k = 0..max_lag."""
    n = samples.size
    return np.array([np.mean(samples[k:] * np.conj(samples[:n - k])) for k in range(max_lag + 1)])


@pytest.mark.tdl
class TestDopplerSpectra:
    """Test cases for Doppler spectral densities."""

    def test_bathtub_minimum_at_zero(self):
        """Test that the bathtub is smallest at nu = 0."""
        shape = DopplerShape.bathtub(50.0)
        inner = doppler_spectrum_eval(shape, np.linspace(-49.0, 49.0, 99))
        assert doppler_spectrum_eval(shape, 0.0) == pytest.approx(inner.min()), "Minimum must sit at zero"
        assert doppler_spectrum_eval(shape, 0.0) == pytest.approx(1 / (np.pi * 50.0)), "Expected 1/(pi f_D)"

    @pytest.mark.parametrize("shape", [
        DopplerShape.bathtub(20.0),
        DopplerShape.flat(20.0),
        DopplerShape.gaussian(20.0, -16.0, 1.0),
    ])
    def test_unit_integral(self, shape):
        """Test that every spectrum integrates to one."""
        if shape.kind is SpectrumKind.GAUSSIAN:
            low, high = shape.center - 12 * shape.std, shape.center + 12 * shape.std
        else:
            low, high = -shape.f_d, shape.f_d
        area, _ = quad(lambda nu: float(shape.density(nu)), low, high, limit=200)
        assert area == pytest.approx(1.0, abs=1e-6), f"{shape.kind.value} integrates to {area}"

    def test_flat_level(self):
        """Test the constant 1/(2 f_D) level of the flat spectrum."""
        values = doppler_spectrum_eval(DopplerShape.flat(25.0), np.array([-24.0, 0.0, 10.0]))
        assert values == pytest.approx(np.full(3, 1 / 50.0)), "Flat spectrum must be 1/(2 f_D)"

    def test_outside_support(self):
        """Test zero density at and beyond f_D."""
        values = doppler_spectrum_eval(DopplerShape.bathtub(10.0), np.array([-10.0, 10.0, 30.0]))
        assert np.all(values == 0.0), "Bathtub must vanish outside its support"

    def test_invalid_shapes(self):
        """Test that f_D <= 0 and a zero Gaussian width are rejected."""
        with pytest.raises(ModelValidityError):
            DopplerShape.bathtub(0.0)
        with pytest.raises(ModelValidityError):
            DopplerShape.gaussian(10.0, 0.0, 0.0)


@pytest.mark.tdl
class TestFadingProcess:
    """Test cases for the shaped complex Gaussian process."""

    def test_bathtub_autocorrelation_is_bessel(self):
        """Test the averaged autocorrelation against J0(2 pi f_D dt)."""
        f_d, fs = 10.0, 200.0
        max_lag = int(0.3 * fs)
        streams = np.random.default_rng(31).spawn(200)
        average = np.mean([autocorrelation(fading_process(DopplerShape.bathtub(f_d), 10.0, fs, s), max_lag)
                           for s in streams], axis=0)
        expected = j0(2 * np.pi * f_d * np.arange(max_lag + 1) / fs)
        deviation = np.max(np.abs(average.real - expected))
        assert deviation < 0.05, f"Autocorrelation deviates from J0 by {deviation:.3f}"

    def test_unit_mean_power(self, rng):
        """Test unit average power over 1e6 samples."""
        samples = fading_process(DopplerShape.bathtub(100.0), 1000.0, 1000.0, rng)
        assert samples.size == 1_000_000, f"Expected 1e6 samples, got {samples.size}"
        assert np.mean(np.abs(samples) ** 2) == pytest.approx(1.0, rel=0.01), "Mean power must be 1"
        assert abs(samples.mean()) < 0.02, "Process must be zero-mean"

    def test_rayleigh_envelope(self):
        """Test a Rayleigh goodness of fit on a sparsely sampled envelope."""
        streams = np.random.default_rng(32).spawn(20)
        envelope = np.concatenate([np.abs(fading_process(DopplerShape.bathtub(100.0), 50.0, 500.0, s))[::25]
                                   for s in streams])
        result = kstest(envelope, rayleigh(scale=1 / np.sqrt(2)).cdf)
        assert result.pvalue > 1e-3, f"Envelope is not Rayleigh (p={result.pvalue:.2g})"

    def test_quasi_static(self, rng):
        """Test that a tiny Doppler gives an almost constant process."""
        samples = fading_process(DopplerShape.bathtub(1e-4), 10.0, 10.0, rng)
        variation = np.max(np.abs(samples - samples[0])) / np.mean(np.abs(samples))
        assert variation < 0.1, f"Process varied by {variation:.3f}"

    def test_stationary_halves(self, rng):
        """Test that both halves of a long realization share their autocorrelation."""
        samples = fading_process(DopplerShape.bathtub(50.0), 1000.0, 500.0, rng)
        half = samples.size // 2
        first = autocorrelation(samples[:half], 10)
        second = autocorrelation(samples[half:], 10)
        assert np.max(np.abs(first - second)) < 0.05, "Autocorrelation must not drift between halves"

    def test_undersampled(self, rng):
        """Test that sample rates at or below 4 f_D are rejected."""
        with pytest.raises(ModelValidityError):
            fading_process(DopplerShape.bathtub(100.0), 1.0, 400.0, rng)


@pytest.mark.tdl
class TestTapProfiles:
    """Test cases for tap profiles and impulse responses."""

    def test_profile_normalized(self):
        """Test that loaded tap powers sum to one."""
        profile = TapProfile.load("TU", 50.0)
        assert profile.num_taps == 6, f"TU has 6 taps, got {profile.num_taps}"
        assert profile.powers.sum() == pytest.approx(1.0), "Tap powers must sum to one"

    def test_gaussian_spectra_scaled_by_doppler(self):
        """Test that far-cluster spectra are placed in units of f_D."""
        spectrum = TapProfile.load("TU", 50.0).spectra[3]
        assert spectrum.kind is SpectrumKind.GAUSSIAN, "TU tap 4 must be Gaussian"
        assert (spectrum.center, spectrum.std) == pytest.approx((-40.0, 2.5)), "Expected center -40 Hz, std 2.5 Hz"

    def test_rms_delay_spread_closed_form(self):
        """Test the profile delay spread against the weighted moment formula."""
        profile = TapProfile.load("ITU-vehicular", 10.0)
        p = 10 ** (np.array([0.0, -1.0, -9.0, -10.0, -15.0, -20.0]) / 10)
        p = p / p.sum()
        tau = np.array([0.0, 0.31, 0.71, 1.09, 1.73, 2.51]) * 1e-6
        expected = np.sqrt(np.sum(p * tau ** 2) - np.sum(p * tau) ** 2)
        assert profile.rms_delay_spread() == pytest.approx(expected, rel=1e-9), "Delay spread mismatch"
        assert profile.mean_delay() == pytest.approx(np.sum(p * tau), rel=1e-9), "Mean delay mismatch"

    def test_unknown_profile(self):
        """Test that unknown environments are rejected."""
        with pytest.raises(ModelValidityError):
            TapProfile.load("Suburban", 10.0)

    def test_invalid_profile(self):
        """Test that descending delays are rejected."""
        with pytest.raises(ModelValidityError):
            TapProfile("bad", np.array([1e-6, 0.0]), np.array([1.0, 1.0]),
                       (DopplerShape.bathtub(10.0), DopplerShape.bathtub(10.0)))

    def test_single_tap_unit_power(self, rng):
        """Test the mean power of a single unit tap."""
        profile = TapProfile("single", np.array([0.0]), np.array([1.0]), (DopplerShape.bathtub(50.0),))
        realization = tdl_impulse_response(profile, np.arange(1_000_000) / 500.0, rng)
        assert np.mean(np.abs(realization.gains) ** 2) == pytest.approx(1.0, rel=0.02), "Tap power must be 1"

    def test_taps_uncorrelated(self, rng):
        """Test that distinct taps are uncorrelated over 1e6 samples."""
        profile = TapProfile("pair", np.array([0.0, 1e-6]), np.array([1.0, 1.0]),
                             (DopplerShape.bathtub(100.0), DopplerShape.bathtub(100.0)))
        gains = tdl_impulse_response(profile, np.arange(1_000_000) / 1000.0, rng).gains
        cross = np.abs(np.mean(gains[:, 0] * np.conj(gains[:, 1])))
        power = np.sqrt(np.mean(np.abs(gains[:, 0]) ** 2) * np.mean(np.abs(gains[:, 1]) ** 2))
        assert cross / power < 0.02, f"Tap cross-correlation {cross / power:.4f} too large"

    def test_reproducible(self):
        """Test identical realizations for identical seeds."""
        profile = TapProfile.load("RA", 20.0)
        times = np.arange(500) / 200.0
        first = tdl_impulse_response(profile, times, np.random.default_rng(3)).gains
        second = tdl_impulse_response(profile, times, np.random.default_rng(3)).gains
        assert np.array_equal(first, second), "Same seed must give the same taps"

    def test_frame_export(self, rng):
        """Test the long-format export columns."""
        realization = tdl_impulse_response(TapProfile.load("RA", 20.0), np.arange(10) / 200.0, rng)
        frame = realization.to_frame()
        assert list(frame.columns) == ["t_s", "tap_index", "re", "im"], "Unexpected columns"
        assert len(frame) == 40, f"Expected 10 x 4 rows, got {len(frame)}"

    def test_time_grid_checks(self, rng):
        """Test that non-uniform and single-sample grids without a rate are rejected."""
        profile = TapProfile.load("RA", 20.0)
        with pytest.raises(ModelValidityError):
            tdl_impulse_response(profile, np.array([0.0, 0.01, 0.03]), rng)
        with pytest.raises(ModelValidityError):
            tdl_impulse_response(profile, np.array([0.0]), rng)
        single = tdl_impulse_response(profile, np.array([0.0]), rng, sample_rate=200.0)
        assert single.gains.shape == (1, 4), "A single sample with an explicit rate is allowed"
