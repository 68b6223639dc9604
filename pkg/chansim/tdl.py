"""
Tapped-delay-line fading with prescribed Doppler spectra.

Tap processes are synthesized by shaping complex white noise in the
frequency domain: each FFT bin gets exactly the spectral power the Doppler
shape puts into it, so the spectrum holds by construction.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import norm

from chansim.errors import ModelValidityError
from chansim.gscm import rms_delay_spread
from utils.helpers import db2lin, load_data

logger = logging.getLogger(__name__)

PROFILES_FILE = "tdl_profiles.json"
MAX_FFT_SIZE = 2 ** 20


class SpectrumKind(Enum):
    BATHTUB = "bathtub"
    FLAT = "flat"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class DopplerShape:
    """
    Doppler power spectral density with unit integral.

    Args:
        kind: Spectrum family
        f_d: Maximum Doppler frequency in Hz
        center: Gaussian center in Hz
        std: Gaussian standard deviation in Hz
    """

    kind: SpectrumKind
    f_d: float
    center: float = 0.0
    std: float = 0.0

    def __post_init__(self):
        if self.f_d <= 0:
            raise ModelValidityError(f"f_D must be positive, got {self.f_d:g} Hz")
        if self.kind is SpectrumKind.GAUSSIAN and self.std <= 0:
            raise ModelValidityError(f"gaussian Doppler std must be positive, got {self.std:g} Hz")

    @classmethod
    def bathtub(cls, f_d: float) -> "DopplerShape":
        return cls(SpectrumKind.BATHTUB, f_d)

    @classmethod
    def flat(cls, f_d: float) -> "DopplerShape":
        return cls(SpectrumKind.FLAT, f_d)

    @classmethod
    def gaussian(cls, f_d: float, center: float, std: float) -> "DopplerShape":
        return cls(SpectrumKind.GAUSSIAN, f_d, center, std)

    @property
    def max_frequency(self) -> float:
        if self.kind is SpectrumKind.GAUSSIAN:
            return max(self.f_d, abs(self.center) + 4.0 * self.std)
        return self.f_d

    def density(self, nu):
        """Spectral density at nu (Hz); zero outside the bathtub and flat supports."""
        nu = np.asarray(nu, dtype=float)
        if self.kind is SpectrumKind.GAUSSIAN:
            return norm.pdf(nu, loc=self.center, scale=self.std)
        inside = np.abs(nu) < self.f_d
        if self.kind is SpectrumKind.FLAT:
            return np.where(inside, 1.0 / (2.0 * self.f_d), 0.0)
        ratio = np.where(inside, nu / self.f_d, 0.0)
        return np.where(inside, 1.0 / (np.pi * self.f_d * np.sqrt(1.0 - ratio ** 2)), 0.0)

    def cdf(self, nu):
        """Integrated spectrum from -inf to nu."""
        nu = np.asarray(nu, dtype=float)
        if self.kind is SpectrumKind.GAUSSIAN:
            return norm.cdf(nu, loc=self.center, scale=self.std)
        ratio = np.clip(nu / self.f_d, -1.0, 1.0)
        if self.kind is SpectrumKind.FLAT:
            return 0.5 * (ratio + 1.0)
        return 0.5 + np.arcsin(ratio) / np.pi


def doppler_spectrum_eval(shape: DopplerShape, nu):
    """Spectral density of the shape at nu."""
    return shape.density(nu)


def fading_process(shape: DopplerShape, duration: float, sample_rate: float,
                   rng: np.random.Generator) -> np.ndarray:
    """
    Zero-mean, unit-power complex Gaussian process with the given spectrum.

    Args:
        shape: Doppler spectrum
        duration: Length in seconds
        sample_rate: Samples per second, above four times the maximum Doppler
        rng: Random stream

    Returns:
        Complex samples g(k / sample_rate)
    """
    if sample_rate <= 4.0 * shape.max_frequency:
        raise ModelValidityError(
            f"sample rate {sample_rate:g} Hz must exceed 4 x {shape.max_frequency:g} Hz"
        )
    n = int(round(duration * sample_rate))
    if n < 1:
        raise ModelValidityError(f"duration {duration:g} s gives no samples at {sample_rate:g} Hz")

    resolution = int(np.ceil(64.0 * sample_rate / shape.f_d))
    n_fft = max(_next_pow2(n), min(_next_pow2(resolution), MAX_FFT_SIZE))
    freqs = np.fft.fftfreq(n_fft, d=1.0 / sample_rate)
    half_bin = sample_rate / n_fft / 2.0
    bin_power = shape.cdf(freqs + half_bin) - shape.cdf(freqs - half_bin)
    bin_power = bin_power / bin_power.sum()

    white = (rng.standard_normal(n_fft) + 1j * rng.standard_normal(n_fft)) / np.sqrt(2.0)
    process = n_fft * np.fft.ifft(white * np.sqrt(bin_power))
    return process[:n]


def _next_pow2(value: int) -> int:
    return 1 << max(int(value) - 1, 0).bit_length()


@dataclass(frozen=True)
class TapProfile:
    """
    Tap delays (s), linear powers normalized to unit sum, and per-tap spectra.
    """

    environment: str
    delays: np.ndarray
    powers: np.ndarray
    spectra: tuple

    def __post_init__(self):
        delays = np.asarray(self.delays, dtype=float)
        powers = np.asarray(self.powers, dtype=float)
        if delays.shape != powers.shape or delays.size != len(self.spectra) or delays.size == 0:
            raise ModelValidityError(f"{self.environment}: delays, powers and spectra must have equal length")
        if np.any(delays < 0) or np.any(np.diff(delays) < 0):
            raise ModelValidityError(f"{self.environment}: tap delays must be non-negative and ascending")
        if np.any(powers <= 0):
            raise ModelValidityError(f"{self.environment}: tap powers must be positive")
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "powers", powers / powers.sum())

    @classmethod
    def load(cls, name: str, f_d: float, file_name: str = PROFILES_FILE) -> "TapProfile":
        """
        Build a profile from the tap tables.

        Args:
            name: TU, BU, RA, HT, ITU-indoor or ITU-vehicular
            f_d: Maximum Doppler frequency in Hz
            file_name: Data file with the tap tables

        Returns:
            TapProfile
        """
        profiles = load_data(file_name)["profiles"]
        if name not in profiles:
            raise ModelValidityError(f"unknown tap profile '{name}', expected one of {sorted(profiles)}")
        table = profiles[name]
        spectra = []
        for entry in table["spectra"]:
            kind = SpectrumKind(entry["kind"])
            if kind is SpectrumKind.GAUSSIAN:
                spectra.append(DopplerShape.gaussian(f_d, entry["center"] * f_d, entry["std"] * f_d))
            else:
                spectra.append(DopplerShape(kind, f_d))
        return cls(name, np.array(table["delays_us"]) * 1e-6, db2lin(table["powers_db"]), tuple(spectra))

    @property
    def num_taps(self) -> int:
        return int(self.delays.size)

    def mean_delay(self) -> float:
        return float(np.sum(self.powers * self.delays))

    def rms_delay_spread(self) -> float:
        return rms_delay_spread(self.delays, self.powers)


@dataclass
class TapRealization:
    """Tap gains on a time grid, shape (times, taps)."""

    times: np.ndarray
    delays: np.ndarray
    gains: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        n_t, n_taps = self.gains.shape
        return pd.DataFrame({
            "t_s": np.repeat(self.times, n_taps),
            "tap_index": np.tile(np.arange(n_taps), n_t),
            "re": self.gains.real.ravel(),
            "im": self.gains.imag.ravel(),
        })


def tdl_impulse_response(profile: TapProfile, times: Sequence[float], rng: np.random.Generator,
                         sample_rate: Optional[float] = None) -> TapRealization:
    """
    h(t, tau) = sum_n sqrt(P_n) g_n(t) delta(tau - tau_n) with independent taps.

    Args:
        profile: Tap profile
        times: Uniform time grid in seconds
        rng: Random stream; each tap runs on its own spawned child
        sample_rate: Overrides the rate implied by the time grid (single-sample grids)

    Returns:
        TapRealization
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if sample_rate is None:
        if times.size < 2:
            raise ModelValidityError("a single-sample time grid needs an explicit sample rate")
        steps = np.diff(times)
        if steps[0] <= 0 or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ModelValidityError("tap time grid must be uniform and increasing")
        sample_rate = 1.0 / steps[0]
    duration = times.size / sample_rate
    gains = np.empty((times.size, profile.num_taps), dtype=complex)
    for i, (child, spectrum) in enumerate(zip(rng.spawn(profile.num_taps), profile.spectra)):
        gains[:, i] = np.sqrt(profile.powers[i]) * fading_process(spectrum, duration, sample_rate, child)[:times.size]
    logger.debug("%s: %d taps x %d samples", profile.environment, profile.num_taps, times.size)
    return TapRealization(times, profile.delays.copy(), gains)
