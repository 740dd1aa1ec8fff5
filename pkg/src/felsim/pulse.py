"""Stochastic pulses: colored noise under a deterministic envelope, and their statistics.

A pulse amplitude is ``E(t) = zeta(t) * sqrt(I0 * f(t))`` with ``f`` a smooth
envelope of unit peak.  The ensemble then reproduces the chaotic-light
fingerprints: negative-exponential intensity distribution, factorial moments
``<I^r> = r! <I>^r``, Gamma-distributed pulse energies, and an energy spectral
density whose width combines the Fourier-limited and noise bandwidths.

A phase-diffusion pulse (constant modulus, Wiener phase) is provided as the
standard contrast model: same spectral width, no intensity fluctuations.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _stats

from .errors import ConfigurationError, InsufficientDataError
from .noise import NoiseTrace

__all__ = [
    "EnvelopeKind",
    "EnvelopeSpec",
    "StochasticPulse",
    "PulseStats",
    "EsdResult",
    "envelope_eval",
    "envelope_fwhm",
    "make_pulse",
    "make_pdm_pulse",
    "pdm_modulation_trace",
    "mean_intensity_profile",
    "intensity_moment_ratios",
    "intensity_pdf_check",
    "pulse_energy_stats",
    "energy_gamma_check",
    "energy_spectral_density",
    "bandwidth_formula",
    "fourier_limited_bandwidth",
    "chi_parameter",
    "pulse_statistics",
]

# Sentinel cap for the mode parameter M when the energy variance vanishes
# (e.g. a deterministic ensemble).
M_CAP = 1e12

# Default multi-hump profile: (weight, center offset from t0, width) triples,
# rescaled to unit peak at evaluation time.
PROFILE2_COMPONENTS = ((1.0, -2.0, 1.5), (0.7, 0.0, 2.0), (0.5, 2.5, 1.2))


class EnvelopeKind(enum.Enum):
    GAUSSIAN = "gaussian"
    PROFILE2 = "profile2"
    FLAT = "flat"


@dataclass(frozen=True)
class EnvelopeSpec:
    """Deterministic intensity envelope of unit peak value.

    gaussian  : exp(-(t-t0)^2 / tau^2), duration parameter tau
    profile2  : fixed asymmetric superposition of Gaussians around t0
    flat      : 1 on [t0, t0+tau] with half-cosine ramps over the outer 5%
                of the interval on each side, 0 outside
    """

    kind: EnvelopeKind
    tau: float
    t0: float
    components: tuple = PROFILE2_COMPONENTS

    def __post_init__(self):
        if not isinstance(self.kind, EnvelopeKind):
            object.__setattr__(self, "kind", EnvelopeKind(self.kind))
        if not (self.tau > 0.0):
            raise ConfigurationError(f"tau must be positive, got {self.tau}")
        if self.kind is EnvelopeKind.PROFILE2 and not self.components:
            raise ConfigurationError("profile2 requires at least one component")

    def _profile2_scale(self) -> float:
        def raw(t):
            out = np.zeros_like(t)
            for w, off, width in self.components:
                out += w * np.exp(-(((t - self.t0 - off) / width) ** 2))
            return out

        offs = np.array([c[1] for c in self.components])
        widths = np.array([c[2] for c in self.components])
        lo, hi = offs.min() - 4 * widths.max(), offs.max() + 4 * widths.max()
        t = self.t0 + np.linspace(lo, hi, 4001)
        y = raw(t)
        # refine the maximum to sub-grid accuracy so the rescaled peak is 1
        for _ in range(3):
            i = int(np.argmax(y))
            a = t[max(i - 1, 0)]
            b = t[min(i + 1, t.size - 1)]
            t = np.linspace(a, b, 101)
            y = raw(t)
        return 1.0 / y.max()


def envelope_eval(spec: EnvelopeSpec, t) -> np.ndarray | float:
    """Evaluate the envelope at time(s) ``t``."""
    tt = np.asarray(t, dtype=float)
    if spec.kind is EnvelopeKind.GAUSSIAN:
        out = np.exp(-(((tt - spec.t0) / spec.tau) ** 2))
    elif spec.kind is EnvelopeKind.PROFILE2:
        out = np.zeros_like(tt)
        for w, off, width in spec.components:
            out += w * np.exp(-(((tt - spec.t0 - off) / width) ** 2))
        out *= spec._profile2_scale()
    else:
        x = (tt - spec.t0) / spec.tau
        ramp = 0.05
        out = np.zeros_like(tt)
        rising = (x >= 0.0) & (x < ramp)
        flat = (x >= ramp) & (x <= 1.0 - ramp)
        falling = (x > 1.0 - ramp) & (x <= 1.0)
        out[rising] = 0.5 * (1.0 - np.cos(np.pi * x[rising] / ramp))
        out[flat] = 1.0
        out[falling] = 0.5 * (1.0 - np.cos(np.pi * (1.0 - x[falling]) / ramp))
    return out if out.ndim else float(out)


def envelope_fwhm(spec: EnvelopeSpec, n_samples: int = 20001) -> float:
    """Numerical FWHM of the envelope (linear interpolation at half height)."""
    if spec.kind is EnvelopeKind.GAUSSIAN:
        return 2.0 * math.sqrt(math.log(2.0)) * spec.tau
    span = 8.0 * spec.tau
    if spec.kind is EnvelopeKind.PROFILE2:
        offs = [c[1] for c in spec.components]
        widths = [c[2] for c in spec.components]
        span = (max(offs) - min(offs)) + 10.0 * max(widths)
    t = np.linspace(spec.t0 - span, spec.t0 + 2 * span, n_samples)
    y = envelope_eval(spec, t)
    return _fwhm_linear(t, np.asarray(y))


def _fwhm_linear(x: np.ndarray, y: np.ndarray) -> float:
    """Full width at half the grid maximum, with linear interpolation of both crossings."""
    ipk = int(np.argmax(y))
    half = y[ipk] / 2.0
    left = np.nan
    for i in range(ipk, 0, -1):
        if y[i - 1] < half <= y[i]:
            left = x[i - 1] + (half - y[i - 1]) / (y[i] - y[i - 1]) * (x[i] - x[i - 1])
            break
    right = np.nan
    for i in range(ipk, y.size - 1):
        if y[i + 1] < half <= y[i]:
            right = x[i] + (y[i] - half) / (y[i] - y[i + 1]) * (x[i + 1] - x[i])
            break
    return float(right - left)


@dataclass(frozen=True)
class StochasticPulse:
    """Complex field amplitude of one pulse realization on a uniform time grid."""

    amplitude: np.ndarray = field(repr=False)
    dt: float
    peak_intensity: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "amplitude", np.asarray(self.amplitude, dtype=np.complex128))
        if self.amplitude.ndim != 1 or self.amplitude.size < 2:
            raise ConfigurationError("amplitude must be a 1-D array with at least 2 points")
        if not (self.dt > 0.0):
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if not (self.peak_intensity >= 0.0):
            raise ConfigurationError(f"peak_intensity must be >= 0, got {self.peak_intensity}")

    def times(self) -> np.ndarray:
        return np.arange(self.amplitude.size) * self.dt

    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2


def _check_envelope_window(env: EnvelopeSpec, t_end: float) -> None:
    """The pulse must rise and fall inside [0, t_end]."""
    edge = max(float(envelope_eval(env, 0.0)), float(envelope_eval(env, t_end)))
    if edge > 1e-2:
        raise ConfigurationError(
            f"envelope does not fit the time window: boundary value {edge:.3g} of peak"
        )
    if edge > 1e-4:
        warnings.warn(
            f"envelope boundary value {edge:.2e} exceeds 1e-4 of peak; "
            "window may clip the pulse tails",
            stacklevel=3,
        )


def make_pulse(env: EnvelopeSpec, i0: float, noise: NoiseTrace) -> StochasticPulse:
    """Superimpose a noise realization on a deterministic envelope."""
    t = noise.times()
    _check_envelope_window(env, float(t[-1]))
    amp = noise.samples * np.sqrt(i0 * np.asarray(envelope_eval(env, t)))
    return StochasticPulse(amplitude=amp, dt=noise.dt, peak_intensity=i0)


def pdm_modulation_trace(
    gamma_pdm: float, rng: np.random.Generator, dt: float, t_final: float
) -> NoiseTrace:
    """Unit-modulus Wiener-phase modulation exp(i*phi(t)) on a uniform grid.

    The phase increments have variance ``gamma_pdm * dt`` per step, which is
    exact for any step size and yields a Lorentzian line of FWHM
    ``gamma_pdm``: <exp(i[phi(t)-phi(t')])> = exp(-gamma_pdm |t-t'| / 2).
    The initial phase is uniform, so the field averages to zero.
    """
    if not (gamma_pdm > 0.0):
        raise ConfigurationError(f"gamma_pdm must be positive, got {gamma_pdm}")
    n = int(np.ceil(t_final / dt - 1e-9)) + 1
    phi0 = rng.uniform(0.0, 2.0 * np.pi)
    steps = math.sqrt(gamma_pdm * dt) * rng.standard_normal(n - 1)
    phi = phi0 + np.concatenate(([0.0], np.cumsum(steps)))
    return NoiseTrace(samples=np.exp(1j * phi), dt=dt)


def make_pdm_pulse(
    env: EnvelopeSpec,
    i0: float,
    gamma_pdm: float,
    rng: np.random.Generator,
    dt: float,
    t_final: float,
) -> StochasticPulse:
    """Phase-diffusion pulse: constant-modulus field with Wiener-process phase."""
    trace = pdm_modulation_trace(gamma_pdm, rng, dt, t_final)
    t = trace.times()
    _check_envelope_window(env, float(t[-1]))
    amp = trace.samples * np.sqrt(i0 * np.asarray(envelope_eval(env, t)))
    return StochasticPulse(amplitude=amp, dt=trace.dt, peak_intensity=i0)


def _stack(pulses) -> tuple[np.ndarray, float]:
    if len(pulses) < 1:
        raise InsufficientDataError("need at least one pulse")
    dt = pulses[0].dt
    n = pulses[0].amplitude.size
    for p in pulses:
        if abs(p.dt - dt) > 1e-12 * dt or p.amplitude.size != n:
            raise ConfigurationError("all pulses must share one time grid")
    return np.stack([p.amplitude for p in pulses]), dt


def mean_intensity_profile(pulses) -> np.ndarray:
    """Ensemble-averaged intensity at each grid time."""
    amps, _ = _stack(pulses)
    return np.mean(np.abs(amps) ** 2, axis=0)


def intensity_moment_ratios(pulses, times, r_max: int = 5):
    """Empirical ``<I^r>/<I>^r`` for r = 1..r_max at the requested times.

    Times where the mean intensity is below 1e-3 of its peak are excluded
    (the ratio is ill-conditioned there) with a warning.  Returns
    ``(kept_times, ratios)`` with ``ratios[i, r-1]`` for kept time i.
    """
    if r_max < 1:
        raise ConfigurationError("r_max must be >= 1")
    amps, dt = _stack(pulses)
    if amps.shape[0] < 2:
        raise InsufficientDataError("need at least 2 pulses for moment ratios")
    intens = np.abs(amps) ** 2
    mean_i = np.mean(intens, axis=0)
    floor = 1e-3 * mean_i.max()
    kept, dropped, rows = [], [], []
    for t in np.atleast_1d(np.asarray(times, dtype=float)):
        k = int(round(t / dt))
        if k < 0 or k >= intens.shape[1] or mean_i[k] <= floor:
            dropped.append(t)
            continue
        x = intens[:, k]
        m1 = x.mean()
        rows.append([np.mean(x**r) / m1**r for r in range(1, r_max + 1)])
        kept.append(k * dt)
    if dropped:
        warnings.warn(f"excluded {len(dropped)} time(s) outside pulse support: {dropped}", stacklevel=2)
    return np.asarray(kept), np.asarray(rows).reshape(len(kept), r_max)


def intensity_pdf_check(pulses, t: float) -> float:
    """Max deviation of the empirical CDF of I(t)/<I(t)> from 1 - exp(-x).

    Small values (a few times 1/sqrt(N)) indicate the negative-exponential
    intensity distribution of chaotic light.
    """
    amps, dt = _stack(pulses)
    if amps.shape[0] < 2:
        raise InsufficientDataError("need at least 2 pulses")
    intens = np.abs(amps) ** 2
    mean_i = np.mean(intens, axis=0)
    k = int(round(t / dt))
    if k < 0 or k >= intens.shape[1] or mean_i[k] <= 1e-3 * mean_i.max():
        raise ConfigurationError(f"t={t} is outside the pulse support")
    x = np.sort(intens[:, k] / mean_i[k])
    n = x.size
    cdf = 1.0 - np.exp(-x)
    ecdf_hi = np.arange(1, n + 1) / n
    ecdf_lo = np.arange(0, n) / n
    return float(np.max(np.maximum(np.abs(ecdf_hi - cdf), np.abs(ecdf_lo - cdf))))


def pulse_energy_stats(pulses) -> tuple[np.ndarray, float]:
    """Per-pulse energies (trapezoidal) and the mode parameter M = <W>^2 / var(W).

    M is capped at ``M_CAP`` when the ensemble variance vanishes.
    """
    amps, dt = _stack(pulses)
    energies = np.trapezoid(np.abs(amps) ** 2, dx=dt, axis=1)
    if energies.size < 2:
        raise InsufficientDataError("need at least 2 pulses for energy statistics")
    mean_w = energies.mean()
    var_w = energies.var(ddof=1)
    if var_w <= mean_w**2 / M_CAP:
        return energies, M_CAP
    return energies, float(mean_w**2 / var_w)


def energy_gamma_check(energies: np.ndarray, m: float | None = None) -> float:
    """Max CDF deviation of W/<W> from the Gamma distribution with shape M."""
    w = np.asarray(energies, dtype=float)
    if w.size < 2:
        raise InsufficientDataError("need at least 2 energies")
    if m is None:
        mean_w, var_w = w.mean(), w.var(ddof=1)
        m = mean_w**2 / var_w
    x = np.sort(w / w.mean())
    cdf = _stats.gamma.cdf(x, a=m, scale=1.0 / m)
    n = x.size
    ecdf_hi = np.arange(1, n + 1) / n
    ecdf_lo = np.arange(0, n) / n
    return float(np.max(np.maximum(np.abs(ecdf_hi - cdf), np.abs(ecdf_lo - cdf))))


@dataclass(frozen=True)
class EsdResult:
    """Ensemble energy spectral density, normalized to unit area."""

    omega: np.ndarray = field(repr=False)
    esd: np.ndarray = field(repr=False)
    fwhm: float


def energy_spectral_density(pulses, pad_factor: int = 16, block: int = 256) -> EsdResult:
    """Ensemble-averaged spectrum <|E(omega)|^2>, normalized, with its FWHM.

    The time-limited amplitudes are zero-padded by ``pad_factor`` before the
    FFT so the FWHM can be read off by linear interpolation without
    grid-quantization bias.
    """
    amps, dt = _stack(pulses)
    n_fft = 1 << math.ceil(math.log2(amps.shape[1] * max(1, pad_factor)))
    acc = np.zeros(n_fft)
    for i in range(0, amps.shape[0], block):
        ft = np.fft.fft(amps[i : i + block], n=n_fft, axis=1)
        acc += np.sum(np.abs(ft) ** 2, axis=0)
    esd = np.fft.fftshift(acc / amps.shape[0])
    omega = np.fft.fftshift(2.0 * np.pi * np.fft.fftfreq(n_fft, d=dt))
    esd = esd / np.trapezoid(esd, omega)
    return EsdResult(omega=omega, esd=esd, fwhm=_fwhm_linear(omega, esd))


def chi_parameter(tau_s: float, sigma_omega: float) -> float:
    """Number-of-spikes parameter chi = sigma_omega * tau_s."""
    return sigma_omega * tau_s


def fourier_limited_bandwidth(tau_s: float) -> float:
    """FWHM of the spectrum of a Fourier-limited Gaussian pulse of duration tau_s."""
    if not (tau_s > 0.0):
        raise ConfigurationError(f"tau_s must be positive, got {tau_s}")
    return 2.0 * math.sqrt(math.log(2.0)) / tau_s


def bandwidth_formula(tau_s: float, sigma_omega: float) -> float:
    """Closed-form ESD FWHM for a Gaussian envelope with Gaussian-correlated noise.

    Equals the Fourier-limited width times sqrt(1 + 2*chi^2); equivalently the
    Fourier-limited width and the noise bandwidth added in quadrature.
    """
    if sigma_omega < 0.0:
        raise ConfigurationError(f"sigma_omega must be >= 0, got {sigma_omega}")
    chi = chi_parameter(tau_s, sigma_omega)
    return fourier_limited_bandwidth(tau_s) * math.sqrt(1.0 + 2.0 * chi * chi)


@dataclass(frozen=True)
class PulseStats:
    """Bundle of ensemble statistics for a pulse collection."""

    times: np.ndarray = field(repr=False)
    mean_profile: np.ndarray = field(repr=False)
    moment_times: np.ndarray = field(repr=False)
    moment_ratios: np.ndarray = field(repr=False)
    energy_samples: np.ndarray = field(repr=False)
    m_parameter: float
    esd: EsdResult


def pulse_statistics(pulses, times=None, r_max: int = 5) -> PulseStats:
    """Collect the standard chaotic-light statistics for an ensemble of pulses."""
    amps, dt = _stack(pulses)
    grid_t = np.arange(amps.shape[1]) * dt
    profile = np.mean(np.abs(amps) ** 2, axis=0)
    if times is None:
        times = [grid_t[int(np.argmax(profile))]]
    mom_t, ratios = intensity_moment_ratios(pulses, times, r_max)
    energies, m = pulse_energy_stats(pulses)
    esd = energy_spectral_density(pulses)
    return PulseStats(
        times=grid_t,
        mean_profile=profile,
        moment_times=mom_t,
        moment_ratios=ratios,
        energy_samples=energies,
        m_parameter=m,
        esd=esd,
    )
