"""Stationary complex Gaussian colored noise with a prescribed power spectral density.

The generator samples independent complex Gaussian amplitudes on a frequency
grid, with variance proportional to the target PSD, and transforms to the time
domain with an inverse FFT.  The resulting process zeta(t) is stationary, has
``<zeta> = <zeta^2> = 0`` and ``<|zeta|^2> = 1`` (unit-normalized PSD), and its
autocorrelation is the discrete Fourier transform of the sampled spectrum.

All frequencies are angular and measured in units of the Auger width Gamma_2;
times are in units of 1/Gamma_2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InsufficientDataError

__all__ = [
    "PsdKind",
    "PsdSpec",
    "FrequencyGrid",
    "NoiseTrace",
    "psd_value",
    "theoretical_g1",
    "coherence_time",
    "noise_bandwidth",
    "sample_noise",
    "sample_noise_block",
    "empirical_g1",
    "empirical_g1_curve",
]


class PsdKind(enum.Enum):
    """Supported spectral families (exponential, Gaussian, sech first-order coherence)."""

    LORENTZIAN = "lorentzian"
    GAUSSIAN = "gaussian"
    SECH = "sech"


# Half-span of the sampled spectrum in units of sigma_omega.  The Lorentzian
# needs a much wider window than the others: its tails fall off only as
# omega^-2 and truncating too early biases the renormalized autocorrelation.
_COVERAGE = {
    PsdKind.LORENTZIAN: 256.0,
    PsdKind.GAUSSIAN: 32.0,
    PsdKind.SECH: 32.0,
}

_MAX_GRID_POINTS = 1 << 24


@dataclass(frozen=True)
class PsdSpec:
    """Power spectral density family with width parameter sigma_omega (> 0).

    The density is centered at zero: the carrier frequency enters the dynamics
    only through detunings, so spectra are always expressed relative to it.
    """

    kind: PsdKind
    sigma_omega: float

    def __post_init__(self):
        if not isinstance(self.kind, PsdKind):
            object.__setattr__(self, "kind", PsdKind(self.kind))
        if not (self.sigma_omega > 0.0) or not math.isfinite(self.sigma_omega):
            raise ConfigurationError(
                f"sigma_omega must be positive and finite, got {self.sigma_omega}"
            )


def psd_value(spec: PsdSpec, omega) -> np.ndarray | float:
    """Evaluate the unit-normalized PSD at angular frequency offset ``omega``."""
    w = np.asarray(omega, dtype=float) / spec.sigma_omega
    if spec.kind is PsdKind.LORENTZIAN:
        out = 1.0 / (spec.sigma_omega * np.pi * (w * w + 1.0))
    elif spec.kind is PsdKind.GAUSSIAN:
        out = np.exp(-0.5 * w * w) / (spec.sigma_omega * math.sqrt(2.0 * math.pi))
    else:
        # sech(pi*w)/sigma written so the exponentials never overflow
        a = np.exp(-np.pi * np.abs(w))
        out = 2.0 * a / (spec.sigma_omega * (1.0 + a * a))
    return out if out.ndim else float(out)


def theoretical_g1(spec: PsdSpec, v) -> np.ndarray | float:
    """Closed-form |g1| at time delay ``v`` (exp, Gaussian, or sech decay)."""
    u = np.abs(np.asarray(v, dtype=float)) * spec.sigma_omega
    if spec.kind is PsdKind.LORENTZIAN:
        out = np.exp(-u)
    elif spec.kind is PsdKind.GAUSSIAN:
        out = np.exp(-0.5 * u * u)
    else:
        a = np.exp(-0.5 * u)
        out = 2.0 * a / (1.0 + a * a)
    return out if out.ndim else float(out)


def coherence_time(spec: PsdSpec) -> float:
    """Coherence time, the integral of |g1(v)|^2 over all delays."""
    if spec.kind is PsdKind.LORENTZIAN:
        return 1.0 / spec.sigma_omega
    if spec.kind is PsdKind.GAUSSIAN:
        return math.sqrt(math.pi) / spec.sigma_omega
    return 4.0 / spec.sigma_omega


def noise_bandwidth(spec: PsdSpec) -> float:
    """FWHM of the PSD."""
    if spec.kind is PsdKind.LORENTZIAN:
        return 2.0 * spec.sigma_omega
    if spec.kind is PsdKind.GAUSSIAN:
        return 2.0 * spec.sigma_omega * math.sqrt(2.0 * math.log(2.0))
    return 2.0 * spec.sigma_omega * math.acosh(2.0) / math.pi


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform frequency grid for FFT synthesis of one noise realization.

    ``n_points`` samples spaced ``delta_omega`` span ``span = n_points *
    delta_omega`` centered on zero.  The conjugate time grid has step
    ``dt = 2*pi/span`` and period ``2*pi/delta_omega``; only the leading
    window ``[0, t_final]`` of each synthesized trace is retained.
    """

    n_points: int
    delta_omega: float
    t_final: float

    def __post_init__(self):
        if self.n_points < 2 or self.n_points % 2 != 0:
            raise ConfigurationError(f"n_points must be a positive even integer, got {self.n_points}")
        if self.n_points > _MAX_GRID_POINTS:
            raise ConfigurationError(f"n_points {self.n_points} exceeds limit {_MAX_GRID_POINTS}")
        if not (self.delta_omega > 0.0):
            raise ConfigurationError(f"delta_omega must be positive, got {self.delta_omega}")
        if not (self.t_final > 0.0):
            raise ConfigurationError(f"t_final must be positive, got {self.t_final}")
        if self.n_keep + 1 > self.n_points:
            raise ConfigurationError(
                "time window does not fit in the FFT period: "
                f"t_final={self.t_final}, dt={self.dt}, n_points={self.n_points}"
            )

    @property
    def span(self) -> float:
        return self.n_points * self.delta_omega

    @property
    def dt(self) -> float:
        return 2.0 * np.pi / self.span

    @property
    def n_keep(self) -> int:
        """Number of retained time samples; covers [0, t_final] inclusive."""
        return int(np.ceil(self.t_final / self.dt - 1e-9)) + 1

    def omegas(self) -> np.ndarray:
        """Centered frequency samples omega_k = (k - n/2) * delta_omega."""
        return (np.arange(self.n_points) - self.n_points // 2) * self.delta_omega

    def times(self) -> np.ndarray:
        return np.arange(self.n_keep) * self.dt

    def validate_for(self, spec: PsdSpec) -> None:
        """Check resolution/coverage invariants for a given PSD."""
        if self.span < 16.0 * spec.sigma_omega:
            raise ConfigurationError(
                f"grid span {self.span:.3g} too narrow for sigma_omega={spec.sigma_omega:.3g} "
                "(need span >= 16*sigma_omega)"
            )
        tc = coherence_time(spec)
        if self.dt > tc / 20.0 * (1.0 + 1e-12):
            raise ConfigurationError(
                f"grid time step {self.dt:.3g} too coarse (need dt <= T_c/20 = {tc / 20.0:.3g})"
            )

    @classmethod
    def for_spec(cls, spec: PsdSpec, t_final: float) -> "FrequencyGrid":
        """Build the default grid for a PSD and a simulation window.

        The span covers the spectral support (kind-dependent multiple of
        sigma_omega) and keeps the implied time step below T_c/20; the
        frequency step keeps the FFT period at least four times the window,
        so retained samples see no periodic wrap-around.
        """
        if not (t_final > 0.0):
            raise ConfigurationError(f"t_final must be positive, got {t_final}")
        tc = coherence_time(spec)
        span = max(
            _COVERAGE[spec.kind] * spec.sigma_omega,
            40.0 * np.pi / tc,
            16.0 * np.pi / t_final,
        )
        d_omega_max = 0.5 * np.pi / t_final
        n = 1 << max(1, math.ceil(math.log2(span / d_omega_max)))
        if n > _MAX_GRID_POINTS:
            raise ConfigurationError(
                f"default grid for sigma_omega={spec.sigma_omega}, t_final={t_final} "
                f"needs {n} points (limit {_MAX_GRID_POINTS})"
            )
        return cls(n_points=n, delta_omega=span / n, t_final=t_final)


@dataclass(frozen=True)
class NoiseTrace:
    """One realization zeta(t_k) of the colored-noise process on a uniform time grid."""

    samples: np.ndarray = field(repr=False)
    dt: float

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.complex128))
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise ConfigurationError("samples must be a 1-D array with at least 2 points")
        if not (self.dt > 0.0):
            raise ConfigurationError(f"dt must be positive, got {self.dt}")

    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt


def _spectral_sigma(spec: PsdSpec, grid: FrequencyGrid) -> np.ndarray:
    """Per-mode complex-Gaussian std devs sqrt(w_k/2), with sum(w_k) = 1 exactly.

    Renormalizing the discrete weights makes <|zeta|^2> = 1 by construction
    rather than up to truncation/discretization error of the PSD integral.
    """
    w = psd_value(spec, grid.omegas()) * grid.delta_omega
    w /= w.sum()
    return np.sqrt(0.5 * w)


def _synthesize(xi: np.ndarray, grid: FrequencyGrid) -> np.ndarray:
    """Inverse DFT of centered spectral amplitudes; rows are realizations."""
    z = grid.n_points * np.fft.ifft(np.fft.ifftshift(xi, axes=-1), axis=-1)
    return z[..., : grid.n_keep]


def sample_noise(spec: PsdSpec, grid: FrequencyGrid, rng: np.random.Generator) -> NoiseTrace:
    """Draw one noise realization.

    Independent complex Gaussians xi_k with variance proportional to the PSD
    at omega_k are transformed to the time domain; the retained window
    ``[0, t_final]`` is one sample path of a stationary process whose
    autocorrelation is the DFT of the sampled spectrum.
    """
    grid.validate_for(spec)
    sig = _spectral_sigma(spec, grid)
    z = rng.standard_normal((2, grid.n_points))
    xi = sig * (z[0] + 1j * z[1])
    return NoiseTrace(samples=_synthesize(xi, grid), dt=grid.dt)


def sample_noise_block(spec: PsdSpec, grid: FrequencyGrid, rngs) -> np.ndarray:
    """Draw one realization per generator in ``rngs``; returns (len(rngs), n_keep).

    Row i depends only on ``rngs[i]``, so blocks may be split or merged
    freely without changing any realization.
    """
    grid.validate_for(spec)
    sig = _spectral_sigma(spec, grid)
    xi = np.empty((len(rngs), grid.n_points), dtype=np.complex128)
    for i, rng in enumerate(rngs):
        z = rng.standard_normal((2, grid.n_points))
        xi[i] = sig * (z[0] + 1j * z[1])
    return _synthesize(xi, grid)


def _stacked(traces) -> tuple[np.ndarray, float]:
    if len(traces) < 2:
        raise InsufficientDataError("need at least 2 traces for ensemble statistics")
    dt = traces[0].dt
    n = traces[0].samples.size
    for t in traces:
        if abs(t.dt - dt) > 1e-12 * dt or t.samples.size != n:
            raise ConfigurationError("all traces must share one time grid")
    return np.stack([t.samples for t in traces]), dt


def empirical_g1_curve(z: np.ndarray, dt: float, lags) -> tuple[np.ndarray, np.ndarray]:
    """Ensemble estimate of |g1| at integer sample lags, with standard errors.

    ``z`` has one realization per row.  For each lag, the lagged products are
    normalized by the ensemble mean power at both times and averaged over
    time per realization; the realization means are averaged and the standard
    error is that of their component along the mean's phase direction.
    """
    z = np.asarray(z)
    if z.ndim != 2 or z.shape[0] < 2:
        raise InsufficientDataError("need a 2-D block with at least 2 realizations")
    power = np.mean(np.abs(z) ** 2, axis=0)
    g = np.empty(len(lags), dtype=float)
    se = np.empty(len(lags), dtype=float)
    for j, lag in enumerate(lags):
        k = abs(int(lag))
        if k >= z.shape[1]:
            raise ConfigurationError(f"lag {k} exceeds trace length {z.shape[1]}")
        prod = z[:, : z.shape[1] - k] * np.conj(z[:, k:]) if k else (np.abs(z) ** 2).astype(complex)
        norm = np.sqrt(power[: power.size - k] * power[k:]) if k else power
        u = np.mean(prod / norm, axis=1)
        m = np.mean(u)
        g[j] = abs(m)
        if g[j] > 0.0:
            proj = np.real(u * np.conj(m)) / g[j]
        else:
            proj = np.real(u)
        se[j] = np.std(proj, ddof=1) / math.sqrt(u.size)
    return g, se


def empirical_g1(traces, v: float) -> float:
    """Empirical |g1| at delay ``v`` (must be an integer multiple of the grid step)."""
    z, dt = _stacked(traces)
    lag = v / dt
    k = round(lag)
    if abs(lag - k) > 1e-6:
        raise ConfigurationError(f"delay {v} is not an integer multiple of dt={dt}")
    g, _ = empirical_g1_curve(z, dt, [k])
    return float(g[0])
