"""Driven two- and three-level density-matrix dynamics with Auger-yield accumulation.

The equations of motion (rotating-wave approximation, rotating-frame
coherences) couple a ground state |1> to a decaying core-excited state |2>
(rate gamma2) through a possibly stochastic Rabi coupling Omega_s(t), and
optionally |2> to a second decaying state |3> (rate gamma3) through a
deterministic coupling Omega_d(t).  Off-diagonal relaxation rates are
(gamma_i + gamma_j)/2 with gamma_1 = 0.  Auger yields q_j accumulate
gamma_j * sigma_jj alongside the state, so sigma11 + sigma22 (+ sigma33)
+ q2 (+ q3) = 1 is conserved exactly.

Propagation is fixed-step classical RK4.  Drive traces are sampled on a
uniform grid and interpolated linearly at the Runge-Kutta stage times; the
step divides the drive grid spacing exactly, so every step sees a smooth
(linear-in-t) drive and step-halving is a clean fourth-order check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigurationError, IntegrationError
from .noise import NoiseTrace
from .pulse import EnvelopeSpec, envelope_eval

__all__ = [
    "SystemSpec",
    "DensityState",
    "DriveTraces",
    "DressedStates",
    "TrajectoryRecord",
    "build_drive",
    "sample_drive_block",
    "integrate_two_level",
    "integrate_three_level",
    "dressed_eigensystem",
    "default_step_target",
    "substeps_for",
]

# Hard ceilings for the fixed-step integrator.  Both caps are sized so the
# marginal purity inequality |sigma12|^2 <= sigma11*sigma22 stays inside its
# 1e-8 tolerance even for stochastic realizations whose spikes reach several
# times the peak Rabi frequency.
_MAX_STEP = 0.015         # in units of 1/gamma2
_STEPS_PER_RABI = 0.02    # h <= 0.02 / max peak Rabi frequency
_BLOWUP = 10.0            # |populations| beyond this flags instability


@dataclass(frozen=True)
class SystemSpec:
    """Atomic parameters in units of gamma2 (gamma2 itself is normally 1)."""

    levels: int
    gamma2: float = 1.0
    gamma3: float = 0.0
    omega_s0: float = 0.0
    omega_d0: float = 0.0
    delta_s: float = 0.0
    delta_d: float = 0.0

    def __post_init__(self):
        if self.levels not in (2, 3):
            raise ConfigurationError(f"levels must be 2 or 3, got {self.levels}")
        if not (self.gamma2 > 0.0):
            raise ConfigurationError(f"gamma2 must be positive, got {self.gamma2}")
        if self.gamma3 < 0.0:
            raise ConfigurationError(f"gamma3 must be >= 0, got {self.gamma3}")
        if self.omega_s0 < 0.0 or self.omega_d0 < 0.0:
            raise ConfigurationError("peak Rabi frequencies must be >= 0")
        if self.levels == 2 and self.omega_d0 != 0.0:
            raise ConfigurationError("omega_d0 requires levels=3")

    @property
    def gamma_12(self) -> float:
        """Coherence decay rate of sigma12 (gamma_1 = 0)."""
        return 0.5 * self.gamma2

    @property
    def gamma_23(self) -> float:
        return 0.5 * (self.gamma2 + self.gamma3)

    @property
    def gamma_13(self) -> float:
        return 0.5 * self.gamma3


@dataclass(frozen=True)
class DensityState:
    """Rotating-frame density-matrix elements plus accumulated Auger yields."""

    sigma11: float
    sigma22: float
    sigma12: complex
    q2: float
    sigma33: float = 0.0
    sigma23: complex = 0.0j
    sigma13: complex = 0.0j
    q3: float = 0.0

    @property
    def trace_sum(self) -> float:
        """Populations plus yields; exactly 1 up to integrator roundoff."""
        return self.sigma11 + self.sigma22 + self.sigma33 + self.q2 + self.q3


@dataclass(frozen=True)
class TrajectoryRecord:
    """Per-step history of one integration (for diagnostics and tests)."""

    times: np.ndarray = field(repr=False)
    sigma11: np.ndarray = field(repr=False)
    sigma22: np.ndarray = field(repr=False)
    sigma12: np.ndarray = field(repr=False)
    q2: np.ndarray = field(repr=False)
    sigma33: np.ndarray | None = None
    sigma23: np.ndarray | None = None
    sigma13: np.ndarray | None = None
    q3: np.ndarray | None = None


@dataclass(frozen=True)
class DriveTraces:
    """Sampled Rabi-frequency traces on a uniform time grid covering [0, t_end].

    ``omega_s`` is complex (stochastic drives carry the noise); ``omega_d``
    is real and deterministic, or None for the single-resonance case.
    """

    omega_s: np.ndarray = field(repr=False)
    dt: float
    omega_d: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "omega_s", np.asarray(self.omega_s, dtype=np.complex128))
        if self.omega_s.ndim != 1 or self.omega_s.size < 2:
            raise ConfigurationError("omega_s must be 1-D with at least 2 samples")
        if not (self.dt > 0.0):
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.omega_d is not None:
            object.__setattr__(self, "omega_d", np.asarray(self.omega_d, dtype=np.float64))
            if self.omega_d.shape != self.omega_s.shape:
                raise ConfigurationError("omega_d and omega_s must share one grid")

    @property
    def t_end(self) -> float:
        return (self.omega_s.size - 1) * self.dt


def default_step_target(system: SystemSpec) -> float:
    """Upper bound on the RK4 step implied by the decay and Rabi scales.

    The coherence-time bound enters implicitly: stochastic drive grids already
    satisfy dt <= T_c/20 and the integrator never steps coarser than the
    drive grid.
    """
    h = _MAX_STEP / system.gamma2
    peak = max(system.omega_s0, system.omega_d0)
    if peak > 0.0:
        h = min(h, _STEPS_PER_RABI / peak)
    return h


def sample_drive_block(
    system: SystemSpec,
    s_envelope: EnvelopeSpec,
    t_final: float,
    zeta_block: np.ndarray,
    dt: float,
    d_envelope: EnvelopeSpec | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Rabi traces for a block of modulation traces sharing one grid.

    ``zeta_block`` has one realization per row; returns ``(omega_s, omega_d)``
    with ``omega_s[r] = omega_s0 * sqrt(f_s(t)) * zeta_block[r]`` truncated to
    the first ``ceil(t_final/dt) + 1`` samples, and deterministic
    ``omega_d = omega_d0 * sqrt(f_d(t))`` (or None without a pump envelope).
    """
    if not (t_final > 0.0):
        raise ConfigurationError(f"t_final must be positive, got {t_final}")
    n = int(np.ceil(t_final / dt - 1e-9)) + 1
    zeta_block = np.atleast_2d(np.asarray(zeta_block, dtype=np.complex128))
    if n > zeta_block.shape[1]:
        raise ConfigurationError(
            f"modulation traces cover {zeta_block.shape[1] - 1} intervals of {dt}; "
            f"need {n - 1} to span t_final={t_final}"
        )
    t = np.arange(n) * dt
    base = system.omega_s0 * np.sqrt(np.asarray(envelope_eval(s_envelope, t)))
    om_s = zeta_block[:, :n] * base
    om_d = None
    if d_envelope is not None:
        om_d = system.omega_d0 * np.sqrt(np.asarray(envelope_eval(d_envelope, t)))
    return om_s, om_d


def build_drive(
    system: SystemSpec,
    s_envelope: EnvelopeSpec,
    t_final: float,
    d_envelope: EnvelopeSpec | None = None,
    s_noise: NoiseTrace | None = None,
) -> DriveTraces:
    """Sample the Rabi traces for one realization.

    With ``s_noise`` the lower-transition drive is stochastic,
    ``Omega_s(t) = omega_s0 * sqrt(f_s(t)) * zeta(t)`` on the noise grid;
    without it the drive is Fourier-limited and sampled at the integrator's
    step target.  The upper-transition drive, when present, is always
    Fourier-limited: ``Omega_d(t) = omega_d0 * sqrt(f_d(t))``.
    """
    if system.levels == 3 and d_envelope is None and system.omega_d0 > 0.0:
        raise ConfigurationError("levels=3 with omega_d0 > 0 requires a pump envelope")
    if s_noise is not None:
        dt = s_noise.dt
        zeta = s_noise.samples[np.newaxis, :]
    else:
        dt = default_step_target(system)
        n = int(np.ceil(t_final / dt - 1e-9)) + 1
        zeta = np.ones((1, n), dtype=np.complex128)
    om_s, om_d = sample_drive_block(system, s_envelope, t_final, zeta, dt, d_envelope)
    return DriveTraces(omega_s=om_s[0], dt=dt, omega_d=om_d)


def substeps_for(dt: float, system: SystemSpec, substep_factor: int = 1) -> int:
    """RK4 substeps per drive-grid interval so the step meets the target bound."""
    if substep_factor < 1:
        raise ConfigurationError(f"substep_factor must be >= 1, got {substep_factor}")
    m = max(1, math.ceil(dt / default_step_target(system) - 1e-9))
    return m * substep_factor


def _intervals(drive: DriveTraces, t_final: float | None) -> int:
    if t_final is None:
        return drive.omega_s.size - 1
    n = int(np.ceil(t_final / drive.dt - 1e-9))
    if n > drive.omega_s.size - 1:
        raise ConfigurationError(
            f"drive traces end at t={drive.t_end:.6g}, cannot integrate to {t_final}"
        )
    return n


@njit(cache=True)
def _rk4_two(delta_s, om_s, dt, m, n_int, g2):
    """RK4 over two-level batches: detuning grid x realization grid.

    Returns per-(point, realization) final populations, coherence, yield and
    a failure step index (0 = ok).
    """
    n_pts = delta_s.size
    n_real = om_s.shape[0]
    s11f = np.empty((n_pts, n_real))
    s22f = np.empty((n_pts, n_real))
    s12f = np.empty((n_pts, n_real), dtype=np.complex128)
    q2f = np.empty((n_pts, n_real))
    fail = np.zeros((n_pts, n_real), dtype=np.int64)
    h = dt / m
    for r in range(n_real):
        for p in range(n_pts):
            cs = 1j * delta_s[p] - 0.5 * g2
            s11 = 1.0
            s22 = 0.0
            s12 = 0.0 + 0.0j
            q2 = 0.0
            step = 0
            bad = 0
            for i in range(n_int):
                a0 = om_s[r, i]
                da = om_s[r, i + 1] - a0
                for j in range(m):
                    o1 = a0 + da * (j / m)
                    o2 = a0 + da * ((j + 0.5) / m)
                    o4 = a0 + da * ((j + 1.0) / m)
                    # k1
                    im = (np.conj(o1) * s12).imag
                    k1_11 = 2.0 * im
                    k1_22 = -g2 * s22 - 2.0 * im
                    k1_12 = cs * s12 + 1j * o1 * (s22 - s11)
                    k1_q = g2 * s22
                    # k2
                    b11 = s11 + 0.5 * h * k1_11
                    b22 = s22 + 0.5 * h * k1_22
                    b12 = s12 + 0.5 * h * k1_12
                    im = (np.conj(o2) * b12).imag
                    k2_11 = 2.0 * im
                    k2_22 = -g2 * b22 - 2.0 * im
                    k2_12 = cs * b12 + 1j * o2 * (b22 - b11)
                    k2_q = g2 * b22
                    # k3
                    b11 = s11 + 0.5 * h * k2_11
                    b22 = s22 + 0.5 * h * k2_22
                    b12 = s12 + 0.5 * h * k2_12
                    im = (np.conj(o2) * b12).imag
                    k3_11 = 2.0 * im
                    k3_22 = -g2 * b22 - 2.0 * im
                    k3_12 = cs * b12 + 1j * o2 * (b22 - b11)
                    k3_q = g2 * b22
                    # k4
                    b11 = s11 + h * k3_11
                    b22 = s22 + h * k3_22
                    b12 = s12 + h * k3_12
                    im = (np.conj(o4) * b12).imag
                    k4_11 = 2.0 * im
                    k4_22 = -g2 * b22 - 2.0 * im
                    k4_12 = cs * b12 + 1j * o4 * (b22 - b11)
                    k4_q = g2 * b22
                    s11 += h / 6.0 * (k1_11 + 2.0 * (k2_11 + k3_11) + k4_11)
                    s22 += h / 6.0 * (k1_22 + 2.0 * (k2_22 + k3_22) + k4_22)
                    s12 += h / 6.0 * (k1_12 + 2.0 * (k2_12 + k3_12) + k4_12)
                    q2 += h / 6.0 * (k1_q + 2.0 * (k2_q + k3_q) + k4_q)
                    step += 1
                if not (abs(s11) + abs(s22) < _BLOWUP):
                    bad = step
                    break
            s11f[p, r] = s11
            s22f[p, r] = s22
            s12f[p, r] = s12
            q2f[p, r] = q2
            fail[p, r] = bad
    return s11f, s22f, s12f, q2f, fail


@njit(cache=True)
def _rk4_three(delta_s, delta_d, om_s, om_d, dt, m, n_int, g2, g3):
    """RK4 over three-level batches; see _rk4_two for conventions."""
    n_pts = delta_s.size
    n_real = om_s.shape[0]
    g12 = 0.5 * g2
    g23 = 0.5 * (g2 + g3)
    g13 = 0.5 * g3
    s11f = np.empty((n_pts, n_real))
    s22f = np.empty((n_pts, n_real))
    s33f = np.empty((n_pts, n_real))
    s12f = np.empty((n_pts, n_real), dtype=np.complex128)
    s23f = np.empty((n_pts, n_real), dtype=np.complex128)
    s13f = np.empty((n_pts, n_real), dtype=np.complex128)
    q2f = np.empty((n_pts, n_real))
    q3f = np.empty((n_pts, n_real))
    fail = np.zeros((n_pts, n_real), dtype=np.int64)
    h = dt / m
    for r in range(n_real):
        for p in range(n_pts):
            c12 = 1j * delta_s[p] - g12
            c23 = 1j * delta_d[p] - g23
            c13 = 1j * (delta_s[p] + delta_d[p]) - g13
            s11 = 1.0
            s22 = 0.0
            s33 = 0.0
            s12 = 0.0 + 0.0j
            s23 = 0.0 + 0.0j
            s13 = 0.0 + 0.0j
            q2 = 0.0
            q3 = 0.0
            step = 0
            bad = 0
            for i in range(n_int):
                a0 = om_s[r, i]
                da = om_s[r, i + 1] - a0
                d0 = om_d[i]
                dd = om_d[i + 1] - d0
                for j in range(m):
                    f0 = j / m
                    fh = (j + 0.5) / m
                    f1 = (j + 1.0) / m
                    os1 = a0 + da * f0
                    os2 = a0 + da * fh
                    os4 = a0 + da * f1
                    od1 = d0 + dd * f0
                    od2 = d0 + dd * fh
                    od4 = d0 + dd * f1
                    # k1
                    im12 = (np.conj(os1) * s12).imag
                    im23 = od1 * s23.imag
                    k1_11 = 2.0 * im12
                    k1_22 = -g2 * s22 - 2.0 * (im12 - im23)
                    k1_33 = -g3 * s33 - 2.0 * im23
                    k1_12 = c12 * s12 + 1j * (os1 * (s22 - s11) - od1 * s13)
                    k1_23 = c23 * s23 + 1j * (np.conj(os1) * s13 + od1 * (s33 - s22))
                    k1_13 = c13 * s13 + 1j * (os1 * s23 - od1 * s12)
                    k1_q2 = g2 * s22
                    k1_q3 = g3 * s33
                    # k2
                    b11 = s11 + 0.5 * h * k1_11
                    b22 = s22 + 0.5 * h * k1_22
                    b33 = s33 + 0.5 * h * k1_33
                    b12 = s12 + 0.5 * h * k1_12
                    b23 = s23 + 0.5 * h * k1_23
                    b13 = s13 + 0.5 * h * k1_13
                    im12 = (np.conj(os2) * b12).imag
                    im23 = od2 * b23.imag
                    k2_11 = 2.0 * im12
                    k2_22 = -g2 * b22 - 2.0 * (im12 - im23)
                    k2_33 = -g3 * b33 - 2.0 * im23
                    k2_12 = c12 * b12 + 1j * (os2 * (b22 - b11) - od2 * b13)
                    k2_23 = c23 * b23 + 1j * (np.conj(os2) * b13 + od2 * (b33 - b22))
                    k2_13 = c13 * b13 + 1j * (os2 * b23 - od2 * b12)
                    k2_q2 = g2 * b22
                    k2_q3 = g3 * b33
                    # k3
                    b11 = s11 + 0.5 * h * k2_11
                    b22 = s22 + 0.5 * h * k2_22
                    b33 = s33 + 0.5 * h * k2_33
                    b12 = s12 + 0.5 * h * k2_12
                    b23 = s23 + 0.5 * h * k2_23
                    b13 = s13 + 0.5 * h * k2_13
                    im12 = (np.conj(os2) * b12).imag
                    im23 = od2 * b23.imag
                    k3_11 = 2.0 * im12
                    k3_22 = -g2 * b22 - 2.0 * (im12 - im23)
                    k3_33 = -g3 * b33 - 2.0 * im23
                    k3_12 = c12 * b12 + 1j * (os2 * (b22 - b11) - od2 * b13)
                    k3_23 = c23 * b23 + 1j * (np.conj(os2) * b13 + od2 * (b33 - b22))
                    k3_13 = c13 * b13 + 1j * (os2 * b23 - od2 * b12)
                    k3_q2 = g2 * b22
                    k3_q3 = g3 * b33
                    # k4
                    b11 = s11 + h * k3_11
                    b22 = s22 + h * k3_22
                    b33 = s33 + h * k3_33
                    b12 = s12 + h * k3_12
                    b23 = s23 + h * k3_23
                    b13 = s13 + h * k3_13
                    im12 = (np.conj(os4) * b12).imag
                    im23 = od4 * b23.imag
                    k4_11 = 2.0 * im12
                    k4_22 = -g2 * b22 - 2.0 * (im12 - im23)
                    k4_33 = -g3 * b33 - 2.0 * im23
                    k4_12 = c12 * b12 + 1j * (os4 * (b22 - b11) - od4 * b13)
                    k4_23 = c23 * b23 + 1j * (np.conj(os4) * b13 + od4 * (b33 - b22))
                    k4_13 = c13 * b13 + 1j * (os4 * b23 - od4 * b12)
                    k4_q2 = g2 * b22
                    k4_q3 = g3 * b33
                    s11 += h / 6.0 * (k1_11 + 2.0 * (k2_11 + k3_11) + k4_11)
                    s22 += h / 6.0 * (k1_22 + 2.0 * (k2_22 + k3_22) + k4_22)
                    s33 += h / 6.0 * (k1_33 + 2.0 * (k2_33 + k3_33) + k4_33)
                    s12 += h / 6.0 * (k1_12 + 2.0 * (k2_12 + k3_12) + k4_12)
                    s23 += h / 6.0 * (k1_23 + 2.0 * (k2_23 + k3_23) + k4_23)
                    s13 += h / 6.0 * (k1_13 + 2.0 * (k2_13 + k3_13) + k4_13)
                    q2 += h / 6.0 * (k1_q2 + 2.0 * (k2_q2 + k3_q2) + k4_q2)
                    q3 += h / 6.0 * (k1_q3 + 2.0 * (k2_q3 + k3_q3) + k4_q3)
                    step += 1
                if not (abs(s11) + abs(s22) + abs(s33) < _BLOWUP):
                    bad = step
                    break
            s11f[p, r] = s11
            s22f[p, r] = s22
            s33f[p, r] = s33
            s12f[p, r] = s12
            s23f[p, r] = s23
            s13f[p, r] = s13
            q2f[p, r] = q2
            q3f[p, r] = q3
            fail[p, r] = bad
    return s11f, s22f, s33f, s12f, s23f, s13f, q2f, q3f, fail


def _record_loop(system: SystemSpec, drive: DriveTraces, m: int, n_int: int, three: bool):
    """Pure-Python RK4 with per-step recording; the slow reference twin of the kernels."""
    h = drive.dt / m
    n_steps = n_int * m
    t = np.empty(n_steps + 1)
    s11 = np.empty(n_steps + 1)
    s22 = np.empty(n_steps + 1)
    s33 = np.empty(n_steps + 1)
    s12 = np.empty(n_steps + 1, dtype=complex)
    s23 = np.empty(n_steps + 1, dtype=complex)
    s13 = np.empty(n_steps + 1, dtype=complex)
    q2 = np.empty(n_steps + 1)
    q3 = np.empty(n_steps + 1)
    y = np.zeros(9, dtype=complex)
    y[0] = 1.0

    g2, g3 = system.gamma2, system.gamma3
    c12 = 1j * system.delta_s - system.gamma_12 if three else 1j * system.delta_s - 0.5 * g2
    c23 = 1j * system.delta_d - system.gamma_23
    c13 = 1j * (system.delta_s + system.delta_d) - system.gamma_13
    om_d = drive.omega_d if drive.omega_d is not None else np.zeros_like(drive.omega_s, dtype=float)

    def rhs(y, os, od):
        s_11, s_22, s_33, s_12, s_23, s_13 = y[0], y[1], y[2], y[3], y[4], y[5]
        im12 = (np.conj(os) * s_12).imag
        im23 = od * s_23.imag
        out = np.empty(9, dtype=complex)
        out[0] = 2.0 * im12
        out[1] = -g2 * s_22 - 2.0 * (im12 - im23)
        out[2] = -g3 * s_33 - 2.0 * im23
        out[3] = c12 * s_12 + 1j * (os * (s_22 - s_11) - od * s_13)
        out[4] = c23 * s_23 + 1j * (np.conj(os) * s_13 + od * (s_33 - s_22))
        out[5] = c13 * s_13 + 1j * (os * s_23 - od * s_12)
        out[6] = g2 * s_22
        out[7] = g3 * s_33
        out[8] = 0.0
        return out

    def store(k):
        t[k] = k * h
        s11[k], s22[k], s33[k] = y[0].real, y[1].real, y[2].real
        s12[k], s23[k], s13[k] = y[3], y[4], y[5]
        q2[k], q3[k] = y[6].real, y[7].real

    store(0)
    k = 0
    for i in range(n_int):
        a0, a1 = drive.omega_s[i], drive.omega_s[i + 1]
        d0, d1 = om_d[i], om_d[i + 1]
        for j in range(m):
            o1 = a0 + (a1 - a0) * (j / m)
            o2 = a0 + (a1 - a0) * ((j + 0.5) / m)
            o4 = a0 + (a1 - a0) * ((j + 1.0) / m)
            e1 = d0 + (d1 - d0) * (j / m)
            e2 = d0 + (d1 - d0) * ((j + 0.5) / m)
            e4 = d0 + (d1 - d0) * ((j + 1.0) / m)
            k1 = rhs(y, o1, e1)
            k2 = rhs(y + 0.5 * h * k1, o2, e2)
            k3 = rhs(y + 0.5 * h * k2, o2, e2)
            k4 = rhs(y + h * k3, o4, e4)
            y = y + h / 6.0 * (k1 + 2.0 * (k2 + k3) + k4)
            k += 1
            store(k)
    rec = TrajectoryRecord(
        times=t,
        sigma11=s11,
        sigma22=s22,
        sigma12=s12,
        q2=q2,
        sigma33=s33 if three else None,
        sigma23=s23 if three else None,
        sigma13=s13 if three else None,
        q3=q3 if three else None,
    )
    state = DensityState(
        sigma11=float(s11[-1]),
        sigma22=float(s22[-1]),
        sigma12=complex(s12[-1]),
        q2=float(q2[-1]),
        sigma33=float(s33[-1]) if three else 0.0,
        sigma23=complex(s23[-1]) if three else 0.0j,
        sigma13=complex(s13[-1]) if three else 0.0j,
        q3=float(q3[-1]) if three else 0.0,
    )
    return state, rec


def _check_fail(fail: np.ndarray, h: float, what: str) -> None:
    if fail.any():
        idx = np.argwhere(fail)
        p, r = idx[0]
        raise IntegrationError(
            f"{what} integration unstable (population blow-up)",
            diagnostics={
                "first_failure_point": int(p),
                "first_failure_realization": int(r),
                "failed_at_step": int(fail[p, r]),
                "step_size": h,
            },
        )


def integrate_two_level(
    system: SystemSpec,
    drive: DriveTraces,
    t_final: float | None = None,
    substep_factor: int = 1,
    record: bool = False,
):
    """Propagate the two-level system from the ground state.

    Returns the final DensityState, or ``(state, TrajectoryRecord)`` with
    ``record=True``.  ``substep_factor`` multiplies the number of RK4 steps
    per drive-grid interval (used for step-halving convergence checks).
    """
    if system.levels != 2:
        raise ConfigurationError("integrate_two_level requires levels=2")
    if drive.omega_d is not None:
        raise ConfigurationError("two-level drive must not include omega_d")
    m = substeps_for(drive.dt, system, substep_factor)
    n_int = _intervals(drive, t_final)
    if record:
        state, rec = _record_loop(system, drive, m, n_int, three=False)
        _verify_state(state, drive.dt / m, "two-level")
        return state, rec
    om = drive.omega_s[np.newaxis, :]
    s11, s22, s12, q2, fail = _rk4_two(
        np.array([system.delta_s]), om, drive.dt, m, n_int, system.gamma2
    )
    _check_fail(fail, drive.dt / m, "two-level")
    return DensityState(
        sigma11=float(s11[0, 0]),
        sigma22=float(s22[0, 0]),
        sigma12=complex(s12[0, 0]),
        q2=float(q2[0, 0]),
    )


def integrate_three_level(
    system: SystemSpec,
    drive: DriveTraces,
    t_final: float | None = None,
    substep_factor: int = 1,
    record: bool = False,
):
    """Propagate the three-level ladder from the ground state; see integrate_two_level."""
    if system.levels != 3:
        raise ConfigurationError("integrate_three_level requires levels=3")
    om_d = drive.omega_d
    if om_d is None:
        om_d = np.zeros_like(drive.omega_s, dtype=np.float64)
    m = substeps_for(drive.dt, system, substep_factor)
    n_int = _intervals(drive, t_final)
    if record:
        state, rec = _record_loop(system, drive, m, n_int, three=True)
        _verify_state(state, drive.dt / m, "three-level")
        return state, rec
    om = drive.omega_s[np.newaxis, :]
    s11, s22, s33, s12, s23, s13, q2, q3, fail = _rk4_three(
        np.array([system.delta_s]),
        np.array([system.delta_d]),
        om,
        om_d,
        drive.dt,
        m,
        n_int,
        system.gamma2,
        system.gamma3,
    )
    _check_fail(fail, drive.dt / m, "three-level")
    return DensityState(
        sigma11=float(s11[0, 0]),
        sigma22=float(s22[0, 0]),
        sigma33=float(s33[0, 0]),
        sigma12=complex(s12[0, 0]),
        sigma23=complex(s23[0, 0]),
        sigma13=complex(s13[0, 0]),
        q2=float(q2[0, 0]),
        q3=float(q3[0, 0]),
    )


def _verify_state(state: DensityState, h: float, what: str) -> None:
    defect = abs(state.trace_sum - 1.0)
    if not (defect < 1e-6):
        raise IntegrationError(
            f"{what} conservation violated: |sum - 1| = {defect:.3e}",
            diagnostics={"step_size": h, "defect": defect},
        )


@dataclass(frozen=True)
class DressedStates:
    """Stationary dressed levels of a strongly driven transition."""

    omega_plus: float
    omega_minus: float
    splitting: float
    mixing_ratio: float


def dressed_eigensystem(omega_rabi: float, delta: float) -> DressedStates:
    """Closed-form dressed eigenenergies, splitting, and coupling ratio.

    The eigenenergies are ``-delta/2 +- sqrt(delta^2 + 4*omega^2)/2``; the
    splitting is their difference.  ``mixing_ratio`` is the ratio of probe
    couplings to the lower/upper dressed state; it equals 1 on resonance and
    tends to 0 (infinity) for delta > 0 (< 0) as the drive vanishes.
    """
    disc = math.sqrt(delta * delta + 4.0 * omega_rabi * omega_rabi)
    w_plus = -0.5 * delta + 0.5 * disc
    w_minus = -0.5 * delta - 0.5 * disc
    o2 = omega_rabi * omega_rabi
    num = o2 + w_plus * w_plus
    den = o2 + w_minus * w_minus
    if den == 0.0:
        mix = math.nan if num == 0.0 else math.inf
    else:
        mix = math.sqrt(num / den)
    return DressedStates(
        omega_plus=w_plus, omega_minus=w_minus, splitting=disc, mixing_ratio=mix
    )
