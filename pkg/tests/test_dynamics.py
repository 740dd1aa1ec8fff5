"""Density-matrix propagation: conservation, oracles, dressed states, drive construction."""

import math

import numpy as np
import pytest

from felsim.analysis import extract_doublet
from felsim.dynamics import (
    DriveTraces,
    SystemSpec,
    _record_loop,
    build_drive,
    default_step_target,
    dressed_eigensystem,
    integrate_three_level,
    integrate_two_level,
    sample_drive_block,
    substeps_for,
)
from felsim.errors import ConfigurationError, IntegrationError
from felsim.noise import FrequencyGrid, PsdKind, PsdSpec, sample_noise
from felsim.pulse import EnvelopeKind, EnvelopeSpec, envelope_eval

GAUSS_ENV = EnvelopeSpec(EnvelopeKind.GAUSSIAN, tau=3.0, t0=16.0)
PROBE_ENV = EnvelopeSpec(EnvelopeKind.GAUSSIAN, tau=4.5, t0=16.0)
PUMP_ENV = EnvelopeSpec(EnvelopeKind.GAUSSIAN, tau=6.0, t0=16.0)


def stochastic_drive(system, chi=5.0, seed=3, env=GAUSS_ENV, t_final=32.0, kind=PsdKind.GAUSSIAN):
    spec = PsdSpec(kind, chi / env.tau)
    grid = FrequencyGrid.for_spec(spec, t_final)
    trace = sample_noise(spec, grid, np.random.default_rng(seed))
    return build_drive(system, env, t_final=t_final, s_noise=trace)


class TestSystemSpec:
    def test_coherence_rates(self):
        s = SystemSpec(levels=3, gamma2=1.0, gamma3=0.5)
        assert s.gamma_12 == 0.5
        assert s.gamma_23 == 0.75
        assert s.gamma_13 == 0.25

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            SystemSpec(levels=4)
        with pytest.raises(ConfigurationError):
            SystemSpec(levels=2, gamma2=0.0)
        with pytest.raises(ConfigurationError):
            SystemSpec(levels=2, omega_s0=-1.0)
        with pytest.raises(ConfigurationError):
            SystemSpec(levels=2, omega_d0=1.0)


class TestBuildDrive:
    def test_deterministic_peak_value(self):
        s = SystemSpec(levels=2, omega_s0=1.7)
        drv = build_drive(s, GAUSS_ENV, t_final=32.0)
        k = round(16.0 / drv.dt)
        assert abs(drv.omega_s[k]) == pytest.approx(1.7, rel=1e-9)
        assert drv.omega_d is None

    def test_stochastic_mean_square_tracks_envelope(self):
        s = SystemSpec(levels=2, omega_s0=2.0)
        spec = PsdSpec(PsdKind.GAUSSIAN, 10.0 / 3.0)
        grid = FrequencyGrid.for_spec(spec, 32.0)
        zeta = np.stack(
            [sample_noise(spec, grid, np.random.default_rng(i)).samples for i in range(2000)]
        )
        om_s, _ = sample_drive_block(s, GAUSS_ENV, 32.0, zeta, grid.dt)
        t = np.arange(om_s.shape[1]) * grid.dt
        expectation = s.omega_s0**2 * np.asarray(envelope_eval(GAUSS_ENV, t))
        ms = np.mean(np.abs(om_s) ** 2, axis=0)
        k = round(16.0 / grid.dt)
        assert ms[k] == pytest.approx(expectation[k], rel=0.1)
        assert np.max(np.abs(ms - expectation)) < 0.1 * s.omega_s0**2

    def test_pump_envelope_wider_than_probe(self):
        s = SystemSpec(levels=3, gamma3=1.0, omega_s0=0.1, omega_d0=10.0)
        drv = build_drive(s, PROBE_ENV, t_final=32.0, d_envelope=PUMP_ENV)
        t = np.arange(drv.omega_s.size) * drv.dt
        probe = np.abs(drv.omega_s) / s.omega_s0
        pump = drv.omega_d / s.omega_d0
        off_peak = np.abs(t - 16.0) > 1.0
        assert np.all(pump[off_peak] >= probe[off_peak])

    def test_noise_trace_too_short_rejected(self):
        s = SystemSpec(levels=2, omega_s0=1.0)
        spec = PsdSpec(PsdKind.GAUSSIAN, 1.0)
        grid = FrequencyGrid.for_spec(spec, 8.0)
        trace = sample_noise(spec, grid, np.random.default_rng(0))
        with pytest.raises(ConfigurationError):
            build_drive(s, GAUSS_ENV, t_final=32.0, s_noise=trace)

    def test_pump_requires_envelope(self):
        s = SystemSpec(levels=3, gamma3=1.0, omega_s0=0.1, omega_d0=10.0)
        with pytest.raises(ConfigurationError):
            build_drive(s, PROBE_ENV, t_final=32.0)


class TestTwoLevel:
    def test_no_drive_is_inert(self):
        s = SystemSpec(levels=2, omega_s0=0.0)
        drv = build_drive(s, GAUSS_ENV, t_final=32.0)
        st, rec = integrate_two_level(s, drv, record=True)
        assert st.q2 == 0.0
        assert st.sigma11 == 1.0
        assert np.all(rec.sigma11 == 1.0)

    def test_weak_constant_drive_rate_oracle(self):
        # lowest-order perturbation theory: Q2 = 1 - exp(-R * integral f),
        # R = 4 |Omega|^2 / Gamma2 for the resonant two-level system
        s = SystemSpec(levels=2, omega_s0=0.02)
        env = EnvelopeSpec(EnvelopeKind.FLAT, tau=64.0, t0=0.0)
        drv = build_drive(s, env, t_final=64.0)
        st = integrate_two_level(s, drv)
        rate = 4.0 * s.omega_s0**2 / s.gamma2
        expected = 1.0 - math.exp(-rate * 0.95 * 64.0)
        assert st.q2 == pytest.approx(expected, rel=0.05)

    def test_conservation_every_step(self):
        s = SystemSpec(levels=2, omega_s0=2.0, delta_s=1.0)
        drv = stochastic_drive(s)
        st, rec = integrate_two_level(s, drv, record=True)
        total = rec.sigma11 + rec.sigma22 + rec.q2
        assert np.max(np.abs(total - 1.0)) < 1e-6

    def test_positivity_and_cauchy_schwarz(self):
        s = SystemSpec(levels=2, omega_s0=2.0, delta_s=0.5)
        drv = stochastic_drive(s, seed=9)
        _, rec = integrate_two_level(s, drv, record=True)
        assert np.all(rec.sigma11 > -1e-8) and np.all(rec.sigma11 < 1 + 1e-8)
        assert np.all(rec.sigma22 > -1e-8) and np.all(rec.sigma22 < 1 + 1e-8)
        assert np.all(np.abs(rec.sigma12) ** 2 <= rec.sigma11 * rec.sigma22 + 1e-8)

    @pytest.mark.parametrize("delta", [0.0, 3.0])
    def test_step_halving_fourier_limited(self, delta):
        s = SystemSpec(levels=2, omega_s0=2.0, delta_s=delta)
        drv = build_drive(s, GAUSS_ENV, t_final=32.0)
        q_h = integrate_two_level(s, drv).q2
        q_h2 = integrate_two_level(s, drv, substep_factor=2).q2
        assert abs(q_h2 - q_h) < 1e-6

    def test_step_halving_stochastic(self):
        s = SystemSpec(levels=2, omega_s0=2.0, delta_s=1.0)
        drv = stochastic_drive(s)
        q_h = integrate_two_level(s, drv).q2
        q_h2 = integrate_two_level(s, drv, substep_factor=2).q2
        assert abs(q_h2 - q_h) < 1e-6

    def test_kernel_matches_recorded_reference(self):
        s = SystemSpec(levels=2, omega_s0=2.0, delta_s=1.5)
        drv = stochastic_drive(s, seed=21)
        fast = integrate_two_level(s, drv)
        slow, _ = integrate_two_level(s, drv, record=True)
        assert fast.q2 == pytest.approx(slow.q2, rel=1e-12, abs=1e-14)
        assert fast.sigma22 == pytest.approx(slow.sigma22, rel=1e-10, abs=1e-14)

    def test_detuning_symmetry(self):
        drv = build_drive(SystemSpec(levels=2, omega_s0=2.0), GAUSS_ENV, t_final=32.0)
        for delta in (0.5, 2.0, 7.0):
            qp = integrate_two_level(SystemSpec(levels=2, omega_s0=2.0, delta_s=delta), drv).q2
            qm = integrate_two_level(SystemSpec(levels=2, omega_s0=2.0, delta_s=-delta), drv).q2
            assert qp == pytest.approx(qm, rel=1e-12)

    def test_instability_reported(self):
        # detuning far beyond the fixed step's stability limit
        s = SystemSpec(levels=2, omega_s0=2.0, delta_s=500.0)
        drv = build_drive(s, GAUSS_ENV, t_final=32.0)
        with pytest.raises(IntegrationError) as err:
            integrate_two_level(s, drv)
        assert "failed_at_step" in err.value.diagnostics

    def test_rejects_wrong_level_count(self):
        s3 = SystemSpec(levels=3, gamma3=1.0, omega_s0=0.1, omega_d0=1.0)
        drv = build_drive(s3, PROBE_ENV, t_final=32.0, d_envelope=PUMP_ENV)
        with pytest.raises(ConfigurationError):
            integrate_two_level(s3, drv)


class TestPowerBroadening:
    def fl_curve(self, omega, tau, deltas):
        env = EnvelopeSpec(EnvelopeKind.GAUSSIAN, tau=tau, t0=16.0)
        s0 = SystemSpec(levels=2, omega_s0=omega)
        drv = build_drive(s0, env, t_final=32.0)
        return np.array(
            [
                integrate_two_level(SystemSpec(levels=2, omega_s0=omega, delta_s=d), drv).q2
                for d in deltas
            ]
        )

    def test_fwhm_monotone_in_drive_strength(self):
        from felsim.pulse import _fwhm_linear

        deltas = np.linspace(-18.0, 18.0, 73)
        widths = [_fwhm_linear(deltas, self.fl_curve(om, 3.0, deltas)) for om in (0.5, 1.0, 2.0, 4.0)]
        assert np.all(np.diff(widths) > 0)

    def test_apex_flattens_with_duration(self):
        deltas = np.array([-0.6, 0.0, 0.6])
        flatness = []
        for tau in (4.0, 8.0):
            q = self.fl_curve(2.0, tau, deltas)
            flatness.append((q[1] - 0.5 * (q[0] + q[2])) / q[1])
        assert flatness[1] < flatness[0]


class TestThreeLevel:
    def test_pump_off_reduces_to_two_level(self):
        s3 = SystemSpec(levels=3, gamma3=1.0, omega_s0=0.8, omega_d0=0.0, delta_s=1.0)
        s2 = SystemSpec(levels=2, omega_s0=0.8, delta_s=1.0)
        drv3 = build_drive(s3, GAUSS_ENV, t_final=32.0, d_envelope=PUMP_ENV)
        drv2 = DriveTraces(omega_s=drv3.omega_s, dt=drv3.dt)
        st3 = integrate_three_level(s3, drv3)
        st2 = integrate_two_level(s2, drv2)
        assert st3.q3 == 0.0
        assert st3.q2 == pytest.approx(st2.q2, abs=1e-8)

    def test_conservation_every_step(self):
        s = SystemSpec(levels=3, gamma3=1.0, omega_s0=0.1, omega_d0=10.0, delta_s=5.0)
        drv = build_drive(s, PROBE_ENV, t_final=32.0, d_envelope=PUMP_ENV)
        st, rec = integrate_three_level(s, drv, record=True)
        total = rec.sigma11 + rec.sigma22 + rec.sigma33 + rec.q2 + rec.q3
        assert np.max(np.abs(total - 1.0)) < 1e-6
        assert np.all(np.abs(rec.sigma13) ** 2 <= rec.sigma11 * rec.sigma33 + 1e-8)

    def test_step_halving(self):
        s = SystemSpec(levels=3, gamma3=1.0, omega_s0=0.1, omega_d0=10.0, delta_s=9.6)
        drv = build_drive(s, PROBE_ENV, t_final=32.0, d_envelope=PUMP_ENV)
        st1 = integrate_three_level(s, drv)
        st2 = integrate_three_level(s, drv, substep_factor=2)
        assert abs(st2.q2 - st1.q2) < 1e-6
        assert abs(st2.q3 - st1.q3) < 1e-6

    def test_kernel_matches_recorded_reference(self):
        s = SystemSpec(levels=3, gamma3=0.5, omega_s0=0.5, omega_d0=4.0, delta_s=2.0, delta_d=1.0)
        spec = PsdSpec(PsdKind.GAUSSIAN, 4.0 / PROBE_ENV.tau)
        grid = FrequencyGrid.for_spec(spec, 32.0)
        trace = sample_noise(spec, grid, np.random.default_rng(13))
        drv = build_drive(s, PROBE_ENV, t_final=32.0, d_envelope=PUMP_ENV, s_noise=trace)
        fast = integrate_three_level(s, drv)
        slow, _ = integrate_three_level(s, drv, record=True)
        assert fast.q2 == pytest.approx(slow.q2, rel=1e-12, abs=1e-14)
        assert fast.q3 == pytest.approx(slow.q3, rel=1e-12, abs=1e-14)

    def fl_doublet_curve(self, delta_d=0.0, deltas=None):
        if deltas is None:
            deltas = np.linspace(-16.0, 16.0, 129)
        s0 = SystemSpec(levels=3, gamma3=1.0, omega_s0=0.1, omega_d0=10.0, delta_d=delta_d)
        drv = build_drive(s0, PROBE_ENV, t_final=32.0, d_envelope=PUMP_ENV)
        q = np.array(
            [
                integrate_three_level(
                    SystemSpec(
                        levels=3, gamma3=1.0, omega_s0=0.1, omega_d0=10.0,
                        delta_s=d, delta_d=delta_d,
                    ),
                    drv,
                ).q2
                for d in deltas
            ]
        )
        return deltas, q

    def test_resonant_doublet_separation(self):
        deltas, q = self.fl_doublet_curve()
        feats = extract_doublet((deltas, q))
        assert feats.has_doublet
        assert feats.separation == pytest.approx(19.2, rel=0.05)
        assert feats.separation < 20.0
        # symmetric pump: symmetric doublet
        assert feats.peak_heights[0] == pytest.approx(feats.peak_heights[1], rel=1e-6)

    def test_off_resonant_doublet_is_asymmetric(self):
        deltas, q = self.fl_doublet_curve(delta_d=2.0)
        feats = extract_doublet((deltas, q))
        assert feats.has_doublet
        ds = dressed_eigensystem(10.0, 2.0)
        # higher peak on the omega_plus side, peaks near the dressed energies
        hi = int(np.argmax(feats.peak_heights))
        assert feats.peak_positions[hi] > 0
        assert feats.peak_positions[hi] == pytest.approx(ds.omega_plus, abs=0.8)
        assert min(feats.peak_positions) == pytest.approx(ds.omega_minus, abs=0.8)


class TestDressedStates:
    def test_resonant(self):
        ds = dressed_eigensystem(10.0, 0.0)
        assert ds.omega_plus == 10.0
        assert ds.omega_minus == -10.0
        assert ds.splitting == 20.0
        assert ds.mixing_ratio == 1.0

    def test_uncoupled(self):
        ds = dressed_eigensystem(0.0, 5.0)
        assert ds.omega_plus == 0.0
        assert ds.omega_minus == -5.0
        assert ds.splitting == 5.0
        assert ds.mixing_ratio == 0.0

    def test_generic_point(self):
        ds = dressed_eigensystem(10.0, 2.0)
        assert ds.splitting == pytest.approx(math.sqrt(404.0), rel=1e-12)

    def test_matches_numpy_eigensolver(self):
        for om, de in ((3.0, 1.0), (10.0, -2.0), (0.5, 4.0)):
            h = np.array([[0.0, om], [om, -de]])
            evals = np.sort(np.linalg.eigvalsh(h))
            ds = dressed_eigensystem(om, de)
            assert ds.omega_minus == pytest.approx(evals[0], rel=1e-12)
            assert ds.omega_plus == pytest.approx(evals[1], rel=1e-12)

    def test_mixing_ratio_from_eigenvectors(self):
        om, de = 10.0, 2.0
        h = np.array([[0.0, om], [om, -de]])
        evals, evecs = np.linalg.eigh(h)
        # coupling of each dressed state to the probe goes through its first component
        c_minus = abs(evecs[0, 0])
        c_plus = abs(evecs[0, 1])
        ds = dressed_eigensystem(om, de)
        assert ds.mixing_ratio == pytest.approx(c_minus / c_plus, rel=1e-12)


class TestStepControl:
    def test_step_target_bounds(self):
        assert default_step_target(SystemSpec(levels=2, omega_s0=0.0)) == 0.015
        assert default_step_target(SystemSpec(levels=2, omega_s0=10.0)) == pytest.approx(0.002)
        s = SystemSpec(levels=3, gamma3=1.0, omega_s0=0.1, omega_d0=10.0)
        assert default_step_target(s) == pytest.approx(0.002)

    def test_substeps_divide_drive_grid(self):
        s = SystemSpec(levels=2, omega_s0=2.0)  # target = 0.01
        assert substeps_for(0.01, s) == 1
        assert substeps_for(0.05, s) == 5
        assert substeps_for(0.01, s, substep_factor=2) == 2

    def test_record_loop_matches_public_state(self):
        s = SystemSpec(levels=2, omega_s0=1.0, delta_s=0.3)
        drv = build_drive(s, GAUSS_ENV, t_final=32.0)
        m = substeps_for(drv.dt, s)
        state, rec = _record_loop(s, drv, m, drv.omega_s.size - 1, three=False)
        assert rec.times[-1] == pytest.approx(drv.t_end, rel=1e-12)
        assert state.q2 == rec.q2[-1]
