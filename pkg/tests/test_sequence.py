import math

import numpy as np
import pytest

from zeemansim.noise import (
    AcLineNoise,
    CompositeNoise,
    QuasiStaticGaussianNoise,
    DetuningTrajectory,
    ConstantOffset,
    PiecewiseLinear,
    sample_trajectory,
)
from zeemansim.sequence import (
    PulseSequence,
    accumulated_phase,
    accumulated_phase_exact,
    echo_phase_closed_form,
    filter_transfer,
    multi_echo,
    outcome_probability,
    ramsey,
    spin_echo,
)

TWO_PI = 2 * math.pi


def constant_trajectory(value, duration):
    return DetuningTrajectory(duration, [ConstantOffset(value)], {})


def linear_trajectory(slope, duration):
    return DetuningTrajectory(
        duration, [PiecewiseLinear([0.0, duration], [0.0, slope * duration])], {}
    )


class TestConstruction:
    def test_ramsey_pulses(self):
        seq = ramsey(0.015)
        assert [p.time for p in seq.pulses] == [0.0, 0.015]
        assert all(s == 1.0 for _, _, s in seq.sign_segments())

    def test_ramsey_analysis_phases_give_x_and_y(self):
        assert ramsey(0.01, 0.0).analysis_phase == 0.0
        assert ramsey(0.01, math.pi / 2).analysis_phase == math.pi / 2

    def test_spin_echo_pulse_at_half(self):
        seq = spin_echo(2.0)
        assert seq.pi_times == (1.0,)
        assert seq.sign_segments() == [(0.0, 1.0, 1.0), (1.0, 2.0, -1.0)]

    def test_multi_echo_single_matches_spin_echo(self):
        assert multi_echo(0.5, [0.25]) == spin_echo(0.5)

    def test_multi_echo_empty_matches_ramsey(self):
        assert multi_echo(0.5, []) == ramsey(0.5)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            ramsey(0.0)
        with pytest.raises(ValueError):
            spin_echo(-1.0)
        with pytest.raises(ValueError):
            multi_echo(1.0, [0.6, 0.4])
        with pytest.raises(ValueError):
            multi_echo(1.0, [1.5])

    def test_sign_function_flip_count(self):
        seq = multi_echo(1.0, [0.25, 0.75])
        assert seq.sign(0.1) == 1.0
        assert seq.sign(0.5) == -1.0
        assert seq.sign(0.9) == 1.0

    def test_signed_area_identity(self):
        # integral of s equals tau minus twice the measure where s = -1
        for seq in (ramsey(1.0), spin_echo(1.0), multi_echo(1.0, [0.2, 0.5, 0.6])):
            area = sum(s * (b - a) for a, b, s in seq.sign_segments())
            neg = sum(b - a for a, b, s in seq.sign_segments() if s < 0)
            assert area == pytest.approx(seq.wait_time - 2 * neg, abs=1e-15)
        assert sum(s * (b - a) for a, b, s in spin_echo(3.0).sign_segments()) == 0.0


class TestAccumulatedPhase:
    def test_zero_noise_zero_phase(self):
        traj = DetuningTrajectory(1.0, [], {})
        assert accumulated_phase(spin_echo(1.0), traj) == 0.0
        assert accumulated_phase_exact(spin_echo(1.0), traj) == 0.0

    def test_ramsey_constant_detuning(self):
        d, tau = 12.34, 0.25
        traj = constant_trajectory(d, tau)
        assert accumulated_phase(ramsey(tau), traj) == pytest.approx(d * tau, rel=1e-12)

    def test_echo_cancels_constant(self):
        traj = constant_trajectory(55.0, 2.0)
        assert accumulated_phase(spin_echo(2.0), traj) == pytest.approx(0.0, abs=1e-11)
        assert accumulated_phase_exact(spin_echo(2.0), traj) == pytest.approx(0.0, abs=1e-12)

    def test_echo_keeps_linear_drift(self):
        # delta(t) = a t accumulates -a tau^2 / 4 through a single echo
        a, tau = 3.0, 0.8
        traj = linear_trajectory(a, tau)
        expected = -a * tau**2 / 4
        assert accumulated_phase(spin_echo(tau), traj) == pytest.approx(expected, rel=1e-9)
        assert accumulated_phase_exact(spin_echo(tau), traj) == pytest.approx(expected, rel=1e-12)

    def test_cpmg2_cancels_constant(self):
        tau = 1.0
        seq = multi_echo(tau, [tau / 4, 3 * tau / 4])
        traj = constant_trajectory(7.0, tau)
        assert accumulated_phase_exact(seq, traj) == pytest.approx(0.0, abs=1e-12)

    def test_closed_form_vs_quadrature_grid(self):
        # 100 (tau, chi) combinations at the nominal line parameters
        delta, omega = TWO_PI * 25.0, TWO_PI * 50.0
        noise = CompositeNoise(channels=[AcLineNoise(delta_ac=delta, phase_mode="triggered")])
        worst = 0.0
        for tau in np.linspace(0.002, 0.12, 10):
            seq = spin_echo(tau)
            for chi in np.linspace(0.0, TWO_PI, 10, endpoint=False):
                traj = sample_trajectory(noise, tau, trigger_phase=chi, rng_key=(0, 0, 0, 0))
                got = accumulated_phase(seq, traj)
                want = echo_phase_closed_form(delta, omega, tau, chi)
                worst = max(worst, abs(got - want))
        assert worst < 1e-9

    def test_exact_path_matches_quadrature_on_composite(self):
        noise = CompositeNoise(channels=[
            AcLineNoise(delta_ac=TWO_PI * 40.0),
            QuasiStaticGaussianNoise(sigma=3.0),
        ])
        for i, tau in enumerate([0.013, 0.11, 0.7]):
            traj = sample_trajectory(noise, tau, rng_key=(9, i, 0, 0))
            for seq in (ramsey(tau), spin_echo(tau), multi_echo(tau, [tau / 4, 3 * tau / 4])):
                assert accumulated_phase_exact(seq, traj) == pytest.approx(
                    accumulated_phase(seq, traj), abs=1e-10
                )

    def test_linearity_in_trajectory(self):
        tau = 0.05
        t1 = sample_trajectory(
            CompositeNoise(channels=[AcLineNoise(delta_ac=TWO_PI * 30.0)]),
            tau, rng_key=(3, 0, 0, 0),
        )
        t2 = constant_trajectory(11.0, tau)
        a, b = 2.0, -0.5

        class Mix:
            duration = tau

            def evaluate(self, t):
                return a * t1.evaluate(t) + b * t2.evaluate(t)

            def breakpoints(self):
                return ()

        seq = spin_echo(tau)
        mixed = accumulated_phase(seq, Mix())
        parts = a * accumulated_phase(seq, t1) + b * accumulated_phase(seq, t2)
        assert mixed == pytest.approx(parts, abs=1e-9)

    def test_trajectory_shorter_than_sequence_rejected(self):
        traj = constant_trajectory(1.0, 0.5)
        with pytest.raises(ValueError):
            accumulated_phase(spin_echo(1.0), traj)


class TestOutcomeProbability:
    def test_phase_zero_x_and_y(self):
        tau = 0.01
        seq_x, seq_y = ramsey(tau, 0.0), ramsey(tau, math.pi / 2)
        assert outcome_probability(seq_x, 0.0) == pytest.approx(1.0)
        assert outcome_probability(seq_y, 0.0) == pytest.approx(0.5)

    def test_quadrature_consistency(self):
        # <X>^2 + <Y>^2 = 1 at full contrast for any phase
        tau = 0.01
        for phi in np.linspace(-3.0, 3.0, 17):
            ex = 2 * outcome_probability(ramsey(tau, 0.0), phi) - 1
            ey = 2 * outcome_probability(ramsey(tau, math.pi / 2), phi) - 1
            assert ex**2 + ey**2 == pytest.approx(1.0, abs=1e-12)

    def test_uniform_phase_averages_to_half(self):
        tau = 0.01
        phis = np.linspace(0, TWO_PI, 10000, endpoint=False)
        for alpha in (0.0, math.pi / 2):
            seq = ramsey(tau, alpha)
            mean = np.mean([outcome_probability(seq, p) for p in phis])
            assert mean == pytest.approx(0.5, abs=1e-12)

    def test_phase_recovered_by_inversion(self):
        tau, phi = 0.01, math.pi / 3
        px = outcome_probability(ramsey(tau, 0.0), phi)
        py = outcome_probability(ramsey(tau, math.pi / 2), phi)
        assert math.atan2(2 * py - 1, 2 * px - 1) == pytest.approx(phi, abs=1e-12)


class TestFilterTransfer:
    def test_dc_limits(self):
        assert filter_transfer(spin_echo(1.0), 0.0) == 0.0
        assert filter_transfer(ramsey(1.0), 0.0) == 1.0

    def test_echo_line_pickup_peaks_with_pulse_at_half_period(self):
        # scanning the wait time at the line frequency: the raw pickup
        # |integral of s e^{iwt}| is maximal when the refocusing pulse
        # sits at half the line period, i.e. tau = 20 ms at 50 Hz
        omega = TWO_PI * 50.0
        taus = np.linspace(0.012, 0.028, 1601)
        pickup = [filter_transfer(spin_echo(t), omega) * t for t in taus]
        t_peak = taus[int(np.argmax(pickup))]
        assert abs(t_peak / 2 - 0.01) < 2e-5

    def test_matches_direct_numeric_integral(self):
        seq = multi_echo(0.03, [0.007, 0.02])
        for omega in (0.0, 40.0, TWO_PI * 50, 1234.5):
            ts = np.linspace(0, seq.wait_time, 200001)
            s = np.array([seq.sign(t) for t in ts[:-1]])
            dt = ts[1] - ts[0]
            approx = abs(np.sum(s * np.exp(1j * omega * ts[:-1])) * dt) / seq.wait_time
            assert filter_transfer(seq, omega) == pytest.approx(approx, abs=5e-4)

    def test_negative_omega_rejected(self):
        with pytest.raises(ValueError):
            filter_transfer(ramsey(1.0), -1.0)
