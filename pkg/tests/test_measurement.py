import io
import math

import numpy as np
import pytest

from zeemansim.measurement import (
    MeasurementRecord,
    ReadoutErrorModel,
    RecordValidationError,
    apply_readout_error,
    compensate_contrast,
    read_records_csv,
    records_to_csv_text,
    simulate_record,
)
from zeemansim.noise import (
    AcLineNoise,
    CompositeNoise,
    QuasiStaticGaussianNoise,
    sample_trajectory,
)
from zeemansim.estimation import mle_coherence
from zeemansim.sequence import accumulated_phase_exact, ramsey, spin_echo

TWO_PI = 2 * math.pi
NO_NOISE = CompositeNoise()


class TestReadoutError:
    def test_half_is_fixed_point(self):
        for eps in (0.0, 0.1, 0.77, 1.0):
            assert apply_readout_error(0.5, eps) == pytest.approx(0.5)

    def test_symmetric_arithmetic(self):
        assert apply_readout_error(1.0, 0.2) == pytest.approx(0.9)

    def test_asymmetric_arithmetic(self):
        assert apply_readout_error(1.0, (0.2, 0.0), "asymmetric") == pytest.approx(0.8)
        assert apply_readout_error(0.0, (0.0, 0.3), "asymmetric") == pytest.approx(0.3)

    def test_range_preserved(self):
        for p in np.linspace(0, 1, 21):
            for eps in np.linspace(0, 1, 11):
                assert 0.0 <= apply_readout_error(float(p), float(eps)) <= 1.0

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            apply_readout_error(1.2, 0.1)
        with pytest.raises(ValueError):
            apply_readout_error(0.5, 1.3)

    def test_compensation_round_trip(self):
        # contrast scaling of the symmetric model inverts exactly
        for c in (0.0, 0.25, 0.5, 0.75, 1.0):
            for eps in (0.0, 0.1, 0.2):
                p_plus = apply_readout_error(0.5 * (1 + c), eps)
                measured = 2 * p_plus - 1.0
                assert compensate_contrast(measured, eps) == pytest.approx(c, abs=1e-12)

    def test_compensate_identity_and_errors(self):
        assert compensate_contrast(0.8, 0.2) == pytest.approx(1.0)
        assert compensate_contrast(0.37, 0.0) == 0.37
        with pytest.raises(ValueError):
            compensate_contrast(0.5, 1.0)

    def test_interpolation_clamped(self):
        model = ReadoutErrorModel()
        assert model.epsilon(0.0) == 0.0
        assert model.epsilon(2.0) == pytest.approx(0.1)
        assert model.epsilon(4.0) == pytest.approx(0.2)
        assert model.epsilon(10.0) == pytest.approx(0.2)  # clamped past the endpoint

    def test_model_validation(self):
        with pytest.raises(ValueError):
            ReadoutErrorModel(error_at=((0.0, 0.0), (0.0, 0.1)))
        with pytest.raises(ValueError):
            ReadoutErrorModel(error_at=((0.0, 1.5),))
        with pytest.raises(ValueError):
            ReadoutErrorModel(symmetry="odd")


class TestSimulateRecord:
    def test_zero_noise_counts(self):
        rec = simulate_record(
            lambda a: ramsey(0.01, a), NO_NOISE, 300, master_seed=5, record_index=0
        )
        # phi = 0: p_x = 1 exactly, p_y = 1/2
        assert rec.bright_x == 300
        assert 100 < rec.bright_y < 200
        assert rec.shots_x == rec.shots_y == 300

    def test_bit_exact_reproducibility(self):
        noise = CompositeNoise(channels=[
            AcLineNoise(delta_ac=TWO_PI * 25, mains_jitter_sigma=0.05),
            QuasiStaticGaussianNoise(sigma=2.0),
        ])
        kwargs = dict(shots_per_basis=150, trigger_mode="free_running", master_seed=11)
        a = simulate_record(lambda p: spin_echo(0.03, p), noise, **kwargs)
        b = simulate_record(lambda p: spin_echo(0.03, p), noise, **kwargs)
        assert a == b

    def test_seed_changes_counts(self):
        noise = CompositeNoise(channels=[QuasiStaticGaussianNoise(sigma=60.0)])
        recs = {
            simulate_record(
                lambda p: ramsey(0.02, p), noise, 200,
                trigger_mode="free_running", master_seed=s,
            ).bright_x
            for s in range(6)
        }
        assert len(recs) > 1

    def test_triggered_ac_phase_identical_every_shot(self):
        noise = CompositeNoise(channels=[AcLineNoise(delta_ac=TWO_PI * 25, phase_mode="triggered")])
        seq = spin_echo(0.015)
        phis = {
            accumulated_phase_exact(
                seq,
                sample_trajectory(noise, 0.015, trigger_phase=0.7, rng_key=(1, 0, 0, i)),
            )
            for i in range(50)
        }
        assert len(phis) == 1

    def test_readout_error_scales_contrast(self):
        readout = ReadoutErrorModel(error_at=((0.0, 0.2),))
        rec = simulate_record(
            lambda a: ramsey(0.01, a), NO_NOISE, 4000, readout=readout, master_seed=3
        )
        est = mle_coherence(rec)
        assert est.contrast == pytest.approx(0.8, abs=0.02)
        assert compensate_contrast(est.contrast, 0.2) == pytest.approx(1.0, abs=0.03)

    def test_revival_full_contrast(self):
        # at tau = 40 ms the echo's line pickup vanishes for any depth
        noise = CompositeNoise(channels=[AcLineNoise(delta_ac=TWO_PI * 25)])
        rec = simulate_record(
            lambda a: spin_echo(0.04, a), noise, 300,
            trigger_mode="free_running", master_seed=21,
        )
        est = mle_coherence(rec)
        assert est.contrast > 0.97

    def test_large_record_converges_to_truth(self):
        readout = ReadoutErrorModel(error_at=((0.0, 0.2),))
        rec = simulate_record(
            lambda a: ramsey(0.01, a), NO_NOISE, 100_000, readout=readout, master_seed=9
        )
        est = mle_coherence(rec)
        se = math.sqrt(4 * 0.9 * 0.1 / 100_000)
        assert abs(est.contrast - 0.8) < 3 * se
        assert abs(est.phase) < 3 * se

    def test_invalid_shot_count(self):
        with pytest.raises(ValueError):
            simulate_record(lambda a: ramsey(0.01, a), NO_NOISE, 0)

    def test_wall_time_recorded(self):
        rec = simulate_record(
            lambda a: ramsey(0.01, a), NO_NOISE, 10,
            master_seed=1, wall_time_start=123.0,
        )
        assert rec.wall_time == 123.0


class TestRecordValidation:
    def test_record_bounds(self):
        with pytest.raises(ValueError):
            MeasurementRecord(0.01, 300, 301, 300, 0)
        with pytest.raises(ValueError):
            MeasurementRecord(0.01, 0, 0, 300, 10)
        with pytest.raises(ValueError):
            MeasurementRecord(-0.01, 300, 1, 300, 10)
        with pytest.raises(ValueError):
            MeasurementRecord(0.01, 300, 1, 300, 10, trigger_mode="maybe")


class TestCsvContract:
    def make_records(self):
        return [
            MeasurementRecord(0.01, 300, 250, 300, 150, "triggered", 0.0),
            MeasurementRecord(0.02, 300, 180, 300, 149, "triggered", 60.0),
        ]

    def test_round_trip(self):
        text = records_to_csv_text(self.make_records())
        back = read_records_csv(io.StringIO(text))
        assert back == self.make_records()

    def test_header_line(self):
        text = records_to_csv_text(self.make_records())
        assert text.splitlines()[0] == (
            "wait_time_s,shots_x,bright_x,shots_y,bright_y,trigger_mode,wall_time_s"
        )

    def test_bright_exceeding_shots_flagged_with_column(self):
        bad = (
            "wait_time_s,shots_x,bright_x,shots_y,bright_y,trigger_mode,wall_time_s\n"
            "0.01,300,350,300,10,triggered,0\n"
        )
        with pytest.raises(RecordValidationError, match="line 2.*bright_x"):
            read_records_csv(io.StringIO(bad))

    def test_missing_column(self):
        with pytest.raises(RecordValidationError, match="missing columns"):
            read_records_csv(io.StringIO("wait_time_s,shots_x\n1,2\n"))

    def test_unparseable_cell(self):
        bad = (
            "wait_time_s,shots_x,bright_x,shots_y,bright_y,trigger_mode,wall_time_s\n"
            "0.01,three hundred,1,300,10,triggered,0\n"
        )
        with pytest.raises(RecordValidationError, match="column shots_x"):
            read_records_csv(io.StringIO(bad))

    def test_empty_table(self):
        header = "wait_time_s,shots_x,bright_x,shots_y,bright_y,trigger_mode,wall_time_s\n"
        with pytest.raises(RecordValidationError, match="no data rows"):
            read_records_csv(io.StringIO(header))
