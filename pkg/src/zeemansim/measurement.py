"""Projective shot sampling, readout errors, and the records CSV contract.

A record aggregates the bright counts of X- and Y-basis shots at one
wait time.  During each shot the qubit evolves only under the detuning
trajectory (the ion is away from the beams, so photon scattering is
zero) and the two pi/2 pulses are perfect, which keeps the populations
balanced by construction.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .noise import CompositeNoise, ShotContext, plan_random_walk, sample_trajectory
from .rng import generator_for, shot_key
from .sequence import X_BASIS_PHASE, Y_BASIS_PHASE, accumulated_phase_exact, outcome_probability

TRIGGER_MODES = ("triggered", "free_running")

CSV_COLUMNS = (
    "wait_time_s",
    "shots_x",
    "bright_x",
    "shots_y",
    "bright_y",
    "trigger_mode",
    "wall_time_s",
)


class RecordValidationError(ValueError):
    """A records table failed validation; message names row and column."""


@dataclass(frozen=True)
class MeasurementRecord:
    wait_time: float
    shots_x: int
    bright_x: int
    shots_y: int
    bright_y: int
    trigger_mode: str = "triggered"
    wall_time: float = 0.0

    def __post_init__(self):
        if self.wait_time <= 0:
            raise ValueError(f"wait_time must be > 0, got {self.wait_time}")
        if self.shots_x <= 0 or self.shots_y <= 0:
            raise ValueError("shot counts must be > 0 in both bases")
        for basis in ("x", "y"):
            bright = getattr(self, f"bright_{basis}")
            shots = getattr(self, f"shots_{basis}")
            if not 0 <= bright <= shots:
                raise ValueError(
                    f"bright_{basis}={bright} outside [0, shots_{basis}={shots}]"
                )
        if self.trigger_mode not in TRIGGER_MODES:
            raise ValueError(f"unknown trigger_mode {self.trigger_mode!r}")


@dataclass(frozen=True)
class ReadoutErrorModel:
    """Wait-time dependent readout error, interpolated linearly.

    The default interpolates from no error at tau = 0 to the 20% loss
    observed at 4 s.  Whether the corruption is symmetric between
    bright and dark outcomes is not known, so an asymmetric variant
    (separate up/down flip curves) is available via ``symmetry``.
    """

    error_at: tuple = ((0.0, 0.0), (4.0, 0.2))
    symmetry: str = "symmetric"
    error_at_down: tuple | None = None  # asymmetric only; defaults to error_at

    def __post_init__(self):
        if self.symmetry not in ("symmetric", "asymmetric"):
            raise ValueError(f"unknown symmetry {self.symmetry!r}")
        for curve in (self.error_at, self.error_at_down or ()):
            times = [t for t, _ in curve]
            if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
                raise ValueError("error_at times must be strictly increasing")
            if any(not 0.0 <= e <= 1.0 for _, e in curve):
                raise ValueError("error probabilities must lie in [0, 1]")

    def _interp(self, curve, wait_time):
        times = np.array([t for t, _ in curve])
        eps = np.array([e for _, e in curve])
        return float(np.interp(wait_time, times, eps))  # clamped at endpoints

    def epsilon(self, wait_time: float):
        """Error parameter at this wait time: a float, or an (up, down) pair."""
        up = self._interp(self.error_at, wait_time)
        if self.symmetry == "symmetric":
            return up
        down = self._interp(self.error_at_down or self.error_at, wait_time)
        return (up, down)


def apply_readout_error(p: float, epsilon, symmetry: str = "symmetric") -> float:
    """Corrupt a bright probability with the readout-error model.

    symmetric:  (1 - eps) * p + eps/2
    asymmetric: (1 - eps_up) * p + eps_down * (1 - p), epsilon = (up, down)
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    if symmetry == "symmetric":
        eps = float(epsilon)
        if not 0.0 <= eps <= 1.0:
            raise ValueError(f"epsilon {eps} outside [0, 1]")
        return (1.0 - eps) * p + eps / 2.0
    if symmetry == "asymmetric":
        eps_up, eps_down = epsilon
        if not (0.0 <= eps_up <= 1.0 and 0.0 <= eps_down <= 1.0):
            raise ValueError(f"epsilon pair {epsilon} outside [0, 1]")
        return (1.0 - eps_up) * p + eps_down * (1.0 - p)
    raise ValueError(f"unknown symmetry {symmetry!r}")


def compensate_contrast(c_measured: float, epsilon, symmetry: str = "symmetric") -> float:
    """Invert the contrast scaling induced by the readout error.

    The symmetric model scales contrast by (1 - eps); the asymmetric one
    by (1 - eps_up - eps_down).  The result is clamped to [0, 1].
    """
    if not 0.0 <= c_measured <= 1.0:
        raise ValueError(f"contrast {c_measured} outside [0, 1]")
    if symmetry == "symmetric":
        scale = 1.0 - float(epsilon)
    elif symmetry == "asymmetric":
        eps_up, eps_down = epsilon
        scale = 1.0 - eps_up - eps_down
    else:
        raise ValueError(f"unknown symmetry {symmetry!r}")
    if scale <= 0.0:
        raise ValueError(f"readout error {epsilon} leaves no contrast to compensate")
    return min(1.0, max(0.0, c_measured / scale))


def simulate_record(
    seq_factory,
    noise: CompositeNoise,
    shots_per_basis: int,
    readout: ReadoutErrorModel | None = None,
    trigger_mode: str = "triggered",
    master_seed: int = 0,
    record_index: int = 0,
    trigger_phase: float = 0.0,
    wall_time_start: float = 0.0,
    slot_period: float | None = None,
    walk_start_values: dict | None = None,
) -> MeasurementRecord:
    """Monte Carlo one measurement record.

    ``seq_factory(analysis_phase)`` builds the pulse sequence; X shots
    run first (slots 0..n-1), then Y shots (slots n..2n-1), each slot
    advancing the wall clock by ``slot_period`` (default: the wait
    time).  Every shot draws its trajectory and its readout outcome
    from streams keyed by (master seed, record index, basis, shot), so
    records can be simulated in parallel and reproduce bit-exactly.
    """
    if shots_per_basis < 1:
        raise ValueError(f"shots_per_basis must be >= 1, got {shots_per_basis}")
    if trigger_mode not in TRIGGER_MODES:
        raise ValueError(f"unknown trigger_mode {trigger_mode!r}")

    sequences = {"x": seq_factory(X_BASIS_PHASE), "y": seq_factory(Y_BASIS_PHASE)}
    tau = sequences["x"].wait_time
    if not math.isclose(sequences["y"].wait_time, tau):
        raise ValueError("seq_factory produced different wait times for X and Y")
    if slot_period is None:
        slot_period = tau

    n_slots = 2 * shots_per_basis
    walk_values = {}
    for index, channel in noise.random_walk_channels():
        start = (walk_start_values or {}).get(index, 0.0)
        if not channel.persist_across_shots:
            start = 0.0
        walk_values[index] = plan_random_walk(
            channel, master_seed, record_index, index, n_slots, slot_period, start
        )

    eps = readout.epsilon(tau) if readout is not None else None
    supplied_phase = trigger_phase if trigger_mode == "triggered" else None

    counts = {}
    for basis_pos, basis in enumerate(("x", "y")):
        seq = sequences[basis]
        bright = 0
        for shot in range(shots_per_basis):
            slot = basis_pos * shots_per_basis + shot
            key = shot_key(master_seed, record_index, basis, shot)
            context = ShotContext(
                wall_time=wall_time_start + slot * slot_period,
                walk_values={i: vals[slot] for i, vals in walk_values.items()},
            )
            traj = sample_trajectory(noise, tau, supplied_phase, key, context)
            phi = accumulated_phase_exact(seq, traj)
            p = outcome_probability(seq, phi)
            if eps is not None:
                p = apply_readout_error(p, eps, readout.symmetry)
            if generator_for(key).uniform() < p:
                bright += 1
        counts[basis] = bright

    return MeasurementRecord(
        wait_time=tau,
        shots_x=shots_per_basis,
        bright_x=counts["x"],
        shots_y=shots_per_basis,
        bright_y=counts["y"],
        trigger_mode=trigger_mode,
        wall_time=wall_time_start,
    )


# ---------------------------------------------------------------------------
# Records CSV contract (simulator <-> estimator, also accepts lab data)
# ---------------------------------------------------------------------------

def write_records_csv(records, fileobj) -> None:
    writer = csv.writer(fileobj, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([
            format(r.wait_time, ".12g"),
            r.shots_x,
            r.bright_x,
            r.shots_y,
            r.bright_y,
            r.trigger_mode,
            format(r.wall_time, ".12g"),
        ])


def records_to_csv_text(records) -> str:
    buf = io.StringIO()
    write_records_csv(records, buf)
    return buf.getvalue()


def read_records_csv(fileobj):
    """Parse and validate a records CSV; raises RecordValidationError."""
    reader = csv.DictReader(fileobj)
    missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise RecordValidationError(f"missing columns: {', '.join(missing)}")
    records = []
    for line, row in enumerate(reader, start=2):
        def grab(column, cast):
            raw = row.get(column, "")
            try:
                return cast(raw)
            except (TypeError, ValueError):
                raise RecordValidationError(
                    f"line {line}, column {column}: cannot parse {raw!r}"
                ) from None

        fields = dict(
            wait_time=grab("wait_time_s", float),
            shots_x=grab("shots_x", int),
            bright_x=grab("bright_x", int),
            shots_y=grab("shots_y", int),
            bright_y=grab("bright_y", int),
            trigger_mode=row.get("trigger_mode", ""),
            wall_time=grab("wall_time_s", float),
        )
        try:
            records.append(MeasurementRecord(**fields))
        except ValueError as exc:
            raise RecordValidationError(f"line {line}: {exc}") from None
    if not records:
        raise RecordValidationError("no data rows found")
    return records
