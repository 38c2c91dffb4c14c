"""Stochastic magnetic-noise channels producing per-shot detuning signals.

Each channel turns its declared statistics into a realized component for
one experimental shot; a composite sums the components.  All detunings
are angular frequencies (rad/s).  Randomness is drawn from generators
keyed by (shot key, channel index), so a channel realizes identical
draws whether sampled alone or inside a composite, and shots can be
generated in parallel in any order.

Slow-fluctuation modeling
-------------------------
Noise that is constant over a whole shot is refocused away by an echo,
so a per-shot Gaussian draw (``QuasiStaticGaussianNoise``) dephases
Ramsey sequences only.  The residual ambient-field fluctuations that do
dephase second-scale echoes are modeled by ``AmbientFieldNoise``: a
Gaussian process with a fixed internal line spectrum (one tone per
octave between 0.02 Hz and ~328 Hz, equal variance per tone, i.e. 1/f
weighting).  That octave grid makes the echo phase variance equal
(sigma*tau)^2 to better than 4% for wait times between 5 ms and 4 s --
see the constants below -- so a channel rms ``sigma`` produces Gaussian
echo decay with time constant 1/sigma, which is exactly the conversion
used to quote rms fields from measured echo decay times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import channel_generator

TWO_PI = 2.0 * math.pi

# Octave-spaced tone frequencies (Hz) of the ambient-field channel.  With
# equal per-tone variance, sum_k 16 sin^4(w_k tau/4) / (w_k tau)^2 stays
# within [0.969, 1.000] for tau in [5 ms, 4 s] (within [0.995, 1.000] for
# tau in [0.2 s, 4.2 s]), so no further normalization is applied.
AMBIENT_TONE_FREQS_HZ = tuple(0.02 * 2.0 ** k for k in range(15))

WALK_STREAM_CODE = 7  # keys the random-walk increment stream per record


# ---------------------------------------------------------------------------
# Realized per-shot components
# ---------------------------------------------------------------------------

class ConstantOffset:
    """Detuning held constant over the shot."""

    def __init__(self, value: float):
        self.value = value

    def evaluate(self, t):
        return self.value if np.isscalar(t) else np.full_like(np.asarray(t, float), self.value)

    def integral(self, a: float, b: float) -> float:
        return self.value * (b - a)

    def breakpoints(self):
        return ()


class SineTone:
    """amplitude * sin(omega * t + phase)."""

    def __init__(self, amplitude: float, omega: float, phase: float):
        self.amplitude = amplitude
        self.omega = omega
        self.phase = phase

    def evaluate(self, t):
        return self.amplitude * np.sin(self.omega * np.asarray(t, float) + self.phase)

    def integral(self, a: float, b: float) -> float:
        if self.omega == 0.0:
            return self.amplitude * math.sin(self.phase) * (b - a)
        w, p = self.omega, self.phase
        return self.amplitude * (math.cos(w * a + p) - math.cos(w * b + p)) / w

    def breakpoints(self):
        return ()


class MultiTone:
    """Sum of cos/sin tones: sum_k p_k cos(w_k t) + q_k sin(w_k t)."""

    def __init__(self, omegas, cos_amps, sin_amps):
        self.omegas = np.asarray(omegas, float)
        self.cos_amps = np.asarray(cos_amps, float)
        self.sin_amps = np.asarray(sin_amps, float)

    def evaluate(self, t):
        t = np.asarray(t, float)
        wt = np.multiply.outer(t, self.omegas)
        out = np.cos(wt) @ self.cos_amps + np.sin(wt) @ self.sin_amps
        return float(out) if out.ndim == 0 else out

    def integral(self, a: float, b: float) -> float:
        w = self.omegas
        sin_term = (np.sin(w * b) - np.sin(w * a)) / w
        cos_term = (np.cos(w * a) - np.cos(w * b)) / w
        return float(self.cos_amps @ sin_term + self.sin_amps @ cos_term)

    def breakpoints(self):
        return ()


class PiecewiseLinear:
    """Detuning interpolated linearly between (time, value) knots.

    Clamped to the end values outside the knot range.
    """

    def __init__(self, times, values):
        self.times = np.asarray(times, float)
        self.values = np.asarray(values, float)

    def evaluate(self, t):
        out = np.interp(np.asarray(t, float), self.times, self.values)
        return float(out) if out.ndim == 0 else out

    def integral(self, a: float, b: float) -> float:
        # exact trapezoid over the knots falling inside [a, b]
        inner = self.times[(self.times > a) & (self.times < b)]
        grid = np.concatenate(([a], inner, [b]))
        vals = np.interp(grid, self.times, self.values)
        return float(np.trapezoid(vals, grid))

    def breakpoints(self):
        return tuple(self.times)


class DetuningTrajectory:
    """One shot's detuning signal with its realized random draws.

    Evaluation is pure: once built, the trajectory always returns the
    same values, and the draws that produced it are kept for tests and
    for estimator ground-truth comparisons.
    """

    def __init__(self, duration: float, components, draws: dict):
        self.duration = duration
        self.components = tuple(components)
        self.draws = draws

    def evaluate(self, t):
        arr = np.asarray(t, float)
        if np.any(arr < 0.0) or np.any(arr > self.duration):
            raise ValueError(f"t outside [0, {self.duration}]")
        total = sum(c.evaluate(t) for c in self.components)
        return total if self.components else (0.0 if np.isscalar(t) else np.zeros_like(arr))

    def integral(self, a: float, b: float) -> float:
        """Exact integral of the detuning over [a, b] within the shot."""
        if not (0.0 <= a <= b <= self.duration):
            raise ValueError(f"[{a}, {b}] outside [0, {self.duration}]")
        return sum(c.integral(a, b) for c in self.components)

    def breakpoints(self):
        pts = set()
        for c in self.components:
            pts.update(p for p in c.breakpoints() if 0.0 < p < self.duration)
        return tuple(sorted(pts))


def evaluate(trajectory: DetuningTrajectory, t):
    """Total detuning of the trajectory at time t within the shot."""
    return trajectory.evaluate(t)


# ---------------------------------------------------------------------------
# Shot context
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShotContext:
    """Where a shot sits in the experiment's (simulated) wall time.

    ``walk_values`` carries precomputed random-walk channel values for
    this shot, keyed by channel index (see :func:`plan_random_walk`).
    """

    wall_time: float = 0.0
    walk_values: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Noise channel declarations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AcLineNoise:
    """Sinusoidal detuning at the mains frequency.

    ``phase_mode`` decides whether the line phase at sequence start is
    fixed by a trigger or drawn uniformly per shot.  Mains-frequency
    jitter is a per-shot Gaussian draw of the line frequency, held
    constant within the shot.
    """

    delta_ac: float  # modulation depth, rad/s
    omega_ac: float = TWO_PI * 50.0  # rad/s
    phase_mode: str = "free_running"  # or "triggered"
    mains_jitter_sigma: float = 0.0  # Hz

    field_derived = True

    def __post_init__(self):
        if self.delta_ac < 0:
            raise ValueError("delta_ac must be >= 0")
        if self.omega_ac <= 0:
            raise ValueError("omega_ac must be > 0")
        if self.mains_jitter_sigma < 0:
            raise ValueError("mains_jitter_sigma must be >= 0")
        if self.phase_mode not in ("triggered", "free_running"):
            raise ValueError(f"unknown phase_mode {self.phase_mode!r}")

    def realize(self, duration, rng, scale, trigger_phase, context):
        if self.phase_mode == "triggered":
            if trigger_phase is None:
                raise ValueError("triggered ac-line channel needs a trigger_phase")
            chi = float(trigger_phase)
        else:
            chi = float(rng.uniform(0.0, TWO_PI))
        omega = self.omega_ac
        if self.mains_jitter_sigma > 0.0:
            omega = omega + TWO_PI * float(rng.normal(0.0, self.mains_jitter_sigma))
        comp = SineTone(scale * self.delta_ac, omega, chi)
        return comp, {"chi": chi, "omega": omega}


@dataclass(frozen=True)
class QuasiStaticGaussianNoise:
    """Detuning drawn once per shot from N(0, sigma^2) and held constant.

    Dephases Ramsey sequences as exp(-sigma^2 tau^2 / 2); refocused away
    entirely by echo sequences.
    """

    sigma: float  # rad/s

    field_derived = True

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    def realize(self, duration, rng, scale, trigger_phase, context):
        delta = scale * self.sigma * float(rng.standard_normal())
        return ConstantOffset(delta), {"delta": delta}


@dataclass(frozen=True)
class AmbientFieldNoise:
    """Broadband slow field noise surviving echo refocusing.

    Gaussian multi-tone process on the fixed octave grid
    ``AMBIENT_TONE_FREQS_HZ`` with equal variance ``sigma^2`` per tone.
    Calibrated so a spin echo of duration tau accumulates phase variance
    (sigma*tau)^2, i.e. Gaussian echo decay with 1/sqrt(e) time 1/sigma.
    """

    sigma: float  # rad/s, echo-equivalent detuning rms

    field_derived = True

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    def realize(self, duration, rng, scale, trigger_phase, context):
        n = len(AMBIENT_TONE_FREQS_HZ)
        x = rng.standard_normal(n)
        y = rng.standard_normal(n)
        amp = scale * self.sigma
        omegas = TWO_PI * np.asarray(AMBIENT_TONE_FREQS_HZ)
        comp = MultiTone(omegas, amp * x, amp * y)
        return comp, {"cos_coeffs": amp * x, "sin_coeffs": amp * y}


@dataclass(frozen=True)
class RandomWalkDrift:
    """Zero-mean random walk of the detuning across shots.

    The walk advances once per shot slot with variance
    ``diffusion * slot_period``; within a shot the value is constant
    (so echoes refocus it).  With ``persist_across_shots`` the walk
    carries across records in a scenario; otherwise it restarts at zero
    for every record.
    """

    diffusion: float  # (rad/s)^2 per second
    persist_across_shots: bool = True

    field_derived = True

    def __post_init__(self):
        if self.diffusion < 0:
            raise ValueError("diffusion must be >= 0")

    # realization is planned per record (see plan_random_walk); the
    # sampler injects the planned value as a constant offset.


@dataclass(frozen=True)
class PositionGradientNoise:
    """Quasi-static position offset times the splitting gradient."""

    gradient: float = TWO_PI * 8.0e6  # rad/s per meter
    position_sigma: float = 0.0  # meters

    field_derived = False  # mechanical drift, not attenuated by the shield

    def __post_init__(self):
        if self.position_sigma < 0:
            raise ValueError("position_sigma must be >= 0")

    def realize(self, duration, rng, scale, trigger_phase, context):
        offset = self.position_sigma * float(rng.standard_normal())
        return ConstantOffset(self.gradient * offset), {"position": offset}


@dataclass(frozen=True)
class ThermalDriftNoise:
    """Splitting drift following a temperature trajectory.

    The detuning at shot time t is
    ``base_splitting * temp_coefficient * (T(wall + t) - T(0))`` with T
    interpolated linearly between the trajectory knots, so drift
    accumulates across a scenario's wall time.
    """

    base_splitting: float  # rad/s
    temp_coefficient: float = -3.0e-4  # fractional field change per kelvin
    temperature_trajectory: tuple = ((0.0, 0.0),)  # (seconds, kelvin)

    field_derived = False  # magnet thermodynamics, independent of the shield

    def __post_init__(self):
        times = [t for t, _ in self.temperature_trajectory]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("temperature trajectory times must be strictly increasing")
        if not self.temperature_trajectory:
            raise ValueError("temperature trajectory must not be empty")

    def _temperature(self, wall_t):
        times = np.array([t for t, _ in self.temperature_trajectory])
        temps = np.array([T for _, T in self.temperature_trajectory])
        return np.interp(wall_t, times, temps)

    def realize(self, duration, rng, scale, trigger_phase, context):
        t0 = self.temperature_trajectory[0][0]
        ref = self._temperature(t0)
        knot_times = [t for t, _ in self.temperature_trajectory]
        # shot-local knots: window ends plus any trajectory knot inside it
        local = [0.0] + [
            t - context.wall_time
            for t in knot_times
            if 0.0 < t - context.wall_time < duration
        ] + [duration]
        values = [
            self.base_splitting * self.temp_coefficient
            * (float(self._temperature(context.wall_time + t)) - float(ref))
            for t in local
        ]
        return PiecewiseLinear(local, values), {"start_shift": values[0]}


_CHANNEL_TYPES = (
    AcLineNoise,
    QuasiStaticGaussianNoise,
    AmbientFieldNoise,
    RandomWalkDrift,
    PositionGradientNoise,
    ThermalDriftNoise,
)


@dataclass(frozen=True)
class CompositeNoise:
    """Ordered noise channels plus the shield attenuation.

    ``attenuation_db`` (>= 0) scales every field-derived channel's
    amplitude by 10^(-dB/20); mechanical and thermal channels are left
    untouched, mirroring what a shield physically does.
    """

    channels: tuple = ()
    attenuation_db: float = 0.0

    def __post_init__(self):
        if self.attenuation_db < 0:
            raise ValueError("attenuation must be >= 0 dB (amplification is not allowed)")
        object.__setattr__(self, "channels", tuple(self.channels))
        for ch in self.channels:
            if not isinstance(ch, _CHANNEL_TYPES):
                raise TypeError(f"unknown noise channel type {type(ch).__name__}")

    @property
    def amplitude_scale(self) -> float:
        return 10.0 ** (-self.attenuation_db / 20.0)

    def random_walk_channels(self):
        return [
            (i, ch) for i, ch in enumerate(self.channels) if isinstance(ch, RandomWalkDrift)
        ]


def sample_trajectory(
    noise: CompositeNoise,
    duration: float,
    trigger_phase: float | None = None,
    rng_key: tuple = (0,),
    context: ShotContext | None = None,
) -> DetuningTrajectory:
    """Realize one shot's detuning trajectory.

    ``rng_key`` identifies the shot's random stream (see
    :mod:`zeemansim.rng`); each channel derives its own generator from
    it by channel index.  Triggered ac channels take their line phase
    from ``trigger_phase``; free-running ones draw it uniformly.
    """
    if duration <= 0:
        raise ValueError(f"duration must be > 0, got {duration}")
    if context is None:
        context = ShotContext()
    scale = noise.amplitude_scale
    components = []
    draws = {}
    for index, channel in enumerate(noise.channels):
        rng = channel_generator(rng_key, index)
        ch_scale = scale if channel.field_derived else 1.0
        if isinstance(channel, RandomWalkDrift):
            value = ch_scale * context.walk_values.get(index, 0.0)
            comp, ch_draws = ConstantOffset(value), {"delta": value}
        else:
            comp, ch_draws = channel.realize(
                duration, rng, ch_scale, trigger_phase, context
            )
        components.append(comp)
        draws[f"{type(channel).__name__.lower()}[{index}]"] = ch_draws
    return DetuningTrajectory(duration, components, draws)


def plan_random_walk(
    channel: RandomWalkDrift,
    master_seed: int,
    record_index: int,
    channel_index: int,
    n_slots: int,
    slot_period: float,
    start_value: float = 0.0,
) -> np.ndarray:
    """Per-slot walk values for one record, deterministic in the seed.

    Slot m holds the walk value at the start of shot m; increments have
    variance ``diffusion * slot_period``.
    """
    rng = channel_generator(
        (int(master_seed), int(record_index), WALK_STREAM_CODE, int(channel_index)), 0
    )
    if channel.diffusion == 0.0 or n_slots == 0:
        return np.full(n_slots, start_value)
    steps = rng.normal(0.0, math.sqrt(channel.diffusion * slot_period), size=n_slots)
    values = start_value + np.concatenate(([0.0], np.cumsum(steps[:-1])))
    return values


def walk_end_variance_step(channel: RandomWalkDrift, record_duration: float) -> float:
    """Variance the walk gains over one record, for cross-record chaining."""
    return channel.diffusion * record_duration
