"""Physical constants and conversions between field, splitting, and dephasing.

All frequencies inside the package are angular frequencies (rad/s).
Conversion to and from Hz happens only at I/O boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PhysicalConstants:
    """Constants entering the Zeeman-qubit conversions.

    The g factor defaults to exactly 2.0, which is the coefficient implied
    by the splitting/field numbers used throughout; the CODATA electron
    value (2.00231930436) can be selected for precision studies.
    """

    bohr_magneton: float = 9.2740100783e-24  # J/T
    hbar: float = 1.054571817e-34  # J*s
    electron_g_factor: float = 2.0

    def __post_init__(self):
        if self.bohr_magneton <= 0 or self.hbar <= 0 or self.electron_g_factor <= 0:
            raise ValueError("all physical constants must be strictly positive")
        if not 1.9 <= self.electron_g_factor <= 2.1:
            raise ValueError(
                f"electron g factor {self.electron_g_factor} outside [1.9, 2.1]"
            )


DEFAULT_CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class FieldPoint:
    """Magnetic field magnitude plus the local splitting gradient.

    ``gradient`` is the spatial derivative of the qubit splitting in
    rad/s per meter.
    """

    magnitude: float  # tesla
    gradient: float = 0.0  # rad/s per meter

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValueError("field magnitude must be >= 0")


def zeeman_splitting(field_tesla: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Qubit splitting g*mu_B*B/hbar in rad/s for a field B in tesla."""
    if field_tesla < 0:
        raise ValueError(f"field must be >= 0, got {field_tesla}")
    return constants.electron_g_factor * constants.bohr_magneton * field_tesla / constants.hbar


def rms_field_from_dephasing(tau_d: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """RMS field fluctuation (tesla) implied by a Gaussian 1/sqrt(e) time.

    Inverts the quasi-static dephasing relation: a detuning with rms
    sigma = 1/tau_d corresponds to a field rms of hbar/(2*mu_B*tau_d).
    """
    if tau_d <= 0:
        raise ValueError(f"dephasing time must be > 0, got {tau_d}")
    return constants.hbar / (2.0 * constants.bohr_magneton * tau_d)


def dephasing_sigma_from_field(sigma_b: float, constants: PhysicalConstants = DEFAULT_CONSTANTS) -> float:
    """Detuning rms (rad/s) produced by a field rms ``sigma_b`` in tesla.

    With the default g = 2 this is the exact inverse of
    :func:`rms_field_from_dephasing` via tau_d = 1/sigma.
    """
    if sigma_b < 0:
        raise ValueError(f"field rms must be >= 0, got {sigma_b}")
    return constants.electron_g_factor * constants.bohr_magneton * sigma_b / constants.hbar
