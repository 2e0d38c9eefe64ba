"""Unit conventions.

Internal units everywhere: angular frequency in rad/ps, time in ps, rates in
1/ps.  Spectroscopic inputs in wavenumbers (cm^-1) are converted on load with
1 cm^-1 = 2*pi*c = 0.188365... rad/ps.  Laser field strengths follow the
spectroscopic convention 1/(Debye*cm): the product (dipole [D]) * (field
[D^-1 cm^-1]) is an interaction energy in cm^-1.
"""

import math

SPEED_OF_LIGHT_CM_PER_PS = 0.0299792458

# 1 cm^-1 expressed as an angular frequency in rad/ps
CM1_TO_RAD_PER_PS = 2.0 * math.pi * SPEED_OF_LIGHT_CM_PER_PS

FS_TO_PS = 1.0e-3

KNOWN_ENERGY_UNITS = ("cm^-1", "rad/ps")


def energy_to_rad_per_ps(value, units):
    """Convert an energy-like quantity (scalar or array) to rad/ps."""
    if units == "rad/ps":
        return value
    if units == "cm^-1":
        return value * CM1_TO_RAD_PER_PS
    raise ValueError(f"unknown energy units {units!r}; expected one of {KNOWN_ENERGY_UNITS}")
