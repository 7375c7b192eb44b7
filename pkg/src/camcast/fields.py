"""Registry of the COSMO-1 surface output fields that enter the weather descriptor.

The descriptor layout is fixed across the whole toolkit: two cyclic
time-of-day components, two cyclic day-of-year components, then the NWP
fields in canonical (lexicographic by abbreviation) order.
"""

from __future__ import annotations

# (abbreviation, unit, long name) for every NWP field the descriptor carries.
COSMO_FIELDS: tuple[tuple[str, str, str], ...] = (
    ("ALB_RAD", "%", "Surface albedo for visible range, diffuse"),
    ("ASOB_S", "W/m^2", "Net short-wave radiation flux at surface"),
    ("ASWDIFD_S", "W/m^2", "Diffuse downward short-wave radiation at the surface"),
    ("ASWDIFU_S", "W/m^2", "Diffuse upward short-wave radiation at the surface"),
    ("ASWDIR_S", "W/m^2", "Direct downward short-wave radiation at the surface"),
    ("ATHB_S", "W/m^2", "Net long-wave radiation flux at surface"),
    ("CLCH", "%", "Cloud area fraction in high troposphere"),
    ("CLCM", "%", "Cloud area fraction in medium troposphere"),
    ("CLCL", "%", "Cloud area fraction in low troposphere"),
    ("CLCT", "%", "Total cloud area fraction"),
    ("D_TD_2M", "K", "2 m dew point depression"),
    ("DD_10M", "deg", "10 m wind direction"),
    ("DURSUN", "s", "Duration of sunshine"),
    ("FF_10M", "m/s", "10 m wind speed"),
    ("GLOB", "W/m^2", "Downward shortwave radiation flux at surface"),
    ("H_SNOW", "m", "Snow depth"),
    ("HPBL", "m", "Height of the planetary boundary layer"),
    ("PS", "Pa", "Surface pressure (not reduced)"),
    ("RELHUM_2M", "%", "2 m relative humidity (with respect to water)"),
    ("T_2M", "K", "2 m air temperature"),
    ("TD_2M", "K", "2 m dew point temperature"),
    ("TOT_PREC", "kg/m^2", "Total precipitation"),
    ("TOT_RAIN", "kg/m^2", "Total precipitation in rain"),
    ("TOT_SNOW", "kg/m^2", "Total precipitation in snow"),
    ("U_10M", "m/s", "10 m grid eastward wind"),
    ("V_10M", "m/s", "10 m grid northward wind"),
    ("VMAX_10M", "m/s", "Maximum 10 m wind speed"),
)

# Canonical vector layout: cyclic encodings first, then fields sorted by
# abbreviation (plain code-point order, so e.g. DD_10M sorts before D_TD_2M).
FIELD_ORDER: tuple[str, ...] = tuple(sorted(abbr for abbr, _, _ in COSMO_FIELDS))
FIELD_UNITS: dict[str, str] = {abbr: unit for abbr, unit, _ in COSMO_FIELDS}
FIELD_NAMES: dict[str, str] = {abbr: name for abbr, _, name in COSMO_FIELDS}

N_FIELDS: int = len(FIELD_ORDER)
N_CYCLIC: int = 4  # time-of-day sin/cos, day-of-year sin/cos
DESCRIPTOR_DIM: int = N_CYCLIC + N_FIELDS


def field_index(abbreviation: str) -> int:
    """Position of an NWP field inside the descriptor vector."""
    return N_CYCLIC + FIELD_ORDER.index(abbreviation)
