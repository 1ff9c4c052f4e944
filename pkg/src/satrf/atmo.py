"""Barometric pressure and atmospheric-correction parameter records.

Only the pieces needed to make the correction inputs checkable: the pressure
formula and the two built-in parameter records for the Lanzhou acquisition
dates.  Full radiative-transfer correction is out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass

# the base term 1 - 0.0065 z / 288.15 reaches zero at this altitude
MAX_ALTITUDE_M = 288.15 / 0.0065  # 44330.77 m


class AltitudeError(ValueError):
    pass


@dataclass(frozen=True)
class AtmoParams:
    """Ozone (cm-atm), water vapour (g/cm^2), aerosol optical thickness,
    surface pressure (hPa) and adjacency radius (km)."""

    u_o3: float
    u_h2o: float
    tau_a: float
    p_a: float
    adjacency_radius: float

    def __post_init__(self):
        for name in ("u_o3", "u_h2o", "tau_a", "p_a", "adjacency_radius"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"AtmoParams.{name} must be non-negative")


def pressure_at_altitude(z_m: float) -> float:
    """Surface pressure in hPa at altitude z_m metres, 0 <= z < 44330."""
    if not 0.0 <= z_m < 44330.0:
        raise AltitudeError(f"altitude {z_m} m outside [0, 44330)")
    return 1013.25 * (1.0 - 0.0065 * z_m / 288.15) ** 5.31


def builtin_records() -> list[tuple[str, AtmoParams]]:
    """Correction parameters for the two built-in acquisition epochs."""
    return [
        ("23/04/2013", AtmoParams(u_o3=0.3220, u_h2o=1.7333, tau_a=0.4665,
                                  p_a=783.0, adjacency_radius=1.0)),
        ("29/06/2013", AtmoParams(u_o3=0.2969, u_h2o=2.5625, tau_a=0.0980,
                                  p_a=783.0, adjacency_radius=1.0)),
    ]
