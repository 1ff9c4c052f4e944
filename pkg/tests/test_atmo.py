"""Tests for the pressure formula and the built-in parameter records."""

import numpy as np
import pytest

from satrf import atmo

# frozen scalar evaluations of 1013.25 * (1 - 0.0065 z / 288.15) ** 5.31
P_3000 = 698.4315765122667
P_9000 = 303.6718726383532


class TestPressure:
    def test_sea_level_exact(self):
        assert atmo.pressure_at_altitude(0.0) == 1013.25

    def test_3000m(self):
        assert abs(atmo.pressure_at_altitude(3000.0) - P_3000) < 0.1

    def test_9000m(self):
        assert abs(atmo.pressure_at_altitude(9000.0) - P_9000) < 0.1

    def test_strictly_decreasing_to_9000(self):
        zs = np.linspace(0.0, 9000.0, 181)
        ps = [atmo.pressure_at_altitude(z) for z in zs]
        assert all(a > b for a, b in zip(ps, ps[1:]))

    @pytest.mark.parametrize("z", [-1.0, 44330.0, 50000.0])
    def test_out_of_range(self, z):
        with pytest.raises(atmo.AltitudeError):
            atmo.pressure_at_altitude(z)

    def test_just_inside_ceiling(self):
        assert atmo.pressure_at_altitude(44329.999) >= 0.0


class TestParams:
    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            atmo.AtmoParams(u_o3=-0.1, u_h2o=1.0, tau_a=0.1, p_a=1000.0,
                            adjacency_radius=1.0)

    def test_records_exact(self):
        records = atmo.builtin_records()
        assert [date for date, _ in records] == ["23/04/2013", "29/06/2013"]
        first, second = records[0][1], records[1][1]
        assert (first.u_o3, first.u_h2o, first.tau_a, first.p_a,
                first.adjacency_radius) == (0.3220, 1.7333, 0.4665, 783.0, 1.0)
        assert (second.u_o3, second.u_h2o, second.tau_a, second.p_a,
                second.adjacency_radius) == (0.2969, 2.5625, 0.0980, 783.0, 1.0)

    def test_records_fresh_copy(self):
        assert atmo.builtin_records() == atmo.builtin_records()
