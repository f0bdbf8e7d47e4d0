import math

import numpy as np
import pytest

from upcyclenet.geo import (
    EARTH_RADIUS_KM,
    build_leg_matrices,
    haversine_km,
    node_distance_km,
)
from upcyclenet.instance import LEGS, Node
from upcyclenet.scenario import single_chain_instance


def greatcircle_oracle_km(lat1, lon1, lat2, lon2):
    """Independent reference: angle between unit vectors on the sphere."""
    def unit(lat, lon):
        phi, lam = math.radians(lat), math.radians(lon)
        return np.array([
            math.cos(phi) * math.cos(lam),
            math.cos(phi) * math.sin(lam),
            math.sin(phi),
        ])

    u, v = unit(lat1, lon1), unit(lat2, lon2)
    # atan2 form is numerically stable for both small and large angles
    angle = math.atan2(np.linalg.norm(np.cross(u, v)), float(np.dot(u, v)))
    return EARTH_RADIUS_KM * angle


def random_latlon(rng, n):
    lats = rng.uniform(-89.9, 89.9, size=n)
    lons = rng.uniform(-180.0, 180.0, size=n)
    return list(zip(lats.tolist(), lons.tolist()))


def test_known_city_pair_berlin_munich():
    d = haversine_km(52.5200, 13.4050, 48.1351, 11.5820)
    assert abs(d - 504.2) < 1.5


def test_matches_vector_geometry_oracle():
    rng = np.random.default_rng(11)
    pts = random_latlon(rng, 40)
    for (lat1, lon1), (lat2, lon2) in zip(pts[:-1], pts[1:]):
        got = haversine_km(lat1, lon1, lat2, lon2)
        want = greatcircle_oracle_km(lat1, lon1, lat2, lon2)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-6)


def test_zero_and_antipodal():
    assert haversine_km(37.0, -5.0, 37.0, -5.0) == 0.0
    half = math.pi * EARTH_RADIUS_KM
    assert haversine_km(0.0, 0.0, 0.0, 180.0) == pytest.approx(half, rel=1e-12)


def test_bitwise_symmetry():
    rng = np.random.default_rng(12)
    pts = random_latlon(rng, 60)
    for (lat1, lon1), (lat2, lon2) in zip(pts[::2], pts[1::2]):
        assert haversine_km(lat1, lon1, lat2, lon2) == haversine_km(lat2, lon2, lat1, lon1)


def test_triangle_inequality():
    rng = np.random.default_rng(13)
    pts = random_latlon(rng, 30)
    for a, b, c in zip(pts[::3], pts[1::3], pts[2::3]):
        ab = haversine_km(*a, *b)
        bc = haversine_km(*b, *c)
        ac = haversine_km(*a, *c)
        assert ac <= ab + bc + 1e-9


def test_node_distance_applies_circuity():
    a = Node("a", 50.0, 8.0)
    b = Node("b", 51.0, 9.0)
    base = node_distance_km(a, b, 1.0)
    assert node_distance_km(a, b, 1.4) == pytest.approx(1.4 * base, rel=1e-15)
    with pytest.raises(ValueError):
        node_distance_km(a, b, 0.9)


def test_node_distance_rejects_nan():
    a = Node("a", float("nan"), 8.0)
    b = Node("b", 51.0, 9.0)
    with pytest.raises(ValueError):
        node_distance_km(a, b, 1.0)


def test_leg_matrices_shapes_and_values():
    inst = single_chain_instance()
    mats = build_leg_matrices(inst)
    assert tuple(m.leg for m in mats) == tuple(leg for leg, _, _ in LEGS)
    for m in mats:
        assert m.km.shape == (len(m.origin_ids), len(m.dest_ids))
        assert not m.km.flags.writeable
        assert np.all(np.isfinite(m.km))
    # each hand-instance leg spans 10 km by construction
    for m in mats:
        assert m.km[0, 0] == pytest.approx(10.0, rel=1e-9)


def test_matrix_csv_three_decimals():
    inst = single_chain_instance()
    m = build_leg_matrices(inst)[0]
    lines = m.to_csv().strip().splitlines()
    assert lines[0] == "origin,destination,km"
    origin, dest, value = lines[1].split(",")
    assert (origin, dest) == ("src1", "cf1")
    assert value == f"{m.km[0, 0]:.3f}"
