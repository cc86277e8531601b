import math

import numpy as np
import pytest

from hypervlasov.dhgm import (AdjacencyTensor, CoverageError, PiecewiseAtomicDHGM, PiecewiseAtomicField,
                              UniformDHGM, complete_adjacency, d_alpha, d_infinity, discretize_dhgm,
                              discretize_h, discretize_initial, dumps_dhgm, from_adjacency_atomic,
                              from_adjacency_density, gallery, gallery_names, in_triangle, loads_dhgm,
                              make_partition, materialize, representation_gap, ring_adjacency)
from hypervlasov.measure_core import AtomicMeasure, Space, bl_distance, dirac, mass, zero_measure

I = Space.interval()
C = Space.torus(1)


def field_of(part, target, dp):
    n = dp.n
    ms = [AtomicMeasure(target, dp.points[i * n:(i + 1) * n], np.full(n, dp.weights[i] / n))
          for i in range(part.m)]
    return PiecewiseAtomicField(part, target, ms)


# ------------------------------------------------------------ partitions

def test_partition_of_unit_interval():
    p = make_partition(I, 4)
    assert p.lower[:, 0].tolist() == [0, 0.25, 0.5, 0.75]
    assert p.anchors[:, 0].tolist() == [0.125, 0.375, 0.625, 0.875]
    # half-open cells, last one closed
    assert p.locate([0.25, 0.999, 1.0, 0.0]).tolist() == [1, 3, 3, 0]
    assert p.locate([1.5]).tolist() == [-1]
    assert p.mu_masses.tolist() == pytest.approx([0.25] * 4)


def test_partition_torus_and_refinement():
    p = make_partition(C, 3)
    assert np.diff(p.edges[0]).tolist() == pytest.approx([1 / 3] * 3)
    assert p.locate([1.1]).tolist() == [0]
    d = [make_partition(I, m).max_diameter() for m in (2, 4, 8)]
    assert d[1] == pytest.approx(d[0] / 2) and d[2] == pytest.approx(d[1] / 2)
    r = make_partition(I, 2).refine(make_partition(I, 3))
    assert r.m == 4
    with pytest.raises(ValueError):
        make_partition(Space.box([0, 0], [1, 1]), 8)


# -------------------------------------------------------------- adjacency

def test_ring_atomic_representation_n4():
    eta = from_adjacency_atomic(ring_adjacency(4), I)
    f = eta.fiber([0.1])
    assert f.points[:, 0].tolist() == pytest.approx([3 / 8, 7 / 8])
    assert f.weights.tolist() == pytest.approx([0.25, 0.25])


def test_second_ring_layer_has_two_edges_per_node():
    W = ring_adjacency(7, layer=2)
    rows = W.rows()
    assert all(len(r) == 2 for r in rows)
    for i, row in enumerate(rows, start=1):
        for (j, k), a in row:
            assert (i - j) % 7 in (1, 6) and (j - k) % 7 in (1, 6) and k != i


def test_empty_and_complete_tensors():
    eta = from_adjacency_atomic(AdjacencyTensor(2, 3), I)
    assert all(len(eta.fiber([x])) == 0 for x in (0.1, 0.5, 0.9))
    eta = from_adjacency_atomic(complete_adjacency(2, 2), I)
    f = eta.fiber([0.1])
    assert f.points[:, 0].tolist() == [0.75] and f.weights.tolist() == [0.5]
    eta = from_adjacency_atomic(complete_adjacency(2, 2, loops=True), I)
    assert eta.fiber([0.1]).points[:, 0].tolist() == [0.25, 0.75]


def test_adjacency_text_round_trip(tmp_path):
    W = ring_adjacency(5, layer=2).scaled(0.5)
    path = tmp_path / "w.txt"
    path.write_text(W.dumps())
    back = AdjacencyTensor.read(str(path))
    assert back.k == 3 and back.N == 5
    assert back.entries == W.entries
    with pytest.raises(ValueError):
        AdjacencyTensor.loads("# k=2 N=2\n1 3 1.0\n")


def test_density_representation_masses():
    c = 0.7
    W = complete_adjacency(4, 2, weight=c, loops=True)
    eta = from_adjacency_density(W, I)
    for x in (0.05, 0.4, 0.99):
        assert mass(eta.fiber([x])) == pytest.approx(c)
    ring = from_adjacency_density(ring_adjacency(4), I)
    assert mass(ring.fiber([0.3])) == pytest.approx(0.5)


def test_density_quadrature_refinement():
    W = ring_adjacency(4)
    coarse = from_adjacency_density(W, I, 1)
    fine = from_adjacency_density(W, I, 16)
    h = 0.25
    for x in (0.1, 0.6):
        # each unit of mass moves at most h / 2
        assert bl_distance(coarse.fiber([x]), fine.fiber([x])) <= mass(fine.fiber([x])) * h / 2 + 1e-12


# -------------------------------------------------------- representation gap

def test_gap_single_node():
    # without the loop both representations vanish
    assert representation_gap(AdjacencyTensor(2, 1), I).value == 0.0
    # with it: uniform mass on [0, 1] against a unit atom at 1/2, not zero
    g = representation_gap(AdjacencyTensor(2, 1, {(1, 1): 1.0}), I)
    assert g.value == pytest.approx(16 / 79, abs=1e-10)
    assert g.within_bound and g.bound == pytest.approx(0.25)


@pytest.mark.parametrize("N", [8, 16, 32])
def test_gap_within_bound(N):
    for W in (ring_adjacency(N), ring_adjacency(N, normalized=True), ring_adjacency(N, 2, normalized=True),
              complete_adjacency(N, 2, 0.3)):
        g = representation_gap(W, C if W is not None else I)
        assert g.within_bound


def test_gap_normalized_weights_rate_one():
    Ns = [8, 16, 32, 64]
    vals = [representation_gap(ring_adjacency(N, normalized=True), C).value for N in Ns]
    slope = np.polyfit(np.log(Ns), np.log(vals), 1)[0]
    assert -1.2 <= slope <= -0.8


def test_gap_literal_unit_weights_rate_two():
    # recorded: without the N^(k-1) scaling both the gap and its bound fall like N^-2
    Ns = [8, 16, 32]
    vals = [representation_gap(ring_adjacency(N), C).value for N in Ns]
    assert vals == pytest.approx([0.00759, 0.00195, 0.000485], rel=2e-2)
    slope = np.polyfit(np.log(Ns), np.log(vals), 1)[0]
    assert slope == pytest.approx(-2.0, abs=0.1)


# ---------------------------------------------------------------- metrics

def test_d_infinity_basics():
    one = UniformDHGM(2, I, lambda x: dirac(I, x))
    two = UniformDHGM(2, I, lambda x: dirac(I, x, 2.0))
    assert d_infinity(one, one) == 0.0
    v = d_infinity(one, two)
    assert float(v) == pytest.approx(1.0)
    assert not v.exact
    with pytest.raises(ValueError):
        d_infinity(one, gallery("complete", k=3, resolution=2))


def test_d_infinity_exact_on_common_refinement():
    rng = np.random.default_rng(4)
    p2, p3 = make_partition(I, 2), make_partition(I, 3)
    a = PiecewiseAtomicDHGM(2, p2, [AtomicMeasure(I, rng.random((3, 1)), rng.random(3)) for _ in range(2)])
    b = PiecewiseAtomicDHGM(2, p3, [AtomicMeasure(I, rng.random((3, 1)), rng.random(3)) for _ in range(3)])
    v = d_infinity(a, b)
    assert v.exact
    xs = np.linspace(0, 1, 301)
    brute = max(bl_distance(a.fiber([x]), b.fiber([x])) for x in xs)
    assert float(v) == pytest.approx(brute, abs=1e-12)


def test_ring_limit_audit():
    ring = gallery("ring", layer=1)
    vals = []
    for N in (8, 16, 32, 64):
        eta = from_adjacency_atomic(ring_adjacency(N, normalized=True), C)
        vals.append(float(d_infinity(eta, ring)))
    assert all(b < a for a, b in zip(vals, vals[1:]))


class _Traj:
    def __init__(self, times, fields):
        self.times = np.asarray(times)
        self._f = fields

    def field(self, r):
        return self._f[r]


def test_d_alpha_properties():
    p = make_partition(I, 2)
    mk = lambda s: PiecewiseAtomicField(p, I, [dirac(I, 0.2 + s), dirac(I, 0.6 + s)])
    t1 = _Traj([0, 0.5, 1], [mk(0), mk(0.1), mk(0.2)])
    t2 = _Traj([0, 0.5, 1], [mk(0.05), mk(0.05), mk(0.05)])
    d0 = d_alpha(t1, t2, 0.0)
    assert d_alpha(t1, t1, 0.0) == 0.0
    for a in (0.5, 2.0, 50.0):
        assert d_alpha(t1, t2, a) <= d0
    at0 = float(d_infinity(t1.field(0), t2.field(0)))
    assert d_alpha(t1, t2, 200.0) == pytest.approx(at0)
    with pytest.raises(ValueError):
        d_alpha(t1, _Traj([0, 1], [mk(0), mk(0)]))


# --------------------------------------------------------- discretization

def test_discretize_constant_mass():
    nu0 = UniformDHGM(2, I, lambda x: dirac(I, 0.5 * x))
    p = make_partition(I, 4)
    dp = discretize_initial(nu0, p, 3)
    assert dp.weights.tolist() == pytest.approx([1.0] * 4)
    # points sit near g(anchor) = anchor / 2
    pts = dp.points.reshape(4, 3)
    assert np.abs(pts.mean(axis=1) - 0.5 * p.anchors[:, 0]).max() < 0.02
    with pytest.raises(ValueError):
        discretize_initial(nu0, p, 0)


def test_discretize_initial_audit_decreasing():
    offs = (np.arange(32) + 0.5) / 32 * 0.5

    def fn(x):
        return AtomicMeasure(I, 0.25 * x[0] + offs, np.full(32, 1 / 32))
    nu0 = UniformDHGM(2, I, fn)
    vals = []
    for m in (2, 4, 8, 16):
        p = make_partition(I, m)
        vals.append(float(d_infinity(field_of(p, I, discretize_initial(nu0, p, m)), nu0)))
    assert all(b < a + 1e-6 for a, b in zip(vals, vals[1:]))
    assert vals[-1] < vals[0]


def test_discretizer_fixed_point():
    rng = np.random.default_rng(1)
    p = make_partition(I, 4)
    tgt = I.power(2)
    ms = [AtomicMeasure(tgt, rng.random((3, 2)), np.full(3, 0.4)) for _ in range(4)]
    eta = PiecewiseAtomicDHGM(3, p, ms)
    dp = discretize_dhgm(eta, p, 3)
    again = PiecewiseAtomicDHGM(3, p, field_of(p, tgt, dp).measures)
    assert float(d_infinity(again, eta)) <= 1e-10


def test_complete_hypergraphon_weights():
    eta = gallery("complete", k=3, resolution=8)
    p = make_partition(I, 4)
    dp = discretize_dhgm(eta, p, 8)
    assert dp.weights.tolist() == pytest.approx([1.0] * 4)
    # points spread over the square
    pts = dp.points
    assert pts.min() < 0.3 and pts.max() > 0.7


def test_circular_atoms_recovered():
    eta = gallery("circular", k=3)
    p = make_partition(C, 8)
    dp = discretize_dhgm(eta, p, 4)
    assert dp.weights.tolist() == pytest.approx([4.0] * 8)
    pts = dp.points[:4]
    # four distinct atoms offset by 1/4 and 3/4 from the cell's mean head
    assert len(np.unique(np.round(pts, 9), axis=0)) == 4


def test_mass_consistency():
    p = make_partition(I, 8)
    for eta, total in ((gallery("simplex", k=3), 1.0), (gallery("complete", k=2), 1.0)):
        # midpoint rule on 8 * 128 nodes: error for 3(1-x)^2 is 6 / (24 * 1024^2) < 1e-6
        dp = discretize_dhgm(eta, p, 4, quad=128)
        assert float(np.dot(dp.weights, p.mu_masses)) == pytest.approx(total, abs=1e-6)


def test_discretize_h():
    p = make_partition(I, 4)
    hm = discretize_h(lambda t, x, phi: np.broadcast_to(x, np.shape(phi)), p)
    phis = np.zeros((3, 1))
    assert hm.gap(0.0, phis) == pytest.approx(1 / 8)
    gaps = [discretize_h(lambda t, x, phi: np.sin(3 * x) + 0 * phi, make_partition(I, m)).gap(0.0, phis)
            for m in (4, 8, 16)]
    assert gaps[1] == pytest.approx(gaps[0] / 2, rel=0.1)
    assert gaps[2] == pytest.approx(gaps[1] / 2, rel=0.1)
    const = discretize_h(lambda t, x, phi: 2 * phi, p)
    assert const.gap(0.0, np.ones((2, 1))) == 0.0
    with pytest.raises(CoverageError):
        hm(0.0, np.array([[1.5]]), phis[:1])


# ----------------------------------------------------------------- gallery

def test_gallery_masses():
    rng = np.random.default_rng(7)
    xs = rng.random(100)
    for layer in (1, 2):
        ring = gallery("ring", layer=layer)
        assert all(mass(ring.fiber([x])) == pytest.approx(2.0) for x in xs)
    assert gallery("ring", layer=2).fiber([0.3]).points.tolist() == [[0.3, 0.3]]
    for k in (2, 3, 4):
        circ = gallery("circular", k=k)
        assert all(mass(circ.fiber([x])) == pytest.approx(2.0 ** (k - 1)) for x in xs)
    comp = gallery("complete", k=3)
    assert all(mass(comp.fiber([x])) == pytest.approx(1.0) for x in xs)


def test_gallery_triangle():
    tri = gallery("triangle")
    x = np.array([0.2, 0.1])
    assert in_triangle(x, 0.5)
    f = tri.fiber(x)
    assert f.points[0].tolist() == pytest.approx([0.7, 0.1, 0.45, 0.1 + math.sqrt(3) / 4])
    assert len(tri.fiber([0.9, 0.5])) == 0


def test_gallery_unknown_and_listing():
    assert "ring" in gallery_names()
    with pytest.raises(ValueError):
        gallery("nope")
    with pytest.raises(ValueError):
        gallery("spherical", d=3)


def test_dhgm_file_round_trip():
    eta = materialize(gallery("circular", k=3), make_partition(C, 4))
    text = dumps_dhgm(eta)
    back = loads_dhgm(text)
    assert back.k == 3
    assert float(d_infinity(back, eta)) == 0.0
    assert dumps_dhgm(back) == text
    with pytest.raises(ValueError):
        dumps_dhgm(gallery("ring"))


def test_coverage_error_outside_partition():
    p = make_partition(I, 2)
    fld = PiecewiseAtomicField(p, I, [zero_measure(I)] * 2)
    with pytest.raises(CoverageError):
        fld.fiber([2.0])
