"""Directed hypergraph measures x -> eta^x on X^(k-1) and their discretization.

Three representations share the ``fiber(x)`` interface: closed-form
callables, piecewise-atomic fields on a grid partition, and the piecewise
constant density of a finite adjacency tensor.  Fibers are AtomicMeasures, so
the uniform flat metric d_inf reduces to per-fiber LPs.
"""
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .measure_core import (AtomicMeasure, Space, UniformMeasure, bl_distance, dirac, mass,
                           quantize, zero_measure, _low_discrepancy)

QUAD_POINTS = 32
EVAL_POINTS = 256


class CoverageError(ValueError):
    """A point that should lie in the partitioned domain falls in no cell."""


# ----------------------------------------------------------------- partitions

class Partition:
    """Product grid of half-open cells on a box or torus, last cell closed.

    ``edges`` holds the breakpoints per axis; cells are numbered in C order.
    The reference measure is normalized Lebesgue measure on the domain.
    """

    def __init__(self, domain, edges):
        if domain.kind not in ("box", "torus", "finite-grid"):
            raise ValueError(f"grid partitions need a box or torus domain, got {domain.kind}")
        self.domain = domain
        self.edges = tuple(np.asarray(e, dtype=float) for e in edges)
        if len(self.edges) != domain.dim:
            raise ValueError("one edge array per axis is required")
        self.shape = tuple(len(e) - 1 for e in self.edges)
        if min(self.shape) < 1:
            raise ValueError("empty partition")
        lo = [e[:-1] for e in self.edges]
        hi = [e[1:] for e in self.edges]
        self.lower = _grid(lo)
        self.upper = _grid(hi)
        self.anchors = 0.5 * (self.lower + self.upper)
        vol = np.prod(self.upper - self.lower, axis=1)
        self.mu_masses = vol / vol.sum()

    @property
    def m(self):
        return int(np.prod(self.shape))

    def __len__(self):
        return self.m

    def __eq__(self, other):
        return (isinstance(other, Partition) and self.domain == other.domain
                and all(np.array_equal(a, b) for a, b in zip(self.edges, other.edges)))

    def __hash__(self):
        return hash((self.domain, tuple(e.tobytes() for e in self.edges)))

    def diameters(self):
        side = self.upper - self.lower
        if self.domain.kind == "torus":
            side = np.minimum(side, self.domain.period / 2)
        return side.sum(axis=1)

    def max_diameter(self):
        return float(self.diameters().max())

    def locate(self, points, tol=1e-12):
        """Cell index of each point, -1 for points outside the domain."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.domain.dim)
        pts = self.domain.wrap(pts)
        idx = np.zeros(len(pts), dtype=int)
        ok = np.ones(len(pts), dtype=bool)
        for a, e in enumerate(self.edges):
            x = pts[:, a]
            ok &= (x >= e[0] - tol) & (x <= e[-1] + tol)
            ia = np.clip(np.searchsorted(e, x, side="right") - 1, 0, len(e) - 2)
            idx = idx * (len(e) - 1) + ia
        idx[~ok] = -1
        return idx

    def quadrature_nodes(self, i, q=QUAD_POINTS):
        """Midpoint subgrid of cell i with about q nodes (q^(1/d) per axis)."""
        d = self.domain.dim
        per = max(1, int(round(q ** (1.0 / d))))
        lo, hi = self.lower[i], self.upper[i]
        axes = [lo[a] + (np.arange(per) + 0.5) / per * (hi[a] - lo[a]) for a in range(d)]
        return _grid(axes)

    def refine(self, other):
        """Common refinement: union of breakpoints on every axis."""
        if self.domain != other.domain:
            raise ValueError("partitions live on different domains")
        edges = [np.unique(np.concatenate([a, b])) for a, b in zip(self.edges, other.edges)]
        return Partition(self.domain, edges)

    def to_dict(self):
        return {"domain": self.domain.to_dict(), "edges": [e.tolist() for e in self.edges]}

    @classmethod
    def from_dict(cls, d):
        return cls(Space.from_dict(d["domain"]), d["edges"])


def _grid(axes):
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, len(axes))


def make_partition(domain, m):
    """Equal-measure grid with m cells; in d dimensions m must be a d-th power."""
    if m < 1:
        raise ValueError("m must be >= 1")
    d = domain.dim
    per = int(round(m ** (1.0 / d)))
    if per ** d != m:
        raise ValueError(f"m={m} is not a perfect power of the dimension {d}")
    edges = [np.linspace(domain.lower[a], domain.upper[a], per + 1) for a in range(d)]
    return Partition(domain, edges)


# --------------------------------------------------------------- adjacency

class AdjacencyTensor:
    """Sparse order-k tensor (i, j_1, ..., j_{k-1}) -> a > 0 with 1-based indices."""

    def __init__(self, k, N, entries=None):
        if k < 2:
            raise ValueError("order must be >= 2")
        self.k = int(k)
        self.N = int(N)
        self.entries = {}
        for key, w in (entries or {}).items():
            self.add(key, w)

    def add(self, key, weight):
        key = tuple(int(v) for v in key)
        if len(key) != self.k:
            raise ValueError(f"edge {key} does not have {self.k} indices")
        if any(v < 1 or v > self.N for v in key):
            raise ValueError(f"edge {key} has an index outside 1..{self.N}")
        if weight < 0:
            raise ValueError("adjacency weights must be nonnegative")
        if weight > 0:
            self.entries[key] = self.entries.get(key, 0.0) + float(weight)

    def row_sums(self):
        out = np.zeros(self.N)
        for key, w in self.entries.items():
            out[key[0] - 1] += w
        return out

    def rows(self):
        """Edges grouped by head index, sorted for deterministic iteration."""
        out = [[] for _ in range(self.N)]
        for key in sorted(self.entries):
            out[key[0] - 1].append((key[1:], self.entries[key]))
        return out

    def scaled(self, c):
        return AdjacencyTensor(self.k, self.N, {key: w * c for key, w in self.entries.items()})

    def dumps(self):
        lines = [f"# k={self.k} N={self.N}"]
        for key in sorted(self.entries):
            lines.append(" ".join(str(v) for v in key) + " " + repr(self.entries[key]))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text, k=None, N=None):
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    key, _, val = tok.partition("=")
                    if key == "k" and k is None:
                        k = int(val)
                    elif key == "N" and N is None:
                        N = int(val)
                continue
            parts = line.split()
            rows.append((tuple(int(v) for v in parts[:-1]), float(parts[-1])))
        if k is None:
            if not rows:
                raise ValueError("cannot infer the order of an empty tensor")
            k = len(rows[0][0])
        if N is None:
            N = max((max(r[0]) for r in rows), default=1)
        W = cls(k, N)
        for key, w in rows:
            W.add(key, w)
        return W

    @classmethod
    def read(cls, path, k=None, N=None):
        with open(path) as fh:
            return cls.loads(fh.read(), k, N)


def ring_adjacency(N, layer=1, normalized=False):
    """Nearest-neighbour ring (layer 1) and its 3-uniform two-step version (layer 2).

    With ``normalized`` the entries are multiplied by N^(k-1), the scaling
    under which the atomic representation converges to 2 delta_x and
    2 delta_(x,x).
    """
    W = AdjacencyTensor(layer + 1, N)
    c = float(N) ** layer if normalized else 1.0
    for i in range(N):
        for s in (1, -1):
            j = (i + s) % N
            if layer == 1:
                if j != i:
                    W.add((i + 1, j + 1), c)
            elif layer == 2:
                for s2 in (1, -1):
                    kk = (j + s2) % N
                    if kk != i:
                        W.add((i + 1, j + 1, kk + 1), c)
            else:
                raise ValueError("ring layers are 1 or 2")
    return W


def complete_adjacency(N, k=2, weight=1.0, loops=False):
    W = AdjacencyTensor(k, N)
    for key in itertools.product(range(1, N + 1), repeat=k):
        if loops or len(set(key)) == k:
            W.add(key, weight)
    return W


def path_adjacency(N, alpha):
    """Directed path i -> i+1 with weights N^alpha."""
    W = AdjacencyTensor(2, N)
    for i in range(1, N):
        W.add((i, i + 1), float(N) ** alpha)
    return W


# --------------------------------------------------------------- DHGM types

class UniformDHGM:
    """k-uniform DHGM given by a closed-form fiber map x -> eta^x."""

    representation = "closed-form"

    def __init__(self, k, domain, fiber_fn, name=""):
        if k < 2:
            raise ValueError("cardinality must be >= 2")
        self.k = int(k)
        self.domain = domain
        self.target = domain.power(self.k - 1)
        self._fn = fiber_fn
        self.name = name

    def fiber(self, x):
        return self._fn(np.asarray(x, dtype=float).reshape(self.domain.dim))

    def default_eval_points(self, count=EVAL_POINTS, seed=0):
        return default_eval_points(self.domain, count, seed)

    def norm(self, eval_points=None):
        pts = self.default_eval_points() if eval_points is None else eval_points
        return max(mass(self.fiber(x)) for x in pts)

    def __repr__(self):
        return f"{type(self).__name__}(k={self.k}, {self.representation}, {self.name or 'anonymous'})"


def default_eval_points(domain, count=EVAL_POINTS, seed=0):
    if domain.dim == 1:
        lo, hi = domain.lower[0], domain.upper[0]
        return (lo + (np.arange(count) + 0.5) / count * (hi - lo)).reshape(-1, 1)
    u = _low_discrepancy(count, domain.dim, seed)
    lo = np.asarray(domain.lower)
    pts = lo + u * (np.asarray(domain.upper) - lo)
    if domain.kind == "sphere":
        blk = pts.reshape(count, domain.blocks, domain.block)
        blk = blk / np.linalg.norm(blk, axis=2, keepdims=True) * domain.radius
        pts = blk.reshape(count, domain.dim)
    return pts


class PiecewiseAtomicField:
    """x -> measures[cell(x)] with one AtomicMeasure per partition cell."""

    representation = "piecewise-atomic"

    def __init__(self, partition, target, measures):
        if len(measures) != partition.m:
            raise ValueError("one measure per cell is required")
        self.partition = partition
        self.domain = partition.domain
        self.target = target
        self.measures = tuple(measures)

    def fiber(self, x):
        i = int(self.partition.locate(x)[0])
        if i < 0:
            raise CoverageError(f"point {x} lies outside the partitioned domain")
        return self.measures[i]

    def norm(self, eval_points=None):
        return max((mass(mu) for mu in self.measures), default=0.0)


class PiecewiseAtomicDHGM(PiecewiseAtomicField, UniformDHGM):

    def __init__(self, k, partition, measures, name=""):
        self.k = int(k)
        self.name = name
        PiecewiseAtomicField.__init__(self, partition, partition.domain.power(self.k - 1), measures)


class PiecewiseDensityDHGM(UniformDHGM):
    """Step-function (graphon-type) representation W^N of an adjacency tensor.

    The density on the product cell I_{j_1} x ... x I_{j_{k-1}} is a_{i,j}; a
    fiber is materialized as a midpoint quadrature with ``quad`` atoms per
    product cell.
    """

    representation = "piecewise-density"

    def __init__(self, W, domain, quad=16, name=""):
        self.W = W
        self.quad = int(quad)
        self.partition = make_partition(domain, W.N) if domain.dim == 1 else None
        if self.partition is None:
            raise ValueError("adjacency representations need a one-dimensional domain")
        self._rows = W.rows()
        self._cache = {}
        UniformDHGM.__init__(self, W.k, domain, self._fiber_of_cell, name)

    def _fiber_of_cell(self, x):
        i = int(self.partition.locate(x)[0])
        if i not in self._cache:
            self._cache[i] = self._materialize(i)
        return self._cache[i]

    def _materialize(self, i):
        N, k = self.W.N, self.W.k
        per = max(1, int(round(self.quad ** (1.0 / (k - 1)))))
        h = (self.domain.upper[0] - self.domain.lower[0]) / N
        offs = _grid([(np.arange(per) + 0.5) / per * h] * (k - 1))
        pts, wts = [], []
        for js, a in self._rows[i]:
            base = self.domain.lower[0] + (np.asarray(js) - 1) * h
            pts.append(base + offs)
            wts.append(np.full(len(offs), a * float(N) ** (1 - k) / len(offs)))
        if not pts:
            return zero_measure(self.target)
        return AtomicMeasure(self.target, np.concatenate(pts), np.concatenate(wts))

    def norm(self, eval_points=None):
        return float(self.W.row_sums().max()) * float(self.W.N) ** (1 - self.W.k) if self.W.entries else 0.0


def from_adjacency_atomic(W, domain, name=""):
    """eta^x = N^-(k-1) sum_j a_{i,j} delta at the cell centres of j, x in cell i."""
    if domain.dim != 1:
        raise ValueError("adjacency representations need a one-dimensional domain")
    part = make_partition(domain, W.N)
    centers = part.anchors[:, 0]
    target = domain.power(W.k - 1)
    scale = float(W.N) ** (1 - W.k)
    measures = []
    for row in W.rows():
        if not row:
            measures.append(zero_measure(target))
            continue
        pts = np.array([[centers[j - 1] for j in js] for js, _ in row])
        measures.append(AtomicMeasure(target, pts, [a * scale for _, a in row]))
    return PiecewiseAtomicDHGM(W.k, part, measures, name=name)


def from_adjacency_density(W, domain, quad_points_per_cell=16, name=""):
    return PiecewiseDensityDHGM(W, domain, quad_points_per_cell, name=name)


@dataclass(frozen=True)
class RepresentationGap:
    value: float
    bound: float
    h_ratio: float  # max row sum / N^k; assumption (H) asks this to vanish

    @property
    def within_bound(self):
        return self.value <= self.bound + 1e-12


def representation_gap(W, domain, quad_points_per_cell=16):
    """d_inf between the density and the atomic representation of W, cell by cell."""
    dens = from_adjacency_density(W, domain, quad_points_per_cell)
    atom = from_adjacency_atomic(W, domain)
    gap = 0.0
    for i in range(W.N):
        x = atom.partition.anchors[i]
        gap = max(gap, bl_distance(dens.fiber(x), atom.fiber(x)))
    rs = W.row_sums().max() if W.entries else 0.0
    bound = (W.k - 1) / 4.0 * rs * float(W.N) ** (-W.k)
    return RepresentationGap(gap, bound, rs * float(W.N) ** (-W.k))


# ------------------------------------------------------------------ metrics

class SupDistance(float):
    """Float value of a sampled or exact sup of fiber distances with metadata."""

    def __new__(cls, value, exact, argmax, n_points):
        obj = super().__new__(cls, value)
        obj.exact = exact
        obj.argmax = argmax
        obj.n_points = n_points
        return obj

    @property
    def value(self):
        return float(self)


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def d_infinity(eta1, eta2, eval_points=None, threads=1):
    """sup_x d_BL(eta1^x, eta2^x).

    Exact for two piecewise-atomic fields (one anchor per cell of the common
    refinement); otherwise the max over ``eval_points``, which is a lower
    bound for the true sup and is flagged with ``exact=False``.
    """
    k1, k2 = getattr(eta1, "k", None), getattr(eta2, "k", None)
    if k1 is not None and k2 is not None and k1 != k2:
        raise ValueError(f"cardinalities differ: {k1} vs {k2}")
    exact = False
    if eval_points is None:
        if isinstance(eta1, PiecewiseAtomicField) and isinstance(eta2, PiecewiseAtomicField):
            eval_points = eta1.partition.refine(eta2.partition).anchors
            exact = True
        else:
            eval_points = default_eval_points(eta1.domain)
    pts = np.asarray(eval_points, dtype=float).reshape(-1, eta1.domain.dim)
    vals = _map(lambda x: bl_distance(eta1.fiber(x), eta2.fiber(x)), list(pts), threads)
    j = int(np.argmax(vals)) if vals else 0
    return SupDistance(max(vals, default=0.0), exact, pts[j] if len(pts) else None, len(pts))


def d_alpha(traj1, traj2, alpha=0.0, stride=1, threads=1):
    """max over shared grid times of exp(-alpha t) d_inf(nu1_t, nu2_t)."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    t1, t2 = np.asarray(traj1.times), np.asarray(traj2.times)
    if len(t1) != len(t2) or not np.allclose(t1, t2, rtol=0, atol=1e-12):
        raise ValueError("trajectories do not share a time grid")
    best = 0.0
    for r in range(0, len(t1), stride):
        w = math.exp(-alpha * t1[r])
        if w == 0.0:
            break
        best = max(best, w * d_infinity(traj1.field(r), traj2.field(r), threads=threads))
    if (len(t1) - 1) % stride:
        r = len(t1) - 1
        best = max(best, math.exp(-alpha * t1[r]) * d_infinity(traj1.field(r), traj2.field(r), threads=threads))
    return best


# ----------------------------------------------------------- discretization

@dataclass(frozen=True)
class DiscretePart:
    """Per-cell masses and n equal-weight support points per cell."""

    weights: np.ndarray  # (m,)
    points: np.ndarray   # (m*n, dim of target)
    n: int


def _expand(mu, n):
    """Rows of an n-atom equal-weight measure, repeating merged atoms."""
    m = mass(mu)
    counts = np.rint(mu.weights * n / m).astype(int)
    diff = n - counts.sum()
    if diff:
        counts[np.argmax(mu.weights)] += diff
    return np.repeat(mu.points, counts, axis=0)


def _fiber_fn(field):
    return field.fiber if hasattr(field, "fiber") else field


def _discretize(fiber, part, n, quad, seed, placeholder):
    if n < 1:
        raise ValueError("n must be >= 1")
    if part.m < 1:
        raise ValueError("empty partition")
    weights = np.zeros(part.m)
    rows = []
    for i in range(part.m):
        nodes = part.quadrature_nodes(i, quad) if part.mu_masses[i] > 0 else part.anchors[i:i + 1]
        fibers = [fiber(x) for x in nodes]
        space = fibers[0].space
        masses = [mass(f) for f in fibers]
        weights[i] = math.fsum(masses) / len(fibers)
        if weights[i] == 0:
            rows.append(np.repeat(placeholder(i, space)[None, :], n, axis=0))
            continue
        pts = np.concatenate([f.points for f in fibers])
        wts = np.concatenate([f.weights for f in fibers]) / (len(fibers) * weights[i])
        avg = AtomicMeasure(space, pts, wts, check=False)
        rows.append(_expand(quantize(avg, n, seed=seed), n))
    return DiscretePart(weights, np.concatenate(rows), n)


def discretize_initial(nu0, part, n, quad=QUAD_POINTS, seed=0):
    """Cell masses a_{m,i} and n quantized state points per cell for x -> nu0^x."""
    def centre(i, space):
        return 0.5 * (np.asarray(space.lower) + np.asarray(space.upper))
    return _discretize(_fiber_fn(nu0), part, n, quad, seed, centre)


def discretize_dhgm(eta, part, n, quad=QUAD_POINTS, seed=0):
    """Cell masses b_{m,i} and n quantized points of X^(k-1) per cell."""
    if eta.domain != part.domain:
        raise ValueError("DHGM and partition live on different domains")
    k = eta.k

    def anchor(i, space):
        return np.tile(part.anchors[i], k - 1)
    return _discretize(_fiber_fn(eta), part, n, quad, seed, anchor)


class FrozenH:
    """h^m(t, z, phi) = h(t, x_i, phi) for z in cell i."""

    def __init__(self, h, partition):
        self.h = h
        self.partition = partition

    def __call__(self, t, x, phi):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, self.partition.domain.dim)
        idx = self.partition.locate(flat)
        if np.any(idx < 0):
            raise CoverageError("point outside the partitioned domain")
        anchors = self.partition.anchors[idx].reshape(x.shape)
        return self.h(t, anchors, phi)

    def gap(self, t, phis, quad=QUAD_POINTS):
        """max over cells, quadrature nodes and cell corners of |h - h^m|_1."""
        part = self.partition
        phis = np.atleast_2d(np.asarray(phis, dtype=float))
        best = 0.0
        for i in range(part.m):
            corners = _grid([[part.lower[i][a], part.upper[i][a]] for a in range(part.domain.dim)])
            nodes = np.concatenate([part.quadrature_nodes(i, quad), corners])
            for x in nodes:
                xs = np.broadcast_to(x, (len(phis), len(x)))
                a = np.broadcast_to(part.anchors[i], xs.shape)
                diff = np.asarray(self.h(t, xs, phis)) - np.asarray(self.h(t, a, phis))
                best = max(best, float(np.abs(diff).reshape(len(phis), -1).sum(axis=1).max()))
        return best


def discretize_h(h, part):
    return FrozenH(h, part)


def materialize(eta, part):
    """Piecewise-atomic DHGM with the fiber at each anchor copied to the cell."""
    return PiecewiseAtomicDHGM(eta.k, part, [eta.fiber(x) for x in part.anchors], name=eta.name)


# ------------------------------------------------------------------ gallery

def _ring(layer=1):
    X = Space.torus(1)
    k = layer + 1
    tgt = X.power(layer)
    return UniformDHGM(k, X, lambda x: dirac(tgt, np.repeat(x, layer), 2.0), name=f"ring{layer}")


def _circular(k=3):
    X = Space.torus(1)
    tgt = X.power(k - 1)
    offs = np.array(list(itertools.product([0.25, 0.75], repeat=k - 1)))
    return UniformDHGM(k, X, lambda x: AtomicMeasure(tgt, x[0] + offs, np.ones(len(offs))),
                       name=f"circular{k}")


def _complete(k=2, resolution=16):
    X = Space.interval()
    tgt = X.power(k - 1)
    ref = UniformMeasure.on(tgt, 1.0, resolution).reference()
    return UniformDHGM(k, X, lambda x: ref, name=f"complete{k}")


def _torical(resolution=32):
    X = Space.torus(2)
    y = (np.arange(resolution) + 0.5) / resolution

    def fiber(x):
        pts = np.column_stack([np.full(resolution, (x[0] + 0.5) % 1.0), y])
        return AtomicMeasure(X, pts, np.full(resolution, 1.0 / resolution))
    return UniformDHGM(2, X, fiber, name="torical")


_TRI = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])


def in_triangle(x, scale=1.0, tol=1e-12):
    """Membership in the equilateral triangle scale * conv{(0,0), (1,0), (1/2, sqrt3/2)}."""
    x0, x1 = float(x[0]), float(x[1])
    s3 = math.sqrt(3)
    return x1 >= -tol and x1 <= s3 * x0 + tol and x1 <= s3 * (scale - x0) + tol


def _triangle():
    X = Space.box([0.0, 0.0], [1.0, math.sqrt(3) / 2])
    tgt = X.power(2)
    shift = np.array([0.5, 0.0, 0.25, math.sqrt(3) / 4])

    def fiber(x):
        if in_triangle(x, 0.5):
            return dirac(tgt, np.tile(x, 2) + shift)
        return zero_measure(tgt)
    return UniformDHGM(3, X, fiber, name="triangle")


def _simplex(k=3, resolution=16):
    X = Space.interval()
    tgt = X.power(k - 1)
    base = _grid([(np.arange(resolution) + 0.5) / resolution] * (k - 1))
    # midpoints of a regular grid kept when the cell centre lies in the unit simplex
    base = base[base.sum(axis=1) <= 1.0]

    def fiber(x):
        s = 1.0 - float(x[0])
        total = k * s ** (k - 1)
        if total == 0:
            return zero_measure(tgt)
        return AtomicMeasure(tgt, base * s, np.full(len(base), total / len(base)))
    return UniformDHGM(k, X, fiber, name=f"simplex{k}")


def _spherical(d=2, k=3, resolution=32):
    if (d, k) != (2, 3):
        raise ValueError("the spherical example is available for d=2, k=3 only")
    X = Space.sphere(2)
    tgt = X.power(2)
    theta = 2 * math.pi * (np.arange(resolution) + 0.5) / resolution

    def fiber(x):
        x = x / np.linalg.norm(x)
        a = np.eye(3)[int(np.argmin(np.abs(x)))]
        e1 = np.cross(x, a)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(x, e1)
        y = np.outer(np.cos(theta), e1) + np.outer(np.sin(theta), e2)
        z = np.cross(x, y)
        pts = np.concatenate([np.hstack([y, z]), np.hstack([y, -z])])
        return AtomicMeasure(tgt, pts, np.full(len(pts), 1.0 / len(pts)))
    return UniformDHGM(3, X, fiber, name="spherical")


def _path_limit(alpha=1.0):
    if alpha > 1:
        raise ValueError("the weighted path sequence has no limit for alpha > 1")
    X = Space.interval()
    if alpha == 1:
        return UniformDHGM(2, X, lambda x: dirac(X, x), name="path1")
    return UniformDHGM(2, X, lambda x: zero_measure(X), name="path0")


def _arc(k=2, resolution=16):
    X = Space.torus(1)
    tgt = X.power(k - 1)
    offs = _grid([0.25 + (np.arange(resolution) + 0.5) / resolution * 0.5] * (k - 1))
    w = np.full(len(offs), 2.0 ** (1 - k) / len(offs))
    return UniformDHGM(k, X, lambda x: AtomicMeasure(tgt, x[0] + offs, w), name=f"arc{k}")


_GALLERY = {
    "ring": _ring,
    "circular": _circular,
    "complete": _complete,
    "torical": _torical,
    "triangle": _triangle,
    "simplex": _simplex,
    "spherical": _spherical,
    "path": _path_limit,
    "arc": _arc,
}


def gallery_names():
    return sorted(_GALLERY)


def gallery(name, **params):
    if name not in _GALLERY:
        raise ValueError(f"unknown gallery entry {name!r}; known: {', '.join(gallery_names())}")
    return _GALLERY[name](**params)


# ---------------------------------------------------------------------- io

def dhgm_to_dict(eta):
    if not isinstance(eta, PiecewiseAtomicField):
        raise ValueError("only piecewise-atomic DHGMs are serialized; materialize first")
    return {
        "kind": "dhgm",
        "k": getattr(eta, "k", None),
        "domain": eta.domain.to_dict(),
        "edges": [e.tolist() for e in eta.partition.edges],
        "cells": [{"cell": i, "points": mu.points.tolist(), "weights": mu.weights.tolist()}
                  for i, mu in enumerate(eta.measures)],
    }


def dhgm_from_dict(d):
    domain = Space.from_dict(d["domain"])
    part = Partition(domain, d["edges"])
    k = int(d["k"])
    tgt = domain.power(k - 1)
    cells = sorted(d["cells"], key=lambda c: c["cell"])
    measures = [AtomicMeasure(tgt, np.array(c["points"], dtype=float).reshape(-1, tgt.dim),
                              c["weights"], merge=False) for c in cells]
    return PiecewiseAtomicDHGM(k, part, measures)


def dumps_dhgm(eta):
    return json.dumps(dhgm_to_dict(eta), sort_keys=True)


def loads_dhgm(text):
    return dhgm_from_dict(json.loads(text))
