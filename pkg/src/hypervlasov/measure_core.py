"""Finite positive measures on compact spaces stored as weighted atoms.

The bounded-Lipschitz (flat) distance between two atomic measures is the value
of a linear program over the function values on the joint support, together
with a Lipschitz budget L and a sup budget B subject to B + L <= 1.
"""
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.stats import qmc

SUPPORT_CAP = 5000
MERGE_TOL = 1e-12
CONTAINS_TOL = 1e-12
KINDS = ("box", "torus", "sphere", "simplex", "finite-grid")

# below this support size the pair list is pruned by metric betweenness
_PRUNE_MAX = 1500


class SizeError(ValueError):
    pass


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class Space:
    """Compact subset of R^d with the 1-norm metric.

    ``kind`` selects the constraint set: a box, a flat torus [0, period)^d with
    geodesic wrap, a product of spheres of the given radius (``block``
    coordinates each), a product of simplices {u >= 0, sum(u) <= total} or
    their faces {sum(u) = total}, or a finite grid inside a box.
    """

    kind: str
    lower: tuple
    upper: tuple
    period: float = 1.0
    radius: float = 1.0
    total: float = 1.0
    face: bool = False
    block: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown space kind {self.kind!r}")
        if len(self.lower) != len(self.upper) or len(self.lower) == 0:
            raise ValueError("bounds must be non-empty and of equal length")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("lower bound exceeds upper bound")
        if self.block and self.dim % self.block:
            raise ValueError("block size must divide the dimension")

    # constructors
    @classmethod
    def interval(cls, a=0.0, b=1.0):
        return cls("box", (float(a),), (float(b),))

    @classmethod
    def box(cls, lower, upper):
        return cls("box", tuple(float(v) for v in lower), tuple(float(v) for v in upper))

    @classmethod
    def torus(cls, dim=1, period=1.0):
        return cls("torus", (0.0,) * dim, (float(period),) * dim, period=float(period))

    @classmethod
    def sphere(cls, d=2, radius=1.0):
        r = float(radius)
        return cls("sphere", (-r,) * (d + 1), (r,) * (d + 1), radius=r, block=d + 1)

    @classmethod
    def simplex(cls, dim, total=1.0, face=False):
        s = float(total)
        return cls("simplex", (0.0,) * dim, (s,) * dim, total=s, face=face, block=dim)

    @classmethod
    def grid(cls, lower, upper):
        return cls("finite-grid", tuple(float(v) for v in lower), tuple(float(v) for v in upper))

    @property
    def dim(self):
        return len(self.lower)

    @property
    def blocks(self):
        return self.dim // self.block if self.block else 1

    def power(self, p):
        """Product space with p copies of self."""
        if p < 1:
            raise ValueError("power must be >= 1")
        return Space(self.kind, self.lower * p, self.upper * p, self.period,
                     self.radius, self.total, self.face, self.block)

    def wrap(self, points):
        pts = np.asarray(points, dtype=float)
        if self.kind == "torus":
            pts = np.mod(pts, self.period)
            # mod can return exactly `period` for tiny negative inputs
            pts[pts >= self.period] = 0.0
        return pts

    def displacement(self, a, b):
        """Coordinatewise b - a, taken along the shortest arc on a torus."""
        diff = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        if self.kind == "torus":
            p = self.period
            diff = diff - p * np.round(diff / p)
        return diff

    def pairwise(self, a, b=None):
        """Matrix of 1-norm distances between the rows of a and b."""
        a = np.asarray(a, dtype=float).reshape(-1, self.dim)
        b = a if b is None else np.asarray(b, dtype=float).reshape(-1, self.dim)
        diff = np.abs(a[:, None, :] - b[None, :, :])
        if self.kind == "torus":
            diff = np.minimum(diff, self.period - diff)
        return diff.sum(axis=-1)

    def distance(self, x, y):
        return float(self.pairwise(x, y)[0, 0])

    def violation(self, points):
        """Per-point distance-like measure of how far points sit outside the space."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        out = np.maximum(np.maximum(lo - pts, pts - hi), 0.0).max(axis=1)
        if self.kind == "torus":
            return np.zeros(len(pts))
        if self.kind == "sphere":
            blk = pts.reshape(len(pts), self.blocks, self.block)
            out = np.maximum(out, np.abs(np.linalg.norm(blk, axis=2) - self.radius).max(axis=1))
        elif self.kind == "simplex":
            blk = pts.reshape(len(pts), self.blocks, self.block)
            s = blk.sum(axis=2) - self.total
            s = np.abs(s) if self.face else np.maximum(s, 0.0)
            out = np.maximum(out, s.max(axis=1))
        return out

    def contains(self, points, tol=CONTAINS_TOL):
        return bool(np.all(self.violation(points) <= tol * max(1.0, self._scale())))

    def _scale(self):
        return max(max(abs(v) for v in self.lower), max(abs(v) for v in self.upper), 1.0)

    def to_dict(self):
        d = {"kind": self.kind, "lower": list(self.lower), "upper": list(self.upper)}
        if self.kind == "torus":
            d["period"] = self.period
        if self.kind == "sphere":
            d["radius"] = self.radius
        if self.kind == "simplex":
            d["total"] = self.total
            d["face"] = self.face
        if self.block:
            d["block"] = self.block
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(float(v) for v in d["lower"]), tuple(float(v) for v in d["upper"]),
                   period=float(d.get("period", 1.0)), radius=float(d.get("radius", 1.0)),
                   total=float(d.get("total", 1.0)), face=bool(d.get("face", False)),
                   block=int(d.get("block", 0)))


def _merge(points, weights, tol=MERGE_TOL):
    """Sum the weights of atoms whose coordinates agree within tol.

    Atoms keep the order of their first occurrence.
    """
    if len(points) < 2:
        return points, weights
    order = np.lexsort(points.T[::-1])
    close = np.all(np.abs(np.diff(points[order], axis=0)) <= tol, axis=1)
    if not close.any():
        return points, weights
    group = np.empty(len(points), dtype=int)
    group[order] = np.cumsum(np.concatenate([[True], ~close])) - 1
    _, first = np.unique(group, return_index=True)
    first = np.sort(first)
    merged_w = np.zeros(len(first))
    rank = np.empty(group.max() + 1, dtype=int)
    rank[group[first]] = np.arange(len(first))
    np.add.at(merged_w, rank[group], weights)
    return points[first], merged_w


class AtomicMeasure:
    """Finite positive measure sum_i w_i delta_{p_i} on a Space.

    Arrays are stored read-only; atoms with zero weight are dropped and
    coinciding atoms are merged unless ``merge=False``.
    """

    __slots__ = ("space", "points", "weights")

    def __init__(self, space, points, weights, merge=True, check=True):
        pts = np.asarray(points, dtype=float)
        if pts.size == 0:
            pts = np.zeros((0, space.dim))
        pts = pts.reshape(-1, space.dim)
        w = np.asarray(weights, dtype=float).reshape(-1)
        if len(w) != len(pts):
            raise ValueError("points and weights differ in length")
        if check:
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise ValueError("weights must be finite and nonnegative")
            if not np.all(np.isfinite(pts)):
                raise DomainError("non-finite support point")
        pts = space.wrap(pts)
        if check and not space.contains(pts):
            raise DomainError(f"support point outside {space.kind} space")
        keep = w > 0
        if not keep.all():
            pts, w = pts[keep], w[keep]
        if merge:
            pts, w = _merge(pts, w)
        pts = np.ascontiguousarray(pts)
        w = np.ascontiguousarray(w)
        pts.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __setattr__(self, name, value):
        raise AttributeError("AtomicMeasure is immutable")

    def __len__(self):
        return len(self.weights)

    def __repr__(self):
        return f"AtomicMeasure({self.space.kind}, atoms={len(self)}, mass={mass(self):.6g})"

    def scaled(self, c):
        return AtomicMeasure(self.space, self.points, self.weights * float(c), merge=False, check=False)


def zero_measure(space):
    return AtomicMeasure(space, np.zeros((0, space.dim)), [])


def dirac(space, x, weight=1.0):
    return AtomicMeasure(space, np.reshape(np.asarray(x, dtype=float), (1, space.dim)), [weight])


def mass(mu):
    return math.fsum(mu.weights)


def integrate(f, mu):
    """Sum of w_i f(p_i); f is called once per atom."""
    vals = np.array([f(p) for p in mu.points], dtype=float).reshape(len(mu))
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand is not finite on the support")
    return float(np.dot(mu.weights, vals))


@dataclass(frozen=True)
class BLWitness:
    """Optimal test function of the flat-metric LP on the joint support."""

    points: np.ndarray
    values: np.ndarray
    lipschitz_budget: float
    sup_budget: float
    space: "Space" = None

    def __call__(self, x):
        # clipped McShane extension off the support
        if len(self.points) == 0:
            return 0.0
        x = np.asarray(x, dtype=float)
        if self.space is not None:
            d = self.space.pairwise(self.points, x)[:, 0]
        else:
            d = np.abs(self.points - x).sum(axis=1)
        v = np.min(self.values + self.lipschitz_budget * d)
        return float(np.clip(v, -self.sup_budget, self.sup_budget))


def _pair_list(space, z, dist):
    n = len(z)
    if space.dim == 1 and space.kind in ("box", "torus", "finite-grid"):
        order = np.argsort(z[:, 0], kind="stable")
        i, j = order[:-1], order[1:]
        if space.kind == "torus" and n > 2:
            i = np.append(i, order[-1])
            j = np.append(j, order[0])
        return i, j
    if space.kind != "torus" and n > 2:
        return _box_pairs(z)
    iu, ju = np.triu_indices(n, k=1)
    if n < 3 or n > _PRUNE_MAX:
        return iu, ju
    # a pair (i, j) is implied when some k lies metrically between them;
    # the implication chain ends because distances strictly decrease
    keep = np.ones((n, n), dtype=bool)
    tol = 1e-12 * max(1.0, float(dist.max()))
    for i in range(n):
        via = dist[i][:, None] + dist  # via[k, j] = d(i,k) + d(k,j)
        via[i, :] = np.inf
        np.fill_diagonal(via, np.inf)
        keep[i] = ~np.any(via <= dist[i][None, :] + tol, axis=0)
    mask = keep[iu, ju] & keep[ju, iu]
    return iu[mask], ju[mask]


def _box_pairs(z):
    """Pairs (i, j) whose closed bounding box holds no third support point.

    For the 1-norm on R^d, k lies between i and j exactly when it sits in
    that box, so the remaining Lipschitz constraints imply all others.
    """
    n, d = z.shape
    signs = np.array(np.meshgrid(*[[1.0, -1.0]] * d, indexing="ij")).reshape(d, -1).T
    found = set()
    for i in range(n):
        delta = z - z[i]
        delta[i] = np.nan
        for s in signs:
            sel = np.flatnonzero(np.all(delta * s >= 0, axis=1))
            if len(sel) == 0:
                continue
            A = np.abs(delta[sel])
            if d == 2:
                order = np.lexsort((A[:, 1], A[:, 0]))
                ay = A[order, 1]
                prev = np.minimum.accumulate(np.concatenate([[np.inf], ay[:-1]]))
                kept = sel[order[ay < prev]]
            else:
                dom = np.all(A[:, None, :] <= A[None, :, :], axis=2)
                np.fill_diagonal(dom, False)
                kept = sel[~dom.any(axis=0)]
            for j in kept:
                found.add((i, int(j)) if i < j else (int(j), i))
    pairs = np.array(sorted(found), dtype=int).reshape(-1, 2)
    return pairs[:, 0], pairs[:, 1]


def bl_distance(mu, nu, return_witness=False, cap=SUPPORT_CAP):
    """Flat distance sup { int f d(mu - nu) : ||f||_inf + Lip(f) <= 1 }.

    Solved exactly as an LP in the values of f on the joint support. With
    ``return_witness`` the optimal BLWitness is returned as well.
    """
    if mu.space != nu.space:
        raise ValueError("measures live on different spaces")
    space = mu.space
    z = np.concatenate([mu.points, nu.points])
    w = np.concatenate([mu.weights, -nu.weights])
    z, w = _merge(z, w) if len(z) else (z, w)
    n = len(z)
    if n > cap:
        raise SizeError(f"joint support {n} exceeds cap {cap}")
    if n == 0 or not np.any(w):
        value = 0.0
        wit = BLWitness(z, np.zeros(n), 0.0, 0.0, space)
        return (value, wit) if return_witness else value
    dist = space.pairwise(z)
    pi, pj = _pair_list(space, z, dist)
    npair = len(pi)
    nv = n + 2  # f, L, B
    iL, iB = n, n + 1
    # |f_i| <= B
    r = np.arange(n)
    rows = [r, r, n + r, n + r]
    cols = [r, np.full(n, iB), r, np.full(n, iB)]
    vals = [np.ones(n), -np.ones(n), -np.ones(n), -np.ones(n)]
    # f_i - f_j <= L d_ij and f_j - f_i <= L d_ij
    base = 2 * n
    q = np.arange(npair)
    dij = dist[pi, pj]
    for sgn, off in ((1.0, 0), (-1.0, npair)):
        rr = base + off + q
        rows += [rr, rr, rr]
        cols += [pi, pj, np.full(npair, iL)]
        vals += [np.full(npair, sgn), np.full(npair, -sgn), -dij]
    last = base + 2 * npair
    rows.append(np.array([last, last]))
    cols.append(np.array([iL, iB]))
    vals.append(np.array([1.0, 1.0]))
    A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(last + 1, nv))
    b = np.zeros(last + 1)
    b[last] = 1.0
    c = np.concatenate([-w, [0.0, 0.0]])
    bounds = [(None, None)] * n + [(0, None), (0, None)]
    res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs-ds",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"flat-metric LP failed: {res.message}")
    f = res.x[:n]
    value = max(float(np.dot(w, f)), 0.0)
    if return_witness:
        return value, BLWitness(z, f, float(res.x[iL]), float(res.x[iB]), space)
    return value


def product_measure(mus, cap=1_000_000):
    """Tensor product; the support is the Cartesian product of the supports."""
    if not mus:
        raise ValueError("need at least one factor")
    size = 1
    for mu in mus:
        size *= len(mu)
    if size > cap:
        raise SizeError(f"product support {size} exceeds cap {cap}")
    space = mus[0].space.power(len(mus)) if all(m.space == mus[0].space for m in mus) else _concat_space(mus)
    pts, w = product_arrays([m.points for m in mus], [m.weights for m in mus])
    return AtomicMeasure(space, pts, w, check=False)


def _concat_space(mus):
    sp = [m.space for m in mus]
    if len({s.kind for s in sp}) != 1:
        raise ValueError("cannot form a product of spaces of different kinds")
    s0 = sp[0]
    return Space(s0.kind, sum((s.lower for s in sp), ()), sum((s.upper for s in sp), ()),
                 s0.period, s0.radius, s0.total, s0.face, s0.block)


def product_arrays(points, weights):
    """Cartesian product of atom arrays, first factor varying slowest."""
    pts = points[0]
    w = weights[0]
    for p, v in zip(points[1:], weights[1:]):
        na, nb = len(pts), len(p)
        pts = np.concatenate([np.repeat(pts, nb, axis=0), np.tile(p, (na, 1))], axis=1)
        w = np.repeat(w, nb) * np.tile(v, na)
    return pts, w


def push_forward(mu, fmap, target):
    """Image measure fmap # mu; atoms move, weights are kept as they are."""
    if len(mu) == 0:
        return zero_measure(target)
    img = np.array([np.asarray(fmap(p), dtype=float).reshape(target.dim) for p in mu.points])
    img = target.wrap(img)
    if not target.contains(img):
        raise DomainError("image leaves the target space")
    return AtomicMeasure(target, img, mu.weights, merge=False, check=False)


@dataclass(frozen=True)
class UniformMeasure:
    """mass * normalized Lebesgue measure on the box [lower, upper] inside space.

    Acts as the density sampler for ``quantize``: ``reference`` materializes it
    on a midpoint grid with ``resolution`` points per axis.
    """

    space: Space
    lower: tuple
    upper: tuple
    mass: float = 1.0
    resolution: int = 64

    @classmethod
    def on(cls, space, mass=1.0, resolution=64):
        return cls(space, space.lower, space.upper, mass, resolution)

    def reference(self, resolution=None):
        r = resolution or self.resolution
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        axes = [lo[a] + (np.arange(r) + 0.5) / r * (hi[a] - lo[a]) for a in range(len(lo))]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
        return AtomicMeasure(self.space, grid, np.full(len(grid), self.mass / len(grid)))


def _low_discrepancy(n, d, seed=0):
    gen = qmc.Halton(d, scramble=False)
    gen.fast_forward(1 + int(seed))
    return gen.random(n)


def _representable(mu, n):
    """Exact n-atom equal-weight form of mu when its weights allow one."""
    m = mass(mu)
    k = mu.weights * n / m
    ki = np.rint(k)
    if np.all(np.abs(k - ki) <= 1e-9) and ki.sum() == n:
        return AtomicMeasure(mu.space, mu.points, ki * (m / n), merge=False, check=False)
    return None


def _quantile_midpoints(mu, n):
    m = mass(mu)
    order = np.argsort(mu.points[:, 0], kind="stable")
    x = mu.points[order, 0]
    cum = np.cumsum(mu.weights[order])
    levels = (2 * np.arange(1, n + 1) - 1) / (2 * n) * m
    idx = np.searchsorted(cum, levels, side="left")
    idx = np.minimum(idx, len(x) - 1)
    return x[idx].reshape(-1, 1)


def _farthest_first(space, P, w, n, start):
    """Greedy maximin selection of n target atoms, starting near ``start``."""
    chosen = [int(np.argmin(space.pairwise(P, start[None, :])[:, 0]))]
    near = space.pairwise(P, P[chosen])[:, 0]
    while len(chosen) < n:
        j = int(np.argmax(w * near))
        if near[j] == 0.0:
            j = chosen[-1]  # fewer distinct atoms than centers
        chosen.append(j)
        near = np.minimum(near, space.pairwise(P, P[j:j + 1])[:, 0])
    return P[chosen].copy()


def _lloyd_from(space, P, w, centers, iterations):
    n = len(centers)
    for _ in range(iterations):
        dist = space.pairwise(P, centers)
        lab = np.argmin(dist, axis=1)
        new = np.empty_like(centers)
        filled = np.zeros(n, dtype=bool)
        for c in range(n):
            sel = lab == c
            if not sel.any():
                continue
            filled[c] = True
            disp = space.displacement(centers[c], P[sel])
            new[c] = centers[c] + np.average(disp, axis=0, weights=w[sel])
        # reseed empty clusters at the atoms that are worst served
        if not filled.all():
            cost = w * dist[np.arange(len(P)), lab]
            for c in np.flatnonzero(~filled):
                j = int(np.argmax(cost))
                new[c] = P[j]
                cost[j] = -1.0
        new = space.wrap(new)
        if space.kind == "sphere":
            blk = new.reshape(n, space.blocks, space.block)
            nrm = np.linalg.norm(blk, axis=2, keepdims=True)
            new = (blk / np.where(nrm > 0, nrm, 1.0) * space.radius).reshape(n, space.dim)
        done = np.allclose(new, centers, atol=1e-15, rtol=0)
        centers = new
        if done:
            break
    distortion = float(np.dot(w, space.pairwise(P, centers).min(axis=1)))
    return centers, distortion


def _lloyd(mu, n, iterations, seed):
    """Lloyd iteration from two deterministic starts; the lower distortion wins.

    One start is a Halton lattice over the bounding box of the support, the
    other a maximin selection of atoms beginning at the first lattice point.
    """
    space = mu.space
    P, w = mu.points, mu.weights
    lo, hi = P.min(axis=0), P.max(axis=0)
    lattice = lo + _low_discrepancy(n, space.dim, seed) * (hi - lo)
    a = _lloyd_from(space, P, w, lattice, iterations)
    b = _lloyd_from(space, P, w, _farthest_first(space, P, w, n, lattice[0]), iterations)
    return a[0] if a[1] <= b[1] else b[0]


def quantize(target, n, *, seed=0, iterations=50):
    """n equal-weight atoms approximating target in the flat metric.

    One-dimensional targets use mass-quantile midpoints; higher dimensions use
    a Lloyd iteration started from a Halton lattice offset by ``seed``.
    """
    if n < 1:
        raise ValueError("quantize needs n >= 1")
    if isinstance(target, UniformMeasure):
        space = target.space
        if target.mass == 0:
            return zero_measure(space)
        if space.dim == 1:
            lo, hi = target.lower[0], target.upper[0]
            pts = lo + (2 * np.arange(1, n + 1) - 1) / (2 * n) * (hi - lo)
            return AtomicMeasure(space, pts.reshape(-1, 1), np.full(n, target.mass / n))
        res = max(target.resolution, int(math.ceil(n ** (1.0 / space.dim))) * 4)
        target = target.reference(res)
    mu = target
    m = mass(mu)
    if m == 0:
        return zero_measure(mu.space)
    exact = _representable(mu, n)
    if exact is not None:
        return exact
    if mu.space.dim == 1:
        pts = _quantile_midpoints(mu, n)
    else:
        pts = _lloyd(mu, n, iterations, seed)
    return AtomicMeasure(mu.space, pts, np.full(n, m / n), check=False)


# serialization

def measure_to_dict(mu):
    return {"kind": "measure", "space": mu.space.to_dict(),
            "points": mu.points.tolist(), "weights": mu.weights.tolist()}


def measure_from_dict(d):
    space = Space.from_dict(d["space"])
    return AtomicMeasure(space, np.array(d["points"], dtype=float).reshape(-1, space.dim),
                         d["weights"], merge=False)


def dumps_measure(mu):
    # json writes floats with repr, the shortest string that round-trips
    return json.dumps(measure_to_dict(mu), sort_keys=True)


def loads_measure(text):
    return measure_from_dict(json.loads(text))
