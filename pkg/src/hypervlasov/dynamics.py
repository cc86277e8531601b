"""Vlasov vector field, lattice ODE, characteristic flow and the audits built on them.

States are arrays of shape (m*n, r2) ordered by (cell, atom).  Coupling
functions are vectorized: ``g(t, phi, psi_1, ..., psi_{k-1})`` receives arrays
that broadcast against each other with the state components on the last axis,
and ``h(t, x, phi)`` likewise.
"""
import math
import time
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .dhgm import (Partition, PiecewiseAtomicDHGM, PiecewiseAtomicField, CoverageError,
                   d_alpha, d_infinity, discretize_dhgm, discretize_h, discretize_initial,
                   make_partition, QUAD_POINTS)
from .measure_core import AtomicMeasure, SizeError, Space, _low_discrepancy, product_arrays

NESTED_CAP = 1_000_000
BLOWUP = 1e8
DRIFT_TOL = 1e-6
_CHUNK = 4_000_000  # elements per vectorized coupling evaluation


class BlowUpError(RuntimeError):
    def __init__(self, t, detail=""):
        super().__init__(f"state left every bounded set at t={t:.6g} {detail}".strip())
        self.t = t


class ConvergenceError(RuntimeError):
    def __init__(self, report):
        super().__init__(f"Picard iteration did not reach tol after {len(report.distances)} "
                         f"iterations; last distances {report.distances[-3:]}")
        self.report = report


@dataclass(frozen=True)
class CouplingLayer:
    k: int
    g: object
    eta: object
    bl_bound: float = None
    name: str = ""


@dataclass(frozen=True)
class ModelSpec:
    X: Space
    Y: Space
    layers: tuple
    h: object
    T: float = 1.0
    h_bl_bound: float = None
    name: str = "model"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("horizon T must be positive")
        for layer in self.layers:
            if layer.eta.k != layer.k:
                raise ValueError(f"layer {layer.name or '?'}: DHGM cardinality {layer.eta.k} != {layer.k}")

    @property
    def kappa(self):
        return max((layer.k for layer in self.layers), default=1)

    @property
    def r(self):
        return len(self.layers)


# ------------------------------------------------------------ discretization

@dataclass(frozen=True, eq=False)
class Discretization:
    """Partition, cell masses and support points of the lattice system."""

    partition: Partition
    n: int
    a: np.ndarray          # (m,)
    b: tuple               # per layer, (m,)
    phi0: np.ndarray       # (m*n, r2)
    y: tuple               # per layer, (m*n, k-1, dX)
    state_space: Space

    @property
    def m(self):
        return self.partition.m

    @cached_property
    def node_cells(self):
        return np.repeat(np.arange(self.m), self.n)

    @cached_property
    def node_anchors(self):
        return self.partition.anchors[self.node_cells]

    @cached_property
    def plan(self):
        """Per layer: the distinct cell tuples hit by each cell's DHGM atoms.

        Returned as (cells, tuples, counts) with one row per (cell, tuple).
        """
        out = []
        dX = self.partition.domain.dim
        for ell, y in enumerate(self.y):
            k1 = y.shape[1]
            loc = self.partition.locate(y.reshape(-1, dX)).reshape(-1, k1)
            if np.any(loc < 0):
                bad = int(np.argwhere(loc < 0)[0, 0])
                raise CoverageError(f"layer {ell}: DHGM atom {y[bad].tolist()} lies in no cell")
            cells, tuples, counts = [], [], []
            for i in range(self.m):
                block = loc[i * self.n:(i + 1) * self.n]
                uniq, cnt = np.unique(block, axis=0, return_counts=True)
                cells.append(np.full(len(uniq), i))
                tuples.append(uniq)
                counts.append(cnt)
            out.append((np.concatenate(cells), np.concatenate(tuples), np.concatenate(counts)))
        return out

    def with_initial(self, phi0):
        phi0 = np.asarray(phi0, dtype=float).reshape(self.phi0.shape)
        return replace(self, phi0=self.state_space.wrap(phi0))

    def field(self, states=None):
        """nu^{m,n,x}: cell i carries the atoms of cell i with weight a_i / n."""
        states = self.phi0 if states is None else states
        n = self.n
        measures = [AtomicMeasure(self.state_space, states[i * n:(i + 1) * n],
                                  np.full(n, self.a[i] / n), check=False)
                    for i in range(self.m)]
        return PiecewiseAtomicField(self.partition, self.state_space, measures)


def discretize(model, nu0, m, n, quad=QUAD_POINTS, seed=0):
    """Lattice data for (m, n): cell masses, quantized initial states and DHGM atoms."""
    part = make_partition(model.X, m)
    init = discretize_initial(nu0, part, n, quad, seed)
    b, y = [], []
    for layer in model.layers:
        dp = discretize_dhgm(layer.eta, part, n, quad, seed)
        b.append(dp.weights)
        y.append(dp.points.reshape(m * n, layer.k - 1, model.X.dim))
    phi0 = model.Y.wrap(init.points.reshape(m * n, model.Y.dim))
    return Discretization(part, n, init.weights, tuple(b), phi0, tuple(y), model.Y)


def discretized_model(model, disc):
    """The model with eta_l replaced by eta^{m,n}_l and h by its anchor freeze."""
    layers = []
    n, X = disc.n, model.X
    for ell, layer in enumerate(model.layers):
        tgt = X.power(layer.k - 1)
        y = disc.y[ell].reshape(disc.m * n, -1)
        measures = [AtomicMeasure(tgt, y[i * n:(i + 1) * n], np.full(n, disc.b[ell][i] / n), check=False)
                    for i in range(disc.m)]
        eta = PiecewiseAtomicDHGM(layer.k, disc.partition, measures, name=f"{layer.name}^mn")
        layers.append(replace(layer, eta=eta))
    return replace(model, layers=tuple(layers), h=discretize_h(model.h, disc.partition),
                   name=f"{model.name}^mn")


# ------------------------------------------------------------ vector fields

def _as_fiber(nu_field):
    if isinstance(nu_field, AtomicMeasure):
        return None
    return nu_field.fiber if hasattr(nu_field, "fiber") else nu_field


def _g_sum(g, t, phi, pts, w, k, r2):
    """sum_p w_p g(t, phi, psi_p) for phi of shape (M, r2)."""
    psis = [pts[None, :, s * r2:(s + 1) * r2] for s in range(k - 1)]
    vals = np.asarray(g(t, phi[:, None, :], *psis), dtype=float)
    vals = np.broadcast_to(vals, (len(phi), len(w), r2))
    return np.einsum("mpr,p->mr", vals, w)


def v_operator(model, nu_field, t, x, phi, cap=NESTED_CAP):
    """V[eta, nu, h](t, x, phi) by exact nested summation over atoms.

    ``nu_field`` is a map y -> AtomicMeasure on Y (or an object with
    ``fiber``), or a single AtomicMeasure used for every y.  ``phi`` may be one
    state or a stack of states.  Cost is sum_l |supp eta_l^x| n^(k_l - 1).
    """
    phi = np.asarray(phi, dtype=float)
    single = phi.ndim == 1
    phi2 = np.atleast_2d(phi)
    M, r2 = phi2.shape
    x = np.asarray(x, dtype=float).reshape(model.X.dim)
    xs = np.broadcast_to(x, (M, model.X.dim))
    out = np.array(np.broadcast_to(np.asarray(model.h(t, xs, phi2), dtype=float), (M, r2)))
    fiber = _as_fiber(nu_field)
    dX = model.X.dim
    for ell, layer in enumerate(model.layers):
        eta_x = layer.eta.fiber(x)
        if len(eta_x) == 0:
            continue
        k = layer.k
        if fiber is None:
            nu = nu_field
            size = len(eta_x) * len(nu) ** (k - 1)
            if size > cap:
                raise SizeError(f"layer {ell}: nested support {size} exceeds cap {cap}")
            pts, w = product_arrays([nu.points] * (k - 1), [nu.weights] * (k - 1))
            out += math.fsum(eta_x.weights) * _g_sum(layer.g, t, phi2, pts, w, k, r2)
            continue
        ys = eta_x.points.reshape(-1, k - 1, dX)
        size = 0
        acc = np.zeros((M, r2))
        for j in range(len(eta_x)):
            nus = [fiber(ys[j, s]) for s in range(k - 1)]
            size += int(np.prod([len(nu) for nu in nus]))
            if size > cap:
                raise SizeError(f"layer {ell}: nested support exceeds cap {cap}")
            pts, w = product_arrays([nu.points for nu in nus], [nu.weights for nu in nus])
            acc += eta_x.weights[j] * _g_sum(layer.g, t, phi2, pts, w, k, r2)
        out += acc
    return out[0] if single else out


def rhs_lattice(model, disc, t, states, neighbors=None):
    """F_i^{m,n}(t, psi_i, Phi) for every node i.

    ``states`` are the nodes' own states psi; ``neighbors`` (default: the same
    array) supply the atoms of nu^{m,n} seen through the couplings.
    """
    n, m = disc.n, disc.m
    states = np.asarray(states, dtype=float)
    Phi = states if neighbors is None else np.asarray(neighbors, dtype=float)
    r2 = states.shape[1]
    out = np.array(np.broadcast_to(
        np.asarray(model.h(t, disc.node_anchors, states), dtype=float), states.shape))
    wa = disc.a / n
    psi_cells = states.reshape(m, n, r2)
    nb_cells = Phi.reshape(m, n, r2)
    for ell, layer in enumerate(model.layers):
        k = layer.k
        cells, tuples, counts = disc.plan[ell]
        weight = counts * np.prod(wa[tuples], axis=1) * disc.b[ell][cells] / n
        live = np.flatnonzero(weight != 0)
        if len(live) == 0:
            continue
        acc = np.zeros((m, n, r2))
        chunk = max(1, _CHUNK // (n ** k * r2))
        for lo in range(0, len(live), chunk):
            sel = live[lo:lo + chunk]
            q = len(sel)
            args = [psi_cells[cells[sel]].reshape((q, n) + (1,) * (k - 1) + (r2,))]
            for s in range(k - 1):
                shape = [q] + [1] * k + [r2]
                shape[s + 2] = n
                args.append(nb_cells[tuples[sel, s]].reshape(shape))
            vals = np.asarray(layer.g(t, *args), dtype=float)
            vals = np.broadcast_to(vals, (q, n) + (n,) * (k - 1) + (r2,))
            sums = vals.reshape(q, n, -1, r2).sum(axis=2)
            np.add.at(acc, cells[sel], weight[sel][:, None, None] * sums)
        out += acc.reshape(m * n, r2)
    return out


# ---------------------------------------------------------- trajectories

@dataclass(frozen=True, eq=False)
class EmpiricalTrajectory:
    """Recorded particle states realizing nu^{m,n}_t; weights a_i/n never change."""

    disc: Discretization
    times: np.ndarray
    states: np.ndarray      # (R, m*n, r2), wrapped into Y
    velocities: np.ndarray  # (R, m*n, r2) or None
    drift: float = 0.0
    dt: float = None
    scheme: str = "rk4"

    def field(self, r):
        return self.disc.field(self.states[r])

    def final(self):
        return self.states[-1]

    @cached_property
    def unwrapped(self):
        """States lifted along time so that torus paths are continuous."""
        Y = self.disc.state_space
        if Y.kind != "torus":
            return self.states
        steps = Y.displacement(self.states[:-1], self.states[1:])
        return np.concatenate([self.states[:1], self.states[:1] + np.cumsum(steps, axis=0)])

    def state_at(self, t):
        """Atom positions at time t by cubic Hermite (or linear) interpolation."""
        times = self.times
        if t <= times[0]:
            return self.states[0]
        if t >= times[-1]:
            return self.states[-1]
        r = int(np.searchsorted(times, t, side="right") - 1)
        t0, t1 = times[r], times[r + 1]
        if t == t0:
            return self.states[r]
        Y = self.disc.state_space
        h = t1 - t0
        s = (t - t0) / h
        y0 = self.states[r]
        y1 = y0 + Y.displacement(y0, self.states[r + 1])
        if self.velocities is None:
            y = (1 - s) * y0 + s * y1
        else:
            v0, v1 = self.velocities[r], self.velocities[r + 1]
            s2, s3 = s * s, s * s * s
            y = ((2 * s3 - 3 * s2 + 1) * y0 + (s3 - 2 * s2 + s) * h * v0
                 + (-2 * s3 + 3 * s2) * y1 + (s3 - s2) * h * v1)
        return Y.wrap(y)


def _steps(T, dt):
    if dt <= 0:
        raise ValueError("dt must be positive")
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"dt={dt} does not divide T={T}")
    return steps


def _check_finite(y, t):
    if not np.all(np.isfinite(y)):
        raise BlowUpError(t, "(non-finite state)")
    if np.abs(y).max(initial=0.0) > BLOWUP:
        raise BlowUpError(t, f"(|state| > {BLOWUP:g})")


def _run(f, y0, Y, dt, steps, scheme, record_every, t0=0.0):
    """Fixed-step integration of y' = f(t, y); returns times, states, slopes, drift."""
    if scheme not in ("rk4", "euler"):
        raise ValueError(f"unknown scheme {scheme!r}")
    y = np.array(y0, dtype=float)
    times, states, vels = [], [], []
    drift = 0.0
    k1 = f(t0, y)
    for step in range(steps):
        t = t0 + step * dt
        if step % record_every == 0:
            times.append(t)
            states.append(y.copy())
            vels.append(k1)
        if scheme == "rk4":
            k2 = f(t + dt / 2, y + (dt / 2) * k1)
            k3 = f(t + dt / 2, y + (dt / 2) * k2)
            k4 = f(t + dt, y + dt * k3)
            y = y + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        else:
            y = y + dt * k1
        y = Y.wrap(y)
        t_next = t0 + (step + 1) * dt
        _check_finite(y, t_next)
        drift = max(drift, float(Y.violation(y).max(initial=0.0)))
        k1 = f(t_next, y)
    times.append(t0 + steps * dt)
    states.append(y.copy())
    vels.append(k1)
    return np.array(times), np.array(states), np.array(vels), drift


def _check_initial(Y, states):
    if Y.kind != "torus":
        bad = Y.violation(states).max(initial=0.0)
        if bad > 1e-9 * Y._scale():
            raise ValueError(f"initial data leave the state space by {bad:.3g}")


def integrate(model, disc, scheme="rk4", dt=1e-2, T=None, record_every=1):
    """Fixed-step solution of the lattice system from disc.phi0 on [0, T]."""
    T = model.T if T is None else T
    steps = _steps(T, dt)
    _check_initial(disc.state_space, disc.phi0)
    f = lambda t, s: rhs_lattice(model, disc, t, s)
    times, states, vels, drift = _run(f, disc.phi0, disc.state_space, dt, steps, scheme, record_every)
    return EmpiricalTrajectory(disc, times, states, vels, drift, dt, scheme)


@dataclass(frozen=True)
class Path:
    times: np.ndarray
    states: np.ndarray
    drift: float = 0.0


def solve_characteristics(model, nu_traj, x, phi0, dt, t0=0.0, t1=None, scheme="rk4"):
    """Characteristic dphi/dt = V[eta, nu, h](t, x, phi) with nu frozen from nu_traj.

    Between recorded times the atoms of nu_traj are interpolated by cubic
    Hermite polynomials built from the recorded velocities; t1 < t0 runs the
    flow backwards.
    """
    t1 = float(nu_traj.times[-1]) if t1 is None else t1
    span = t1 - t0
    steps = _steps(abs(span), dt) if span else 0
    h = span / steps if steps else 0.0
    disc = nu_traj.disc
    Y = disc.state_space
    x = np.asarray(x, dtype=float)

    def f(t, phi):
        return v_operator(model, disc.field(nu_traj.state_at(t)), t, x, phi)

    phi0 = np.asarray(phi0, dtype=float).reshape(Y.dim)
    if steps == 0:
        return Path(np.array([t0]), phi0[None, :].copy())
    times, states, _, drift = _run(f, phi0, Y, h, steps, scheme, 1, t0)
    return Path(times, states, drift)


# ------------------------------------------------------------- budgets

@dataclass(frozen=True)
class LipschitzBudget:
    L1: float
    L2: float
    L3: float
    bl_h: float
    bl_g: tuple
    eta_norms: tuple
    nu_norm: float
    nu_norm2: float
    T: float
    estimated: bool = False

    @property
    def rate(self):
        """Gronwall exponent L1(nu2) + L2 ||nu1||."""
        return self.L1 + self.L2 * self.nu_norm


def sample_space(space, U):
    """Map points of the unit cube onto the space (deterministic)."""
    U = np.asarray(U, dtype=float)
    lo, hi = np.asarray(space.lower), np.asarray(space.upper)
    if space.kind in ("box", "torus", "finite-grid"):
        return lo + U * (hi - lo)
    if space.kind == "simplex":
        blk = U.reshape(len(U), space.blocks, space.block) + 1e-12
        if space.face:
            blk = blk / blk.sum(axis=2, keepdims=True) * space.total
        else:
            s = blk.sum(axis=2, keepdims=True)
            blk = blk * space.total / np.maximum(s, 1.0)
        return blk.reshape(len(U), space.dim)
    if space.kind == "sphere":
        blk = (2 * U - 1).reshape(len(U), space.blocks, space.block) + 1e-9
        blk = blk / np.linalg.norm(blk, axis=2, keepdims=True) * space.radius
        return blk.reshape(len(U), space.dim)
    raise ValueError(f"cannot sample {space.kind}")


def _product_distance(Y, u, v, parts):
    r2 = Y.dim
    return sum(Y.pairwise(u[:, s * r2:(s + 1) * r2], v[:, s * r2:(s + 1) * r2]).diagonal()
               for s in range(parts))


def estimate_bl_g(layer, Y, T, samples=2048, seed=0):
    """Sampled sup|g|_1 + max difference quotient of g over [0,T] x Y^k."""
    k, r2 = layer.k, Y.dim
    U = _low_discrepancy(samples, 1 + 2 * k * r2, seed)
    t = U[:, 0] * T
    u = np.hstack([sample_space(Y, U[:, 1 + s * r2:1 + (s + 1) * r2]) for s in range(k)])
    v = np.hstack([sample_space(Y, U[:, 1 + (k + s) * r2:1 + (k + s + 1) * r2]) for s in range(k)])
    # half of the pairs are close together so that local slopes are seen
    half = samples // 2
    v[:half] = u[:half] + 1e-4 * (v[:half] - u[:half])

    def g(z):
        parts = [z[:, s * r2:(s + 1) * r2] for s in range(k)]
        return np.asarray(layer.g(t.reshape(-1, 1), *parts), dtype=float)
    gu, gv = g(u), g(v)
    sup = max(np.abs(gu).sum(axis=1).max(), np.abs(gv).sum(axis=1).max())
    dist = np.zeros(samples)
    for s in range(k):
        a, b = u[:, s * r2:(s + 1) * r2], v[:, s * r2:(s + 1) * r2]
        diff = np.abs(a - b)
        if Y.kind == "torus":
            diff = np.minimum(diff, Y.period - diff)
        dist += diff.sum(axis=1)
    ok = dist > 0
    lip = (np.abs(gu - gv).sum(axis=1)[ok] / dist[ok]).max(initial=0.0)
    return float(sup + lip)


def estimate_bl_h(model, samples=2048, seed=0):
    """Sampled sup over t, x of BL(h(t, x, .)) on Y."""
    Y, X = model.Y, model.X
    r2, dX = Y.dim, X.dim
    U = _low_discrepancy(samples, 1 + dX + 2 * r2, seed)
    t = U[:, :1] * model.T
    x = sample_space(X, U[:, 1:1 + dX])
    u = sample_space(Y, U[:, 1 + dX:1 + dX + r2])
    v = sample_space(Y, U[:, 1 + dX + r2:])
    half = samples // 2
    v[:half] = u[:half] + 1e-4 * (v[:half] - u[:half])
    hu = np.broadcast_to(np.asarray(model.h(t, x, u), dtype=float), u.shape)
    hv = np.broadcast_to(np.asarray(model.h(t, x, v), dtype=float), v.shape)
    sup = max(np.abs(hu).sum(axis=1).max(), np.abs(hv).sum(axis=1).max())
    diff = np.abs(u - v)
    if Y.kind == "torus":
        diff = np.minimum(diff, Y.period - diff)
    dist = diff.sum(axis=1)
    ok = dist > 0
    lip = (np.abs(hu - hv).sum(axis=1)[ok] / dist[ok]).max(initial=0.0)
    return float(sup + lip)


def lipschitz_budget(model, nu_norm, nu_norm2=None, estimate=False, inflate=1.0,
                     samples=2048, seed=0):
    """Constants L1, L2, L3 of the continuous-dependence estimates.

    L1 = BL(h) + sum_l BL(g_l) |eta_l| |nu|^(k_l - 1),
    L2 = sum_l |eta_l| BL(g_l) sum_{i=0}^{k_l-2} |nu1|^i |nu2|^(k_l-2-i),
    L3 = T exp(L1 T) |nu|.
    Declared bounds are used unless ``estimate`` is set or a bound is missing;
    sampled estimates are multiplied by ``inflate``.
    """
    nu1 = float(nu_norm)
    nu2 = nu1 if nu_norm2 is None else float(nu_norm2)
    est = bool(estimate)
    if model.h_bl_bound is not None and not estimate:
        bl_h = float(model.h_bl_bound)
    else:
        bl_h = inflate * estimate_bl_h(model, samples, seed)
        est = True
    bl_g, norms = [], []
    for layer in model.layers:
        if layer.bl_bound is not None and not estimate:
            bl_g.append(float(layer.bl_bound))
        else:
            bl_g.append(inflate * estimate_bl_g(layer, model.Y, model.T, samples, seed))
            est = True
        norms.append(float(layer.eta.norm()))
    L1 = bl_h + sum(bg * en * nu2 ** (layer.k - 1)
                    for bg, en, layer in zip(bl_g, norms, model.layers))
    L2 = sum(en * bg * sum(nu1 ** i * nu2 ** (layer.k - 2 - i) for i in range(layer.k - 1))
             for bg, en, layer in zip(bl_g, norms, model.layers))
    with np.errstate(over="ignore"):
        L3 = float(model.T * np.exp(L1 * model.T) * nu2)
    return LipschitzBudget(L1, L2, L3, bl_h, tuple(bl_g), tuple(norms), nu1, nu2, model.T, est)


# ------------------------------------------------------------- Picard

@dataclass(frozen=True)
class PicardReport:
    distances: tuple     # d_alpha between successive iterates
    sup_distances: tuple  # d_0 between successive iterates
    alpha: float
    contraction: float
    converged: bool
    budget: LipschitzBudget

    @property
    def iterations(self):
        return len(self.distances)

    @property
    def ratios(self):
        d = self.distances
        return tuple(d[i + 1] / d[i] for i in range(len(d) - 1) if d[i] > 0)

    def eventually_geometric(self, slack=0.1):
        """Ratios over the second half of the run stay below contraction + slack."""
        r = self.ratios
        tail = r[len(r) // 2:]
        return len(r) > 0 and all(v <= self.contraction + slack for v in tail)


def _flow_under(model, disc, frozen, dt, steps, scheme):
    """Push every initial atom forward with nu frozen to the given trajectory."""
    f = lambda t, s: rhs_lattice(model, disc, t, s, neighbors=frozen.state_at(t))
    times, states, vels, drift = _run(f, disc.phi0, disc.state_space, dt, steps, scheme, 1)
    return EmpiricalTrajectory(disc, times, states, vels, drift, dt, scheme)


def _grid_distances(tr1, tr2, stride):
    rows = list(range(0, len(tr1.times), stride))
    if rows[-1] != len(tr1.times) - 1:
        rows.append(len(tr1.times) - 1)
    vals = np.array([float(d_infinity(tr1.field(r), tr2.field(r))) for r in rows])
    return tr1.times[rows], vals


def picard_fixed_point(model, disc, dt, tol=1e-10, max_iter=60, alpha=None, T=None,
                       scheme="rk4", metric_stride=1):
    """Solve nu_t = Phi_{t,0}[nu] # nu_0 by successive substitution.

    Starts from nu_t = nu_0.  Successive iterates are compared in d_alpha with
    alpha = 2 (L1 + L2 |nu|), which makes the contraction estimate <= 1/2, and
    in d_0.  The iteration stops once d_0 <= tol: with a large alpha the
    weight exp(-alpha T) hides late times from d_alpha, so d_alpha <= tol alone
    does not pin the solution down on all of [0, T].
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    T = model.T if T is None else T
    steps = _steps(T, dt)
    nu_norm = float(disc.a.max())
    budget = lipschitz_budget(discretized_model(model, disc), nu_norm)
    if alpha is None:
        alpha = 2.0 * (budget.L1 + budget.L2 * nu_norm)
    contraction = budget.L2 * nu_norm / (alpha - budget.L1) if alpha > budget.L1 else math.inf
    times = np.arange(steps + 1) * dt
    R = len(times)
    prev = EmpiricalTrajectory(disc, times, np.broadcast_to(disc.phi0, (R,) + disc.phi0.shape).copy(),
                               np.zeros((R,) + disc.phi0.shape), 0.0, dt, scheme)
    d_a, d_0 = [], []
    for _ in range(max_iter):
        new = _flow_under(model, disc, prev, dt, steps, scheme)
        tt, vals = _grid_distances(new, prev, metric_stride)
        d_a.append(float(np.max(np.exp(-alpha * tt) * vals)))
        d_0.append(float(vals.max()))
        prev = new
        if d_0[-1] <= tol:
            return new, PicardReport(tuple(d_a), tuple(d_0), alpha, contraction, True, budget)
    raise ConvergenceError(PicardReport(tuple(d_a), tuple(d_0), alpha, contraction, False, budget))


# ------------------------------------------------------------- audits

@dataclass(frozen=True)
class InvarianceReport:
    max_value: float
    passed: bool
    samples: int
    vacuous: bool = False
    witness: dict = None

    def lines(self):
        out = [f"invariance_pass={int(self.passed)}", f"invariance_max={self.max_value!r}",
               f"invariance_samples={self.samples}", f"invariance_vacuous={int(self.vacuous)}"]
        if self.witness:
            for key, val in self.witness.items():
                out.append(f"invariance_witness_{key}={val}")
        return out


def _faces(Y):
    """Boundary faces as (name, point_fn(U) -> points, outward unit normal)."""
    d = Y.dim
    lo, hi = np.asarray(Y.lower), np.asarray(Y.upper)
    faces = []
    if Y.kind in ("box", "finite-grid"):
        for a in range(d):
            for side, val, sgn in (("lower", lo[a], -1.0), ("upper", hi[a], 1.0)):
                def pts(U, a=a, val=val):
                    p = lo + U * (hi - lo)
                    p[:, a] = val
                    return p
                nrm = np.zeros(d)
                nrm[a] = sgn
                faces.append((f"x{a + 1}={side}", pts, nrm))
        return faces
    if Y.kind == "simplex":
        if Y.blocks != 1:
            raise ValueError("invariance checks support a single simplex factor")
        for a in range(d):
            def pts(U, a=a):
                p = sample_space(Y, U)
                p[:, a] = 0.0
                if Y.face:
                    s = p.sum(axis=1, keepdims=True)
                    p = np.where(s > 0, p / np.where(s > 0, s, 1.0) * Y.total, p)
                return p
            nrm = -np.eye(d)[a]
            if Y.face:
                nrm = nrm + 1.0 / d
            faces.append((f"x{a + 1}=0", pts, nrm / np.linalg.norm(nrm)))
        if not Y.face:
            def pts(U):
                p = U + 1e-12
                return p / p.sum(axis=1, keepdims=True) * Y.total
            faces.append(("sum=total", pts, np.ones(d) / math.sqrt(d)))
        return faces
    raise ValueError(f"no outward normals for a {Y.kind} state space")


def _vertices(Y):
    if Y.kind == "simplex":
        verts = [Y.total * np.eye(Y.dim)[a] for a in range(Y.dim)]
        if not Y.face:
            verts.append(np.zeros(Y.dim))
        return np.array(verts)
    lo, hi = np.asarray(Y.lower), np.asarray(Y.upper)
    corners = np.array(np.meshgrid(*[[0, 1]] * Y.dim, indexing="ij")).reshape(Y.dim, -1).T
    return lo + corners * (hi - lo)


def check_invariance(model, boundary_samples=4096, nu_mass=1.0, seed=0, tol=1e-9):
    """Max of V . normal over sampled boundary points of Y, times and vertices x.

    nu is taken as nu_mass * delta_psi for every y, with psi cycling through
    the boundary point itself, the vertices of Y and low-discrepancy points.
    """
    Y, X = model.Y, model.X
    if Y.kind == "torus":
        return InvarianceReport(-math.inf, True, 0, vacuous=True)
    faces = _faces(Y)
    verts = _vertices(Y)
    r2, dX = Y.dim, X.dim
    U = _low_discrepancy(boundary_samples, 1 + dX + 2 * r2, seed)
    best, witness = -math.inf, None
    for s in range(boundary_samples):
        name, pts, nrm = faces[s % len(faces)]
        t = U[s, 0] * model.T
        x = sample_space(X, U[s:s + 1, 1:1 + dX])[0]
        phi = pts(U[s:s + 1, 1 + dX:1 + dX + r2])[0]
        mode = s % 4
        if mode == 0:
            psi = phi
        elif mode == 1:
            psi = verts[(s // 4) % len(verts)]
        else:
            psi = sample_space(Y, U[s:s + 1, 1 + dX + r2:])[0]
        nu = AtomicMeasure(Y, psi[None, :], [nu_mass], check=False)
        val = float(v_operator(model, nu, t, x, phi) @ nrm)
        if val > best:
            best = val
            witness = {"face": name, "t": repr(float(t)), "x": repr(x.tolist()),
                       "phi": repr(phi.tolist()), "psi": repr(psi.tolist()), "value": repr(val)}
    return InvarianceReport(best, best <= tol, boundary_samples, witness=witness)


@dataclass(frozen=True)
class GronwallReport:
    times: np.ndarray
    measured: np.ndarray
    bound: np.ndarray
    rate: float
    budget: LipschitzBudget
    passed: bool

    @property
    def max_ratio(self):
        """Largest measured / bound over grid times after t = 0 (where both agree)."""
        m, b = self.measured[1:], self.bound[1:]
        ok = b > 0
        return float((m[ok] / b[ok]).max(initial=0.0))


def gronwall_check(model, disc, perturbation, dt, T=None, scheme="rk4", record_every=1,
                   estimate=False, inflate=1.0, rtol=1e-6):
    """Compare d_inf(nu1_t, nu2_t) with exp((L1 + L2 |nu|) t) d_inf(nu1_0, nu2_0)."""
    offset = perturbation(disc.phi0) if callable(perturbation) else np.asarray(perturbation, dtype=float)
    disc2 = disc.with_initial(disc.phi0 + np.broadcast_to(offset, disc.phi0.shape))
    _check_initial(disc.state_space, disc2.phi0)
    tr1 = integrate(model, disc, scheme, dt, T, record_every)
    tr2 = integrate(model, disc2, scheme, dt, T, record_every)
    nu_norm = float(disc.a.max())
    budget = lipschitz_budget(discretized_model(model, disc), nu_norm, estimate=estimate, inflate=inflate)
    measured = np.array([float(d_infinity(tr1.field(r), tr2.field(r))) for r in range(len(tr1.times))])
    with np.errstate(over="ignore"):
        bound = np.exp(budget.rate * tr1.times) * measured[0]
    passed = bool(np.all(measured <= bound * (1 + rtol)))
    return GronwallReport(tr1.times, measured, bound, budget.rate, budget, passed)


def _fd_dt(w, t, phi, eps=1e-5):
    return (-w(t + 2 * eps, phi) + 8 * w(t + eps, phi) - 8 * w(t - eps, phi) + w(t - 2 * eps, phi)) / (12 * eps)


def _fd_grad(w, t, phi, eps=1e-5):
    out = np.zeros_like(phi)
    for a in range(phi.shape[1]):
        e = np.zeros(phi.shape[1])
        e[a] = eps
        out[:, a] = (-w(t, phi + 2 * e) + 8 * w(t, phi + e) - 8 * w(t, phi - e) + w(t, phi - 2 * e)) / (12 * eps)
    return out


def weak_residual(model, traj, w, x, dw_dt=None, grad_w=None):
    """|int_0^T int (dw/dt + V . grad w) dnu_t^x dt + int w(0, .) dnu_0^x|.

    Time integral by the trapezoid rule on the recorded grid; atoms on a torus
    are followed along their lifted (continuous) paths.  ``w`` maps (t, phi)
    with phi of shape (n, r2) to n values; derivatives default to 4th order
    finite differences.
    """
    disc = traj.disc
    i = int(disc.partition.locate(x)[0])
    if i < 0:
        raise CoverageError("x lies outside the domain")
    n = disc.n
    rows = slice(i * n, (i + 1) * n)
    S = traj.unwrapped[:, rows]
    times = traj.times
    T = float(times[-1])
    Y = disc.state_space
    probe = np.concatenate([S[-1], sample_space(Y, _low_discrepancy(16, Y.dim))])
    if np.abs(w(T, probe)).max() > 1e-12:
        raise ValueError("test function does not vanish at the final time")
    if traj.velocities is not None:
        V = traj.velocities[:, rows]
    else:
        V = np.array([rhs_lattice(model, disc, t, st)[rows] for t, st in zip(times, traj.states)])
    dwdt = dw_dt or (lambda t, p: _fd_dt(w, t, p))
    grad = grad_w or (lambda t, p: _fd_grad(w, t, p))
    weight = disc.a[i] / n
    vals = np.array([weight * np.sum(dwdt(t, S[r]) + np.sum(V[r] * grad(t, S[r]), axis=1))
                     for r, t in enumerate(times)])
    integral = float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(times)))
    return abs(integral + weight * float(np.sum(w(0.0, S[0]))))


# -------------------------------------------------------- convergence

@dataclass(frozen=True)
class ConvergenceTable:
    rows: tuple          # (m, n, d0, seconds)
    reference: tuple
    monotone: bool
    slope: float

    def csv(self, timings=False):
        head = "m,n,d0,wall_seconds" if timings else "m,n,d0"
        lines = [head]
        for m, n, d0, sec in self.rows:
            lines.append(f"{m},{n},{d0!r}" + (f",{sec:.3f}" if timings else ""))
        return "\n".join(lines) + "\n"


def convergence_study(model, nu0, schedule, dt, scheme="rk4", T=None, record_every=1,
                      quad=QUAD_POINTS, seed=0, slack=0.10, threads=1):
    """d0 between each lattice solution and the finest one in the schedule.

    The DHGMs are the model's layers, nu0 the initial field; the reference is
    the entry with the largest m*n.  ``monotone`` records whether d0 is weakly
    decreasing along the schedule within the relative slack.
    """
    schedule = [tuple(int(v) for v in mn) for mn in schedule]
    if len(schedule) < 2:
        raise ValueError("the schedule needs at least two (m, n) entries")
    ref_mn = max(schedule, key=lambda mn: (mn[0] * mn[1], mn))
    runs = {}
    for mn in schedule:
        if mn in runs:
            continue
        start = time.perf_counter()
        disc = discretize(model, nu0, mn[0], mn[1], quad, seed)
        traj = integrate(model, disc, scheme, dt, T, record_every)
        runs[mn] = (traj, time.perf_counter() - start)
    ref = runs[ref_mn][0]
    rows = []
    for mn in schedule:
        traj, sec = runs[mn]
        d0 = 0.0 if mn == ref_mn else d_alpha(traj, ref, 0.0, threads=threads)
        rows.append((mn[0], mn[1], float(d0), sec))
    body = [r for r in rows if (r[0], r[1]) != ref_mn]
    monotone = all(b[2] <= a[2] * (1 + slack) for a, b in zip(body, body[1:]))
    slope = math.nan
    pos = [r for r in body if r[2] > 0]
    if len(pos) >= 2:
        slope = float(np.polyfit(np.log([r[1] for r in pos]), np.log([r[2] for r in pos]), 1)[0])
    return ConvergenceTable(tuple(rows), ref_mn, monotone, slope)
