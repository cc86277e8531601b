"""Ready-made models: ring and Kuramoto-Sakaguchi oscillators, SIS, Lotka-Volterra.

Every callable a model needs comes from a registry of named forms, so a model
is fully described by a name plus numeric parameters.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .dhgm import from_adjacency_atomic, gallery, ring_adjacency
from .dynamics import CouplingLayer, ModelSpec, check_invariance
from .measure_core import AtomicMeasure, Space, _low_discrepancy

TWO_PI = 2 * math.pi


# --------------------------------------------------------------- registry

def sin_lag(k, strength=1.0, lag=0.0):
    """g(phi, psi_1..psi_{k-1}) = s sin(sum psi - (k-1) phi + lag); BL = s k."""
    def g(t, phi, *psis):
        return strength * np.sin(sum(psis) - (k - 1) * phi + lag)
    return g, abs(strength) * k


def constant_frequency(omega=1.0):
    def h(t, x, phi):
        return np.broadcast_to(np.asarray(omega, dtype=float), np.shape(phi))
    return h, abs(omega)


def cosine_frequency(omega0=0.0, omega1=1.0):
    """omega(x) = omega0 + omega1 cos(2 pi x_1)."""
    def h(t, x, phi):
        x = np.asarray(x, dtype=float)
        om = omega0 + omega1 * np.cos(TWO_PI * x[..., :1])
        return np.broadcast_to(om, np.broadcast_shapes(om.shape, np.shape(phi)))
    return h, abs(omega0) + abs(omega1)


def zero_h(t, x, phi):
    return np.zeros(np.shape(phi))


def mass_action_beta(b=1.0):
    """beta(t, u1, u2) = b u1 u2."""
    if b < 0:
        raise ValueError("transmission rate must be >= 0")
    return lambda t, u1, u2: b * u1 * u2


def saturating_beta(b=1.0, K=1.0):
    """beta(t, u1, u2) = b u1 u2 / (K + u1)."""
    return lambda t, u1, u2: b * u1 * u2 / (K + u1)


def linear_gamma(c=1.0):
    """gamma(t, x, u) = c u."""
    if c < 0:
        raise ValueError("recovery rate must be >= 0")
    return lambda t, x, u: c * u


def identity_kernel(c=1.0):
    return lambda u: u, 1.0


def linear_kernel(c=0.5):
    if not 0 <= c <= 1:
        raise ValueError("linear kernel slope must lie in [0, 1]")
    return lambda u: c * u, c


def tanh_kernel(c=1.0):
    if not 0 <= c <= 1:
        raise ValueError("tanh kernel scale must lie in [0, 1]")
    return lambda u: c * np.tanh(u), c


FORMS = {
    "sin_lag": sin_lag,
    "constant_frequency": constant_frequency,
    "cosine_frequency": cosine_frequency,
    "mass_action_beta": mass_action_beta,
    "saturating_beta": saturating_beta,
    "linear_gamma": linear_gamma,
    "identity_kernel": identity_kernel,
    "linear_kernel": linear_kernel,
    "tanh_kernel": tanh_kernel,
}


def form(name, **params):
    if name not in FORMS:
        raise ValueError(f"unknown form {name!r}; known: {', '.join(sorted(FORMS))}")
    return FORMS[name](**params)


# ---------------------------------------------------------- initial data

class FiberField:
    """x -> nu^x given by a fiber function returning AtomicMeasures on Y."""

    def __init__(self, space, fn, name=""):
        self.space = space
        self.target = space
        self._fn = fn
        self.name = name

    def fiber(self, x):
        return self._fn(np.asarray(x, dtype=float))


def constant_state(Y, point, mass=1.0):
    p = np.asarray(point, dtype=float)
    if not Y.contains(p):
        raise ValueError(f"initial state {p.tolist()} lies outside the state space")
    mu = AtomicMeasure(Y, p[None, :], [mass])
    return FiberField(Y, lambda x: mu, "constant")


def phase_arc(Y, center=0.0, twist=1.0, width=math.pi, resolution=32, mass=1.0):
    """Uniform atoms on an arc of the phase circle centred at center + 2 pi twist x."""
    offs = (np.arange(resolution) + 0.5) / resolution - 0.5

    def fn(x):
        c = center + TWO_PI * twist * float(x[0])
        return AtomicMeasure(Y, (c + width * offs)[:, None], np.full(resolution, mass / resolution))
    return FiberField(Y, fn, "phase_arc")


def box_cloud(Y, lower, upper, resolution=4, mass=1.0, tilt=0.0):
    """Grid of atoms in a sub-box of Y, shifted by tilt * (x_1 - 1/2)."""
    lo, hi = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    ax = [(np.arange(resolution) + 0.5) / resolution] * Y.dim
    base = np.array(np.meshgrid(*ax, indexing="ij")).reshape(Y.dim, -1).T
    pts = lo + base * (hi - lo)

    def fn(x):
        p = pts + tilt * (float(x[0]) - 0.5)
        return AtomicMeasure(Y, p, np.full(len(p), mass / len(p)))
    if not Y.contains(pts - abs(tilt) / 2) or not Y.contains(pts + abs(tilt) / 2):
        raise ValueError("initial cloud leaves the state space")
    return FiberField(Y, fn, "box_cloud")


def sis_infected(Y, i0=0.1, i1=0.05, spread=0.05, resolution=8):
    """Atoms (N - I, I) with I spread around (i0 + i1 cos 2 pi x) N."""
    N = Y.total
    offs = ((np.arange(resolution) + 0.5) / resolution - 0.5) * 2 * spread

    def fn(x):
        I = np.clip((i0 + i1 * math.cos(TWO_PI * float(x[0])) + offs) * N, 0.0, N)
        return AtomicMeasure(Y, np.column_stack([N - I, I]), np.full(resolution, 1.0 / resolution))
    return FiberField(Y, fn, "sis_infected")


# ---------------------------------------------------------------- models

@dataclass(frozen=True)
class KuramotoParams:
    h: str = "constant_frequency"
    h_params: dict = field(default_factory=lambda: {"omega": 1.0})
    lag: float = 0.0
    strengths: tuple = (1.0, 1.0, 1.0)


def _frequency(params):
    return form(params.h, **params.h_params)


def make_ring_kuramoto(limit=True, N=16, params=None, T=2.0):
    """Phase oscillators on the nearest-neighbour ring and its two-step 3-edges.

    With ``limit`` the layers are eta_1^x = 2 delta_x and eta_2^x = 2 delta_(x,x);
    otherwise the atomic representations of the normalized N-node tensors.
    """
    params = params or KuramotoParams()
    X = Space.torus(1)
    Y = Space.torus(1, TWO_PI)
    layers = []
    for layer in (1, 2):
        s = params.strengths[layer - 1]
        if s == 0:
            continue
        g, bl = sin_lag(layer + 1, s, params.lag)
        if limit:
            eta = gallery("ring", layer=layer)
        else:
            eta = from_adjacency_atomic(ring_adjacency(N, layer, normalized=True), X, name=f"ring{layer}_N{N}")
        layers.append(CouplingLayer(layer + 1, g, eta, bl, f"ring{layer}"))
    h, blh = _frequency(params)
    return ModelSpec(X, Y, tuple(layers), h, T, blh, "ring_kuramoto",
                     {"limit": limit, "N": N, "lag": params.lag})


def make_kuramoto_sakaguchi(params=None, etas=None, T=1.0):
    """Phase oscillators on X = [0, 1] with pair, triple and quadruple couplings."""
    params = params or KuramotoParams()
    X = Space.interval()
    if etas is None:
        etas = (gallery("complete", k=2, resolution=8), gallery("complete", k=3, resolution=4),
                gallery("complete", k=4, resolution=2))
    if [e.k for e in etas] != [2, 3, 4]:
        raise ValueError("Kuramoto-Sakaguchi needs DHGMs of cardinality 2, 3 and 4")
    layers = []
    for ell, eta in enumerate(etas):
        s = params.strengths[ell]
        g, bl = sin_lag(ell + 2, s, params.lag)
        layers.append(CouplingLayer(ell + 2, g, eta, bl, f"g{ell + 1}"))
    h, blh = _frequency(params)
    return ModelSpec(X, Space.torus(1, TWO_PI), tuple(layers), h, T, blh, "kuramoto_sakaguchi",
                     {"lag": params.lag})


@dataclass(frozen=True)
class SISParams:
    N: float = 1.0
    beta: str = "mass_action_beta"
    beta_params: dict = field(default_factory=lambda: {"b": 1.0})
    gamma: str = "linear_gamma"
    gamma_params: dict = field(default_factory=lambda: {"c": 0.5})


def _spot_check_sis(beta, gamma, N, samples=256):
    U = _low_discrepancy(samples, 4)
    t, u1, u2, x = U[:, 0], U[:, 1] * N, U[:, 2] * N, U[:, 3:4]
    zero = np.zeros(samples)
    if np.any(beta(t, u1, u2) < 0):
        raise ValueError("transmission must be nonnegative")
    if np.any(beta(t, zero, u2) != 0) or np.any(beta(t, u1, zero) != 0):
        raise ValueError("transmission must vanish when u1 u2 = 0")
    if np.any(gamma(t, x, u1) < 0):
        raise ValueError("recovery must be nonnegative")
    if np.any(gamma(t, x, zero) != 0):
        raise ValueError("recovery must vanish at u = 0")


def make_sis(params=None, eta=None, T=10.0):
    """Susceptible/infected counts (S, I) on Y = {S + I = N, S, I >= 0}.

    g(phi, psi1, psi2) = (beta(I1, S) + beta(I2, S)) (-1, 1) and
    h(x, phi) = gamma(x, I) (1, -1): both have zero component sum, so S + I is
    conserved node by node.
    """
    params = params or SISParams()
    N = float(params.N)
    beta = form(params.beta, **params.beta_params)
    gamma = form(params.gamma, **params.gamma_params)
    _spot_check_sis(beta, gamma, N)
    X = Space.interval()
    Y = Space.simplex(2, total=N, face=True)
    eta = eta if eta is not None else gallery("complete", k=3, resolution=4)
    if eta.k != 3:
        raise ValueError("the SIS coupling needs a DHGM of cardinality 3")
    sign = np.array([-1.0, 1.0])

    def g(t, phi, psi1, psi2):
        S = phi[..., :1]
        rate = beta(t, psi1[..., 1:2], S) + beta(t, psi2[..., 1:2], S)
        return rate * sign

    def h(t, x, phi):
        return gamma(t, x[..., :1], phi[..., 1:2]) * (-sign)

    bl_g = bl_h = None
    if params.beta == "mass_action_beta":
        b = params.beta_params.get("b", 1.0)
        bl_g = 4 * b * N * N + 4 * b * N
    if params.gamma == "linear_gamma":
        c = params.gamma_params.get("c", 1.0)
        bl_h = 2 * c * N + 2 * c
    layer = CouplingLayer(3, g, eta, bl_g, "infection")
    return ModelSpec(X, Y, (layer,), h, T, bl_h, "sis", {"N": N})


@dataclass(frozen=True)
class LVParams:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 0.5
    iota: float = 0.5
    sigma: float = 1.0
    theta: float = 1.0
    Lambda1: float = None
    Lambda2: float = None
    kernels: tuple = (("linear_kernel", {"c": 0.5}),) * 4

    def resolved(self):
        """Caps with missing values filled by the smallest admissible choice."""
        L1 = self.alpha / self.beta if self.Lambda1 is None else self.Lambda1
        L2 = self.Lambda2
        if L2 is None:
            L2 = max(-self.iota / self.theta + self.sigma / self.theta * L1, 0.0)
            L2 = L2 if L2 > 0 else 1.0
        return L1, L2


def lambda_condition(p):
    L1, L2 = p.resolved()
    return L1 >= p.alpha / p.beta and L2 >= -p.iota / p.theta + p.sigma / p.theta * L1


def _spot_check_kernel(W, name, samples=257):
    u = np.linspace(0.0, 10.0, samples)
    if not np.allclose(W(-u), -W(u), rtol=0, atol=1e-12):
        raise ValueError(f"kernel {name} is not odd")
    Wu = W(u)
    if np.any(Wu < -1e-15) or np.any(Wu > u + 1e-12):
        raise ValueError(f"kernel {name} violates 0 <= W(u) <= u")


def make_lotka_volterra(params=None, eta1=None, eta2=None, T=1.0):
    """Two competing species with hypergraph dispersal on Y = [0, L1] x [0, L2]."""
    p = params or LVParams()
    for v in (p.alpha, p.beta, p.gamma, p.iota, p.sigma, p.theta):
        if v < 0:
            raise ValueError("Lotka-Volterra coefficients must be nonnegative")
    L1, L2 = p.resolved()
    if L1 <= 0 or L2 <= 0:
        raise ValueError("caps must be positive")
    Ws, lips = [], []
    for name, kp in p.kernels:
        W, lip = form(name, **kp)
        _spot_check_kernel(W, name)
        Ws.append(W)
        lips.append(lip)
    W11, W12, W21, W22 = Ws
    X = Space.interval()
    Y = Space.box([0.0, 0.0], [L1, L2])
    eta1 = eta1 if eta1 is not None else gallery("complete", k=3, resolution=4)
    eta2 = eta2 if eta2 is not None else gallery("complete", k=3, resolution=4)
    if eta1.k != 3 or eta2.k != 3:
        raise ValueError("dispersal DHGMs must have cardinality 3")

    def g1(t, phi, psi1, psi2):
        v = W11(psi1[..., 0] - phi[..., 0]) + W12(psi2[..., 0] - phi[..., 0])
        return np.stack([v, np.zeros_like(v)], axis=-1)

    def g2(t, phi, psi1, psi2):
        v = W21(psi1[..., 1] - phi[..., 1]) + W22(psi2[..., 1] - phi[..., 1])
        return np.stack([np.zeros_like(v), v], axis=-1)

    a, b, c, i_, s, th = p.alpha, p.beta, p.gamma, p.iota, p.sigma, p.theta

    def h(t, x, phi):
        f1, f2 = phi[..., 0], phi[..., 1]
        return np.stack([f1 * (a - b * f1 - c * f2), f2 * (-i_ + s * f1 - th * f2)], axis=-1)

    # sup of |g|_1 over Y^3 plus the 1-norm Lipschitz constant
    sup1 = float(abs(W11(L1)) + abs(W12(L1)))
    sup2 = float(abs(W21(L2)) + abs(W22(L2)))
    bl1 = sup1 + lips[0] + lips[1]
    bl2 = sup2 + lips[2] + lips[3]
    sup_h = L1 * (a + b * L1 + c * L2) + L2 * (i_ + s * L1 + th * L2)
    lip_h = max(a + 2 * b * L1 + c * L2 + s * L2, c * L1 + i_ + s * L1 + 2 * th * L2)
    layers = (CouplingLayer(3, g1, eta1, bl1, "dispersal1"), CouplingLayer(3, g2, eta2, bl2, "dispersal2"))
    return ModelSpec(X, Y, layers, h, T, sup_h + lip_h, "lotka_volterra",
                     {"Lambda1": L1, "Lambda2": L2, "lambda_condition": lambda_condition(p)})


def lv_equilibrium(params):
    """Interior equilibrium of the dispersal-free system, or None if there is none."""
    p = params
    A = np.array([[p.beta, p.gamma], [-p.sigma, p.theta]], dtype=float)
    rhs = np.array([p.alpha, -p.iota], dtype=float)
    try:
        eq = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        return None
    return eq if np.all(eq > 0) else None


def lv_certificate(model, boundary_samples=4096, seed=0):
    """Boundary check over the four faces of the rectangle."""
    return check_invariance(model, boundary_samples, seed=seed)


# ------------------------------------------------------------- lookup

MODELS = {
    "ring_kuramoto": make_ring_kuramoto,
    "kuramoto_sakaguchi": make_kuramoto_sakaguchi,
    "sis": make_sis,
    "lotka_volterra": make_lotka_volterra,
}


def order_parameter(phases, weights=None):
    """|sum w e^{i phi}| / sum w."""
    phases = np.asarray(phases, dtype=float).ravel()
    w = np.ones_like(phases) if weights is None else np.asarray(weights, dtype=float).ravel()
    return float(abs(np.sum(w * np.exp(1j * phases))) / np.sum(w))


def polynomial_test_functions(T, dim=1):
    """Five test functions zeta(t) p(phi) with zeta(T) = 0, with exact derivatives.

    p runs over phi_1, phi_1^2, phi_1^3 / 10, 1 + phi_1 and phi_1 phi_last;
    zeta over (T - t), (T - t)^2 and sin(pi (T - t) / T).
    """
    zetas = [
        (lambda t: T - t, lambda t: -1.0),
        (lambda t: (T - t) ** 2, lambda t: -2.0 * (T - t)),
        (lambda t: math.sin(math.pi * (T - t) / T), lambda t: -math.pi / T * math.cos(math.pi * (T - t) / T)),
    ]

    def grad1(fn):
        def g(p):
            out = np.zeros_like(p)
            out[:, 0] = fn(p)
            return out
        return g

    def mixed_grad(p):
        out = np.zeros_like(p)
        out[:, 0] += p[:, -1]
        out[:, -1] += p[:, 0]
        return out

    polys = [
        ("phi", lambda p: p[:, 0], grad1(lambda p: np.ones(len(p)))),
        ("phi^2", lambda p: p[:, 0] ** 2, grad1(lambda p: 2 * p[:, 0])),
        ("phi^3/10", lambda p: p[:, 0] ** 3 / 10, grad1(lambda p: 0.3 * p[:, 0] ** 2)),
        ("1+phi", lambda p: 1 + p[:, 0], grad1(lambda p: np.ones(len(p)))),
        ("phi*phi_last", lambda p: p[:, 0] * p[:, -1], mixed_grad),
    ]
    out = []
    for q, (name, p, gp) in enumerate(polys):
        z, dz = zetas[q % len(zetas)]
        out.append((name,
                    lambda t, ph, z=z, p=p: z(t) * p(ph),
                    lambda t, ph, dz=dz, p=p: dz(t) * p(ph),
                    lambda t, ph, z=z, gp=gp: z(t) * gp(ph)))
    return out
