"""Command line runner: simulate, converge, distance, check, gallery.

Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 failed check.
"""
import argparse
import json
import os
import sys

import numpy as np
import yaml

from . import models as M
from .dhgm import (AdjacencyTensor, PiecewiseAtomicField, Partition, d_infinity, dumps_dhgm,
                   from_adjacency_atomic, from_adjacency_density, gallery, gallery_names,
                   loads_dhgm, make_partition, materialize, representation_gap, ring_adjacency)
from .dynamics import (BlowUpError, ConvergenceError, convergence_study, discretize,
                       discretized_model, gronwall_check, integrate, lipschitz_budget,
                       check_invariance, weak_residual)
from .measure_core import AtomicMeasure, Space, SizeError, bl_distance, loads_measure

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_CHECK = 0, 1, 2, 3
OUT_ENV = "HYPERVLASOV_OUT"


class ConfigError(ValueError):
    def __init__(self, path, msg):
        super().__init__(f"{path}: {msg}")
        self.path = path


# ------------------------------------------------------------- config

def _get(d, key, path, kind=None, default=None, required=False):
    if not isinstance(d, dict):
        raise ConfigError(path, "expected a mapping")
    if key not in d or d[key] is None:
        if required:
            raise ConfigError(f"{path}.{key}", "missing")
        return default
    v = d[key]
    if kind is float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{path}.{key}", f"expected a number, got {v!r}")
        return float(v)
    if kind is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{path}.{key}", f"expected an integer, got {v!r}")
        return v
    if kind is not None and not isinstance(v, kind):
        raise ConfigError(f"{path}.{key}", f"expected {kind.__name__}, got {v!r}")
    return v


def load_config(path):
    if not os.path.exists(path):
        raise ConfigError("config", f"file {path} does not exist")
    with open(path) as fh:
        try:
            cfg = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("config", f"not valid YAML: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be a mapping")
    cfg.setdefault("_base", os.path.dirname(os.path.abspath(path)))
    return cfg


def _kuramoto_params(p, path):
    strengths = p.get("strengths", [1.0, 1.0, 1.0])
    if not isinstance(strengths, list) or not all(isinstance(s, (int, float)) for s in strengths):
        raise ConfigError(f"{path}.strengths", "expected a list of numbers")
    strengths = tuple(float(s) for s in strengths) + (1.0,) * (3 - len(strengths))
    return M.KuramotoParams(h=_get(p, "h", path, str, "constant_frequency"),
                            h_params=_get(p, "h_params", path, dict, {"omega": 1.0}),
                            lag=_get(p, "lag", path, float, 0.0), strengths=strengths)


def _dhgm_block(block, X, path, base):
    if "gallery" in block:
        name = _get(block, "gallery", path, str)
        params = _get(block, "params", path, dict, {})
        try:
            return gallery(name, **params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}.gallery", str(exc)) from None
    if "adjacency" in block:
        f = _get(block, "adjacency", path, str)
        f = f if os.path.isabs(f) else os.path.join(base, f)
        if not os.path.exists(f):
            raise ConfigError(f"{path}.adjacency", f"file {f} does not exist")
        try:
            W = AdjacencyTensor.read(f)
        except ValueError as exc:
            raise ConfigError(f"{path}.adjacency", str(exc)) from None
        if _get(block, "normalize", path, bool, False):
            W = W.scaled(float(W.N) ** (W.k - 1))
        rep = _get(block, "representation", path, str, "atomic")
        if rep == "atomic":
            return from_adjacency_atomic(W, X)
        if rep == "density":
            return from_adjacency_density(W, X, _get(block, "quad", path, int, 16))
        raise ConfigError(f"{path}.representation", "expected 'atomic' or 'density'")
    raise ConfigError(path, "expected a 'gallery' or 'adjacency' entry")


def build_model(cfg):
    mb = _get(cfg, "model", "config", dict, required=True)
    name = _get(mb, "name", "model", str, required=True)
    p = _get(mb, "params", "model", dict, {})
    T = _get(mb, "T", "model", float, None)
    T = _get(cfg.get("integrator", {}) or {}, "T", "integrator", float, T)
    kw = {} if T is None else {"T": T}
    if T is not None and T <= 0:
        raise ConfigError("integrator.T", "must be positive")
    base = cfg.get("_base", ".")
    blocks = _get(cfg, "dhgm", "config", list, [])
    try:
        if name == "ring_kuramoto":
            model = M.make_ring_kuramoto(_get(p, "limit", "model.params", bool, True),
                                         _get(p, "N", "model.params", int, 16),
                                         _kuramoto_params(p, "model.params"), **kw)
        elif name == "kuramoto_sakaguchi":
            etas = None
            if blocks:
                etas = tuple(_dhgm_block(b, Space.interval(), f"dhgm[{i}]", base) for i, b in enumerate(blocks))
            model = M.make_kuramoto_sakaguchi(_kuramoto_params(p, "model.params"), etas, **kw)
        elif name == "sis":
            sp = M.SISParams(N=_get(p, "N", "model.params", float, 1.0),
                             beta=_get(p, "beta", "model.params", str, "mass_action_beta"),
                             beta_params=_get(p, "beta_params", "model.params", dict, {"b": 1.0}),
                             gamma=_get(p, "gamma", "model.params", str, "linear_gamma"),
                             gamma_params=_get(p, "gamma_params", "model.params", dict, {"c": 0.5}))
            eta = _dhgm_block(blocks[0], Space.interval(), "dhgm[0]", base) if blocks else None
            model = M.make_sis(sp, eta, **kw)
        elif name == "lotka_volterra":
            fields = {}
            for key in ("alpha", "beta", "gamma", "iota", "sigma", "theta", "Lambda1", "Lambda2"):
                v = _get(p, key, "model.params", float, None)
                if v is not None:
                    fields[key] = v
            ks = p.get("kernels")
            if ks is not None:
                if not isinstance(ks, list) or len(ks) != 4:
                    raise ConfigError("model.params.kernels", "expected four kernel entries (W11, W12, W21, W22)")
                fields["kernels"] = tuple((_get(k, "form", f"model.params.kernels[{i}]", str, required=True),
                                           _get(k, "params", f"model.params.kernels[{i}]", dict, {}))
                                          for i, k in enumerate(ks))
            etas = [_dhgm_block(b, Space.interval(), f"dhgm[{i}]", base) for i, b in enumerate(blocks)]
            etas += [None] * (2 - len(etas))
            model = M.make_lotka_volterra(M.LVParams(**fields), etas[0], etas[1], **kw)
        else:
            raise ConfigError("model.name", f"unknown model {name!r}; known: {', '.join(sorted(M.MODELS))}")
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("model", str(exc)) from None
    return model


def build_initial(cfg, model):
    ib = _get(cfg, "initial", "config", dict, required=True)
    kind = _get(ib, "form", "initial", str, required=True)
    p = _get(ib, "params", "initial", dict, {})
    makers = {"phase_arc": M.phase_arc, "constant_state": M.constant_state,
              "box_cloud": M.box_cloud, "sis_infected": M.sis_infected}
    if kind not in makers:
        raise ConfigError("initial.form", f"unknown form {kind!r}; known: {', '.join(sorted(makers))}")
    try:
        return makers[kind](model.Y, **p)
    except (TypeError, ValueError) as exc:
        raise ConfigError("initial.params", str(exc)) from None


def integrator_settings(cfg, model, dt_override=None):
    ib = _get(cfg, "integrator", "config", dict, {}) or {}
    scheme = _get(ib, "scheme", "integrator", str, "rk4")
    if scheme not in ("rk4", "euler"):
        raise ConfigError("integrator.scheme", "expected 'rk4' or 'euler'")
    dt = dt_override if dt_override is not None else _get(ib, "dt", "integrator", float, 0.01)
    if not 0 < dt <= model.T:
        raise ConfigError("integrator.dt", f"must lie in (0, T={model.T}]")
    steps = round(model.T / dt)
    if abs(steps * dt - model.T) > 1e-9 * max(1.0, model.T):
        raise ConfigError("integrator.dt", f"dt={dt} does not divide T={model.T}")
    every = _get(ib, "record_every", "integrator", int, 1)
    if every < 1:
        raise ConfigError("integrator.record_every", "must be >= 1")
    return scheme, dt, every


def discretization_settings(cfg):
    db = _get(cfg, "discretization", "config", dict, {}) or {}
    m = _get(db, "m", "discretization", int, 4)
    n = _get(db, "n", "discretization", int, 4)
    if m < 1 or n < 1:
        raise ConfigError("discretization", "m and n must be >= 1")
    quad = _get(db, "quad", "discretization", int, 32)
    return m, n, quad


def seed_of(cfg):
    return _get(cfg, "seed", "config", int, 0)


def resolved_config(cfg):
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


# ------------------------------------------------------------- outputs

def out_dir(args, cfg):
    d = args.out or os.environ.get(OUT_ENV) or (cfg or {}).get("output") or "out"
    os.makedirs(d, exist_ok=True)
    return d


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_report(path, pairs):
    with open(path, "w") as fh:
        for key, val in pairs:
            fh.write(f"{key}={_fmt(val)}\n")


def write_manifest(path, cfg, extra):
    with open(path, "w") as fh:
        fh.write("# resolved configuration\n")
        fh.write(yaml.safe_dump(resolved_config(cfg), sort_keys=True, default_flow_style=False))
        fh.write("# constants\n")
        for key, val in extra:
            fh.write(f"{key}={_fmt(val)}\n")


def trajectory_csv(traj, rate=None):
    """Columns t, i, j, weight, state components; header carries the partition."""
    disc = traj.disc
    part = disc.partition
    r2 = disc.state_space.dim
    head = {"kind": "trajectory", "m": disc.m, "n": disc.n,
            "domain": json.dumps(part.domain.to_dict(), sort_keys=True, separators=(",", ":")),
            "edges": json.dumps([e.tolist() for e in part.edges], separators=(",", ":")),
            "state_space": json.dumps(disc.state_space.to_dict(), sort_keys=True, separators=(",", ":"))}
    if rate is not None:
        head["gronwall_rate"] = repr(float(rate))
    lines = ["# " + " ".join(f"{k}={v}" for k, v in head.items()),
             ",".join(["t", "i", "j", "weight"] + [f"phi{c + 1}" for c in range(r2)])]
    w = np.repeat(disc.a / disc.n, disc.n)
    for r, t in enumerate(traj.times):
        st = traj.states[r]
        for q in range(len(st)):
            i, j = divmod(q, disc.n)
            lines.append(",".join([repr(float(t)), str(i + 1), str(j + 1), repr(float(w[q]))]
                                  + [repr(float(v)) for v in st[q]]))
    return "\n".join(lines) + "\n"


class TrajectoryFile:
    """A trajectory table read back: times, per-time piecewise-atomic fields."""

    def __init__(self, text):
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# kind=trajectory"):
            raise ValueError("not a trajectory table")
        head = dict(tok.split("=", 1) for tok in lines[0][2:].split(" "))
        self.m, self.n = int(head["m"]), int(head["n"])
        domain = Space.from_dict(json.loads(head["domain"]))
        self.partition = Partition(domain, json.loads(head["edges"]))
        self.space = Space.from_dict(json.loads(head["state_space"]))
        self.rate = float(head["gronwall_rate"]) if "gronwall_rate" in head else None
        rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:] if ln.strip()])
        per = self.m * self.n
        if len(rows) % per:
            raise ValueError("trajectory table is truncated")
        self.times = rows[::per, 0]
        self._rows = rows.reshape(len(self.times), per, -1)

    def field(self, r):
        block = self._rows[r]
        ms = []
        for i in range(self.m):
            sl = block[i * self.n:(i + 1) * self.n]
            ms.append(AtomicMeasure(self.space, sl[:, 4:], sl[:, 3], check=False))
        return PiecewiseAtomicField(self.partition, self.space, ms)


def _read_object(path):
    if not os.path.exists(path):
        raise ConfigError("distance", f"file {path} does not exist")
    with open(path) as fh:
        text = fh.read()
    if text.startswith("# kind=trajectory"):
        return "trajectory", TrajectoryFile(text)
    try:
        d = json.loads(text)
    except json.JSONDecodeError:
        raise ConfigError("distance", f"{path} is neither a trajectory table nor a JSON object") from None
    kind = d.get("kind") if isinstance(d, dict) else None
    if kind == "measure":
        return "measure", loads_measure(text)
    if kind == "dhgm":
        return "dhgm", loads_dhgm(text)
    raise ConfigError("distance", f"{path}: unknown object kind {kind!r}")


# ------------------------------------------------------------ commands

def _prepare(args):
    cfg = load_config(args.config)
    model = build_model(cfg)
    nu0 = build_initial(cfg, model)
    scheme, dt, every = integrator_settings(cfg, model, args.dt)
    return cfg, model, nu0, scheme, dt, every


def cmd_simulate(args):
    cfg, model, nu0, scheme, dt, every = _prepare(args)
    m, n, quad = discretization_settings(cfg)
    disc = discretize(model, nu0, m, n, quad, seed_of(cfg))
    traj = integrate(model, disc, scheme, dt, None, every)
    budget = lipschitz_budget(discretized_model(model, disc), float(disc.a.max()))
    d = out_dir(args, cfg)
    with open(os.path.join(d, "trajectory.csv"), "w") as fh:
        fh.write(trajectory_csv(traj, budget.rate))
    report = [("model", model.name), ("m", m), ("n", n), ("scheme", scheme), ("dt", dt), ("T", model.T),
              ("steps", int(round(model.T / dt))), ("max_drift", traj.drift),
              ("drift_ok", traj.drift <= 1e-6)]
    Y = model.Y
    if Y.kind == "simplex" and Y.face:
        cons = float(np.abs(traj.states.sum(axis=2) - Y.total).max())
        report.append(("conservation_max_violation", cons))
    write_report(os.path.join(d, "report.txt"), report)
    write_manifest(os.path.join(d, "manifest.txt"), cfg,
                   [("L1", budget.L1), ("L2", budget.L2), ("L3", budget.L3), ("gronwall_rate", budget.rate),
                    ("bl_h", budget.bl_h), ("bl_g", list(budget.bl_g)), ("eta_norms", list(budget.eta_norms)),
                    ("nu_norm", budget.nu_norm), ("max_drift", traj.drift)])
    print(f"wrote {d}/trajectory.csv ({len(traj.times)} times, {m * n} atoms); max drift {traj.drift:.3g}")
    return EXIT_OK


def cmd_converge(args):
    cfg, model, nu0, scheme, dt, every = _prepare(args)
    _, _, quad = discretization_settings(cfg)
    study = _get(cfg, "study", "config", dict, {}) or {}
    sched = _get(study, "schedule", "study", list, required=True)
    try:
        sched = [(int(a), int(b)) for a, b in sched]
    except (TypeError, ValueError):
        raise ConfigError("study.schedule", "expected a list of [m, n] pairs") from None
    if len(sched) < 2:
        raise ConfigError("study.schedule", "needs at least two entries")
    if any(a < 1 or b < 1 for a, b in sched):
        raise ConfigError("study.schedule", "m and n must be >= 1")
    tab = convergence_study(model, nu0, sched, dt, scheme, None, every, quad, seed_of(cfg),
                            threads=args.threads)
    d = out_dir(args, cfg)
    with open(os.path.join(d, "convergence.csv"), "w") as fh:
        fh.write(tab.csv(timings=args.timings))
    body = [r for r in tab.rows if (r[0], r[1]) != tab.reference]
    report = [("reference_m", tab.reference[0]), ("reference_n", tab.reference[1]),
              ("monotone", tab.monotone), ("loglog_slope", tab.slope),
              ("first_d0", body[0][2]), ("last_d0", body[-1][2])]
    write_report(os.path.join(d, "report.txt"), report)
    write_manifest(os.path.join(d, "manifest.txt"), cfg, [("schedule", sched), ("dt", dt)])
    sys.stdout.write(tab.csv(timings=False))
    print(f"slope={tab.slope:.4f} monotone={int(tab.monotone)}")
    return EXIT_OK


def cmd_distance(args):
    ka, a = _read_object(args.file_a)
    kb, b = _read_object(args.file_b)
    if ka != kb:
        raise ConfigError("distance", f"kind mismatch: {ka} vs {kb}")
    if ka == "measure":
        val, wit = bl_distance(a, b, return_witness=True)
        print(f"d_BL={val!r}")
        print(f"witness_lipschitz={wit.lipschitz_budget!r} witness_sup={wit.sup_budget!r} "
              f"witness_points={len(wit.values)}")
        return EXIT_OK
    if ka == "dhgm":
        if a.k != b.k:
            raise ConfigError("distance", f"cardinality mismatch: {a.k} vs {b.k}")
        val = d_infinity(a, b, threads=args.threads)
        print(f"d_inf={float(val)!r} exact={int(val.exact)}")
        return EXIT_OK
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise ConfigError("distance", "trajectories do not share a time grid")
    alpha = args.alpha or 0.0
    vals = np.array([float(d_infinity(a.field(r), b.field(r), threads=args.threads))
                     for r in range(len(a.times))])
    print(f"d_alpha={float(np.max(np.exp(-alpha * a.times) * vals))!r} alpha={alpha!r}")
    rate = a.rate if a.rate is not None else b.rate
    if rate is not None:
        bound = np.exp(rate * a.times) * vals[0]
        ok = bool(np.all(vals <= bound * (1 + 1e-6)))
        print(f"gronwall_rate={rate!r} gronwall_bound_final={float(bound[-1])!r} within_bound={int(ok)}")
    return EXIT_OK


def _check_gronwall(cfg, model, nu0, scheme, dt, every, study):
    m, n, quad = discretization_settings(cfg)
    disc = discretize(model, nu0, m, n, quad, seed_of(cfg))
    eps = _get(study, "perturbation", "study", float, 1e-3)
    count = _get(study, "perturbations", "study", int, 1)
    from .measure_core import _low_discrepancy
    U = _low_discrepancy(count, disc.phi0.size, seed_of(cfg))
    out, ok = [], True
    for c in range(count):
        off = eps * (2 * U[c].reshape(disc.phi0.shape) - 1)
        Y = model.Y
        if Y.kind == "simplex" and Y.face:
            off = off - off.mean(axis=1, keepdims=True)
        if Y.kind != "torus":
            lo, hi = np.asarray(Y.lower), np.asarray(Y.upper)
            off = np.clip(disc.phi0 + off, lo, hi) - disc.phi0
        rep = gronwall_check(model, disc, off, dt, None, scheme, every)
        ok &= rep.passed
        out.append((f"gronwall_{c}_max_ratio", rep.max_ratio))
    return ok, [("gronwall_pass", ok), ("gronwall_perturbations", count),
                ("gronwall_rate", rep.rate)] + out


def cmd_check(args):
    cfg = load_config(args.config)
    model = build_model(cfg)
    study = _get(cfg, "study", "config", dict, {}) or {}
    if not (args.invariance or args.gronwall or args.weak_residual or args.representation_gap):
        raise ConfigError("check", "choose at least one of --invariance, --gronwall, --weak-residual, "
                          "--representation-gap")
    report, ok = [], True
    if args.invariance:
        samples = _get(study, "boundary_samples", "study", int, 4096)
        try:
            rep = check_invariance(model, samples, seed=seed_of(cfg))
        except ValueError as exc:
            raise ConfigError("model", str(exc)) from None
        ok &= rep.passed
        report += [tuple(line.split("=", 1)) for line in rep.lines()]
    if args.gronwall or args.weak_residual:
        nu0 = build_initial(cfg, model)
        scheme, dt, every = integrator_settings(cfg, model, args.dt)
    if args.gronwall:
        g_ok, lines = _check_gronwall(cfg, model, nu0, scheme, dt, every, study)
        ok &= g_ok
        report += lines
    if args.weak_residual:
        m, n, quad = discretization_settings(cfg)
        disc = discretize(model, nu0, m, n, quad, seed_of(cfg))
        traj = integrate(model, disc, scheme, dt, None, 1)
        tol = _get(study, "weak_tol", "study", float, 1e-3)
        x = _get(study, "x", "study", list, [0.3] * model.X.dim)
        worst = 0.0
        for name, w, dw, gw in M.polynomial_test_functions(model.T, model.Y.dim):
            res = weak_residual(model, traj, w, x, dw, gw)
            worst = max(worst, res)
            report.append((f"weak_residual_{name}", res))
        ok &= worst <= tol
        report += [("weak_residual_max", worst), ("weak_residual_tol", tol), ("weak_residual_pass", worst <= tol)]
    if args.representation_gap:
        Ns = _get(study, "gap_N", "study", list, [64])
        layer = _get(study, "gap_layer", "study", int, 1)
        normalized = _get(study, "gap_normalized", "study", bool, True)
        for N in Ns:
            gap = representation_gap(ring_adjacency(int(N), layer, normalized), Space.torus(1))
            ok &= gap.within_bound
            report += [(f"gap_N{N}", gap.value), (f"gap_bound_N{N}", gap.bound),
                       (f"gap_pass_N{N}", gap.within_bound)]
    report.append(("pass", ok))
    d = out_dir(args, cfg)
    write_report(os.path.join(d, "report.txt"), report)
    for key, val in report:
        print(f"{key}={_fmt(val)}")
    return EXIT_OK if ok else EXIT_CHECK


def _parse_params(items):
    out = {}
    for it in items or []:
        if "=" not in it:
            raise ConfigError("gallery.param", f"expected key=value, got {it!r}")
        k, v = it.split("=", 1)
        out[k] = yaml.safe_load(v)
    return out


def cmd_gallery(args):
    if args.action == "list":
        for name in gallery_names():
            print(name)
        return EXIT_OK
    if not args.name:
        raise ConfigError("gallery", "emit needs a gallery name")
    try:
        eta = gallery(args.name, **_parse_params(args.param))
    except (TypeError, ValueError) as exc:
        raise ConfigError("gallery", str(exc)) from None
    if eta.domain.kind not in ("box", "torus", "finite-grid"):
        raise ConfigError("gallery", f"{args.name} lives on a {eta.domain.kind}; only box/torus domains can be emitted")
    part = make_partition(eta.domain, args.m)
    text = dumps_dhgm(materialize(eta, part)) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, f"{args.name}.json")
        with open(path, "w") as fh:
            fh.write(text)
        print(f"wrote {path}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2, which is reserved for numerical failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INPUT)


def build_parser():
    p = _Parser(prog="hypervlasov", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="YAML experiment file")
        sp.add_argument("--out", help="output directory (default: $%s, config 'output', ./out)" % OUT_ENV)
        sp.add_argument("--threads", type=int, default=1, help="worker threads for distance LPs")
        sp.add_argument("--dt", type=float, help="override integrator.dt")
        sp.add_argument("--alpha", type=float, help="time weight of d_alpha")

    sp = sub.add_parser("simulate", help="integrate the lattice system")
    common(sp)
    sp = sub.add_parser("converge", help="d0 against the finest (m, n) of a schedule")
    common(sp)
    sp.add_argument("--timings", action="store_true", help="add a wall_seconds column (not reproducible)")
    sp = sub.add_parser("distance", help="flat distance between two measures, DHGMs or trajectories")
    sp.add_argument("file_a")
    sp.add_argument("file_b")
    common(sp, config=False)
    sp = sub.add_parser("check", help="invariance, Gronwall, weak residual, representation gap")
    common(sp)
    sp.add_argument("--invariance", action="store_true")
    sp.add_argument("--gronwall", action="store_true")
    sp.add_argument("--weak-residual", action="store_true")
    sp.add_argument("--representation-gap", action="store_true")
    sp = sub.add_parser("gallery", help="list or emit example DHGMs")
    sp.add_argument("action", choices=["list", "emit"])
    sp.add_argument("name", nargs="?")
    sp.add_argument("--param", action="append", help="gallery parameter key=value")
    sp.add_argument("--m", type=int, default=16, help="cells of the emitted partition")
    sp.add_argument("--out")
    return p


COMMANDS = {"simulate": cmd_simulate, "converge": cmd_converge, "distance": cmd_distance,
            "check": cmd_check, "gallery": cmd_gallery}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except (BlowUpError, ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, SizeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
