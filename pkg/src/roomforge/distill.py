"""Distillation gradients on analytic toys.

A representation ``theta`` is rendered by a linear map into an image
vector ``x0``. Noise-prediction (SDS) and velocity (FDS, ITFS) estimators
turn an oracle's residual into a gradient over ``theta``; because the
render is linear, its Jacobian is applied exactly.

Timesteps are integers in ``[0, 1000)``; the flow time of step ``k`` is
``k / 1000``. Noise schedules for the diffusion forward process use the
usual linear beta ramp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

N_STEPS = 1000
DEFAULT_INTERVALS = ((200, 400), (400, 600), (600, 800))
MIN_FLOW_T = 1e-3


class DimMismatch(ValueError):
    pass


def _same_shape(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise DimMismatch(f"shape mismatch: {sorted(shapes)}")


def linear_alpha_bar(n: int = N_STEPS, beta_start: float = 1e-4, beta_end: float = 0.02) -> np.ndarray:
    betas = np.linspace(beta_start, beta_end, n)
    return np.cumprod(1.0 - betas)


def ddpm_forward(x, t, eps, alpha_bar) -> np.ndarray:
    """``sqrt(ab) x + sqrt(1 - ab) eps`` where ``ab`` is ``alpha_bar[t]``
    (or ``alpha_bar`` itself when it is a scalar)."""
    x = np.asarray(x, dtype=float)
    eps = np.asarray(eps, dtype=float)
    _same_shape(x, eps)
    ab = np.asarray(alpha_bar, dtype=float)
    ab = ab[t] if ab.ndim else ab
    return np.sqrt(ab) * x + np.sqrt(1.0 - ab) * eps


def flow_interpolate(x0, eps, t: float) -> np.ndarray:
    """Straight path ``(1 - t) x0 + t eps``; returns the endpoints verbatim at t = 0 and 1."""
    x0 = np.asarray(x0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    _same_shape(x0, eps)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must be in [0, 1], got {t}")
    if t == 0.0:
        return x0.copy()
    if t == 1.0:
        return eps.copy()
    return (1.0 - t) * x0 + t * eps


# ---------------------------------------------------------------------------
# Oracles


@dataclass(frozen=True)
class VelocityOracle:
    """Velocity field ``v(x_t, t)``.

    ``perfect`` and ``offset`` are teacher-forced: they see the draw's
    ``eps`` and ``x0`` and return ``eps - x0`` (plus ``u``). ``exact`` is the
    field of a point mass at ``x*``: ``(x_t - x*) / t``.
    """

    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def perfect(cls):
        return cls("perfect")

    @classmethod
    def offset(cls, u):
        return cls("offset", {"u": np.asarray(u, dtype=float)})

    @classmethod
    def linear(cls, a, b):
        return cls("linear", {"a": np.asarray(a, dtype=float), "b": np.asarray(b, dtype=float)})

    @classmethod
    def exact(cls, target):
        return cls("exact", {"target": np.asarray(target, dtype=float)})

    @classmethod
    def custom(cls, fn: Callable):
        return cls("custom", {"fn": fn})

    def __call__(self, xt: np.ndarray, t: np.ndarray, eps: np.ndarray, x0: np.ndarray) -> np.ndarray:
        if self.kind == "perfect":
            return eps - x0
        if self.kind == "offset":
            return (eps - x0) + self.params["u"]
        if self.kind == "linear":
            return xt @ self.params["a"].T + self.params["b"]
        if self.kind == "exact":
            return (xt - self.params["target"]) / np.maximum(t, MIN_FLOW_T)[:, None]
        if self.kind == "custom":
            return self.params["fn"](xt, t, eps, x0)
        raise ValueError(f"unknown oracle kind {self.kind!r}")


@dataclass(frozen=True)
class NoiseOracle:
    """Noise predictor ``eps_phi(x_t, t)`` for the SDS estimator."""

    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def perfect(cls):
        return cls("perfect")

    @classmethod
    def offset(cls, u):
        return cls("offset", {"u": np.asarray(u, dtype=float)})

    @classmethod
    def linear(cls, a, b):
        return cls("linear", {"a": np.asarray(a, dtype=float), "b": np.asarray(b, dtype=float)})

    def __call__(self, xt, k, eps, x0):
        if self.kind == "perfect":
            return eps.copy()
        if self.kind == "offset":
            return eps + self.params["u"]
        if self.kind == "linear":
            return xt @ self.params["a"].T + self.params["b"]
        raise ValueError(f"unknown oracle kind {self.kind!r}")


# ---------------------------------------------------------------------------
# Render


@dataclass(frozen=True)
class LinearRender:
    """Camera label -> matrix; ``x0 = M[c] @ theta``."""

    matrices: tuple[np.ndarray, ...]

    def jacobian(self, camera: int = 0) -> np.ndarray:
        return self.matrices[camera]

    def __call__(self, theta: np.ndarray, camera: int = 0) -> np.ndarray:
        return self.matrices[camera] @ theta

    @classmethod
    def identity(cls, n: int) -> "LinearRender":
        return cls((np.eye(n),))

    @classmethod
    def random(cls, n: int, out: int | None = None, seed: int = 0, cameras: int = 1) -> "LinearRender":
        rng = np.random.default_rng(seed)
        out = out or n
        return cls(tuple(rng.standard_normal((out, n)) / math.sqrt(n) for _ in range(cameras)))

    @classmethod
    def sliced(cls, n: int, cameras: int) -> "LinearRender":
        """Each camera sees a contiguous block of ``theta``."""
        eye = np.eye(n)
        return cls(tuple(eye[idx] for idx in np.array_split(np.arange(n), cameras)))


@dataclass
class RenderParam:
    theta: np.ndarray
    render: LinearRender

    def image(self, camera: int = 0) -> np.ndarray:
        return self.render(self.theta, camera)


# ---------------------------------------------------------------------------
# Schedules and weights


def weight_table(kind: str = "constant", values: Sequence[float] | None = None) -> np.ndarray:
    if kind == "constant":
        return np.ones(N_STEPS)
    if kind == "linear":
        return np.arange(N_STEPS) / N_STEPS
    if kind == "table":
        w = np.asarray(values, dtype=float)
        if w.shape != (N_STEPS,):
            raise ValueError(f"weight table needs {N_STEPS} entries, got {w.shape}")
        return w
    raise ValueError(f"unknown weight kind {kind!r}")


@dataclass(frozen=True)
class IntervalSchedule:
    intervals: tuple[tuple[int, int], ...]
    weights: np.ndarray | None = None

    def __post_init__(self):
        ivs = tuple((int(lo), int(hi)) for lo, hi in self.intervals)
        object.__setattr__(self, "intervals", ivs)
        if not ivs:
            raise ValueError("schedule needs at least one interval")
        for lo, hi in ivs:
            if not 0 <= lo < hi <= N_STEPS:
                raise ValueError(f"interval [{lo}, {hi}) must satisfy 0 <= lo < hi <= {N_STEPS}")
        if list(ivs) != sorted(ivs):
            raise ValueError("intervals must be ordered by lower bound")

    @property
    def m(self) -> int:
        return len(self.intervals)

    @property
    def w(self) -> np.ndarray:
        return np.ones(N_STEPS) if self.weights is None else np.asarray(self.weights, dtype=float)

    @classmethod
    def even(cls, m: int, lo: int = 200, hi: int = 800, weights=None) -> "IntervalSchedule":
        """``m`` equal-width intervals over ``[lo, hi)``; m = 3 gives 200/400/600/800."""
        edges = np.linspace(lo, hi, m + 1).round().astype(int)
        return cls(tuple((int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])), weights)

    @classmethod
    def parse(cls, text: str, weights=None) -> "IntervalSchedule":
        """``"200:400,400:600"`` style interval lists."""
        ivs = []
        for part in text.split(","):
            lo, hi = part.split(":")
            ivs.append((int(lo), int(hi)))
        return cls(tuple(ivs), weights)


# ---------------------------------------------------------------------------
# Estimators


@dataclass(frozen=True)
class Draws:
    eps: np.ndarray  # (S, d)
    k: np.ndarray  # (S, m) integer timesteps


def draw(seed: int, samples: int, dim: int, intervals: Sequence[tuple[int, int]]) -> Draws:
    """Noise first, then one timestep per interval per sample."""
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((samples, dim))
    lo = np.array([a for a, _ in intervals])
    hi = np.array([b for _, b in intervals])
    k = rng.integers(lo, hi, size=(samples, len(intervals)))
    return Draws(eps, k)


def _flow_term(oracle, x0, eps, k, w):
    t = k / N_STEPS
    xt = (1.0 - t)[:, None] * x0 + t[:, None] * eps
    res = oracle(xt, t, eps, x0) - (eps - x0)
    return w[k][:, None] * res


def flow_residuals(oracle: VelocityOracle, x0, d: Draws, w) -> np.ndarray:
    """Weighted residual summed over intervals, per sample: (S, d)."""
    acc = None
    for i in range(d.k.shape[1]):
        term = _flow_term(oracle, x0, d.eps, d.k[:, i], w)
        acc = term if acc is None else acc + term
    return acc


def cfm_loss(oracle: VelocityOracle, x0, samples: int = 4096, seed: int = 0, weights=None) -> float:
    """Monte-Carlo flow-matching loss ``E[w(t) |v(x_t, t) - (eps - x0)|^2]``.

    ``t`` is uniform on [0, 1]; a weight table is looked up at the
    discrete step ``floor(1000 t)``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    x0 = np.asarray(x0, dtype=float)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((samples, x0.shape[0]))
    t = rng.random(samples)
    xt = (1.0 - t)[:, None] * x0 + t[:, None] * eps
    res = oracle(xt, t, eps, x0) - (eps - x0)
    sq = np.einsum("ij,ij->i", res, res)
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        sq = w[np.minimum((t * N_STEPS).astype(int), N_STEPS - 1)] * sq
    return float(sq.mean())


def sds_residuals(oracle: NoiseOracle, x0, d: Draws, w, alpha_bar) -> np.ndarray:
    k = d.k[:, 0]
    ab = alpha_bar[k][:, None]
    xt = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * d.eps
    return w[k][:, None] * (oracle(xt, k, d.eps, x0) - d.eps)


def sds_grad(oracle: NoiseOracle, rp: RenderParam, camera: int = 0, t_range=(20, 980), samples: int = 64,
             seed: int = 0, weights=None, alpha_bar=None) -> np.ndarray:
    x0 = rp.image(camera)
    d = draw(seed, samples, x0.shape[0], [t_range])
    w = np.ones(N_STEPS) if weights is None else np.asarray(weights, dtype=float)
    ab = linear_alpha_bar() if alpha_bar is None else alpha_bar
    res = sds_residuals(oracle, x0, d, w, ab)
    return rp.render.jacobian(camera).T @ res.mean(axis=0)


def fds_grad(oracle: VelocityOracle, rp: RenderParam, camera: int = 0, t_range=(0, N_STEPS), samples: int = 64,
             seed: int = 0, weights=None) -> np.ndarray:
    x0 = rp.image(camera)
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal((samples, x0.shape[0]))
    k = rng.integers(t_range[0], t_range[1], size=samples)
    w = np.ones(N_STEPS) if weights is None else np.asarray(weights, dtype=float)
    res = _flow_term(oracle, x0, eps, k, w)
    return rp.render.jacobian(camera).T @ res.mean(axis=0)


def itfs_grad(oracle: VelocityOracle, rp: RenderParam, camera: int = 0,
              schedule: IntervalSchedule | None = None, samples: int = 64, seed: int = 0) -> np.ndarray:
    """One shared noise draw per sample, one timestep inside each interval,
    residuals of all intervals summed before the Jacobian is applied."""
    schedule = schedule or IntervalSchedule(DEFAULT_INTERVALS)
    x0 = rp.image(camera)
    d = draw(seed, samples, x0.shape[0], schedule.intervals)
    res = flow_residuals(oracle, x0, d, schedule.w)
    return rp.render.jacobian(camera).T @ res.mean(axis=0)


def surrogate(theta: np.ndarray, render: LinearRender, camera: int, frozen_residual: np.ndarray) -> float:
    """``mean_s <sg(residual_s), g(theta, c)>`` whose gradient the estimators return."""
    x = render(theta, camera)
    return float(np.mean(frozen_residual @ x))


def fd_gradient(fn: Callable[[np.ndarray], float], theta: np.ndarray, h: float = 1e-4) -> np.ndarray:
    g = np.empty_like(theta)
    for i in range(theta.shape[0]):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (fn(theta + e) - fn(theta - e)) / (2 * h)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / scale)


# ---------------------------------------------------------------------------
# Descent


@dataclass
class DescentResult:
    param: RenderParam
    curve: list[tuple[int, float]]
    oscillating: bool = False
    diverging: bool = False


def descend(rp: RenderParam, grad_fn: Callable[[np.ndarray, int], np.ndarray], steps: int, lr: float,
            target: np.ndarray | None = None, camera: int = 0) -> DescentResult:
    """Plain gradient descent ``theta <- theta - lr * grad``.

    With ``target`` given, the curve records ``|g(theta) - target|`` after
    every step (step 0 is the start). Oscillation is flagged when the
    error flips direction on most steps, divergence when it grows overall.
    """
    if steps < 0 or lr <= 0:
        raise ValueError("steps must be >= 0 and lr > 0")
    theta = np.array(rp.theta, dtype=float)
    curve = []
    errs = []
    if target is not None:
        e = rp.render(theta, camera) - target
        curve.append((0, float(np.linalg.norm(e))))
        errs.append(e)
    for s in range(steps):
        theta = theta - lr * grad_fn(theta, s)
        if target is not None:
            e = rp.render(theta, camera) - target
            curve.append((s + 1, float(np.linalg.norm(e))))
            errs.append(e)
    flips = sum(float(a @ b) < 0 for a, b in zip(errs, errs[1:]))
    oscillating = steps > 0 and flips > steps / 2
    diverging = len(curve) > 1 and curve[-1][1] > curve[0][1]
    return DescentResult(RenderParam(theta, rp.render), curve, oscillating, diverging)


def exact_descent(dim: int = 16, steps: int = 200, lr: float = 0.1, samples: int = 8, seed: int = 0,
                  scheme: str = "fds") -> tuple[DescentResult, np.ndarray]:
    """Descent towards a point target with the exact oracle and identity render.

    Weights ``w(k) = k / 1000`` cancel the ``1 / t`` of the exact field, so
    every step is ``theta <- theta - lr (theta - x*)`` and the distance
    follows ``(1 - lr)^step`` times its start value. Timesteps start at 1 to
    keep ``t`` positive.
    """
    rng = np.random.default_rng(seed)
    target = rng.standard_normal(dim)
    theta0 = rng.standard_normal(dim)
    rp = RenderParam(theta0, LinearRender.identity(dim))
    oracle = VelocityOracle.exact(target)
    w = weight_table("linear")
    if scheme == "fds":
        def grad(theta, s):
            return fds_grad(oracle, RenderParam(theta, rp.render), 0, (1, N_STEPS), samples, seed + 1 + s, w)
    else:
        sched = IntervalSchedule(DEFAULT_INTERVALS, w)

        def grad(theta, s):
            return itfs_grad(oracle, RenderParam(theta, rp.render), 0, sched, samples, seed + 1 + s) / sched.m
    res = descend(rp, grad, steps, lr, target)
    closed = np.array([res.curve[0][1] * (1 - lr) ** s for s, _ in res.curve])
    return res, closed


# ---------------------------------------------------------------------------
# Check battery


def _independent_flow_residual(oracle, x0, eps_row, ks, w) -> np.ndarray:
    # per-sample loop written out separately from the vectorized estimator
    total = np.zeros_like(x0)
    for k in ks:
        t = k / N_STEPS
        xt = np.array([(1.0 - t) * a + t * e for a, e in zip(x0, eps_row)])
        v = oracle(xt[None, :], np.array([t]), eps_row[None, :], x0)[0]
        total = total + w[k] * (v - (eps_row - x0))
    return total


def fd_check(estimator: str, seed: int, dim: int = 16, samples: int = 32, weights=None,
             schedule: IntervalSchedule | None = None, h: float = 1e-4) -> float:
    """Relative error between an estimator and central differences of its surrogate."""
    rng = np.random.default_rng(1000 + seed)
    render = LinearRender.random(dim, seed=2000 + seed)
    theta0 = rng.standard_normal(dim)
    a = rng.standard_normal((dim, dim)) / math.sqrt(dim)
    b = rng.standard_normal(dim)
    w = np.ones(N_STEPS) if weights is None else np.asarray(weights, dtype=float)
    rp = RenderParam(theta0, render)
    x0 = render(theta0)
    if estimator == "sds":
        oracle = NoiseOracle.linear(a, b)
        t_range = (20, 980)
        grad = sds_grad(oracle, rp, 0, t_range, samples, seed, w)
        d = draw(seed, samples, dim, [t_range])
        ab = linear_alpha_bar()
        rows = []
        for s in range(samples):
            k = int(d.k[s, 0])
            xt = math.sqrt(ab[k]) * x0 + math.sqrt(1.0 - ab[k]) * d.eps[s]
            rows.append(w[k] * (a @ xt + b - d.eps[s]))
        frozen = np.array(rows)
    else:
        oracle = VelocityOracle.linear(a, b)
        if estimator == "fds":
            grad = fds_grad(oracle, rp, 0, (0, N_STEPS), samples, seed, w)
            ivs = [(0, N_STEPS)]
        else:
            sched = schedule or IntervalSchedule(DEFAULT_INTERVALS)
            sched = IntervalSchedule(sched.intervals, w)
            grad = itfs_grad(oracle, rp, 0, sched, samples, seed)
            ivs = sched.intervals
        d = draw(seed, samples, dim, ivs)
        frozen = np.array([_independent_flow_residual(oracle, x0, d.eps[s], d.k[s], w) for s in range(samples)])
    fd = fd_gradient(lambda th: surrogate(th, render, 0, frozen), theta0, h)
    return rel_error(grad, fd)


@dataclass
class CheckConfig:
    dim: int = 16
    seeds: tuple[int, ...] = (0, 1, 2)
    samples: int = 32
    schedule: IntervalSchedule = field(default_factory=lambda: IntervalSchedule(DEFAULT_INTERVALS))
    weights: np.ndarray | None = None
    fd_tol: float = 1e-4
    steps: int = 200
    lr: float = 0.1
    seed: int = 0


def run_checks(cfg: CheckConfig) -> tuple[dict, list[tuple[int, float, float]]]:
    """Run every numeric check; returns the report and the descent curve rows."""
    checks: dict[str, dict] = {}

    def record(name, passed, **values):
        checks[name] = {"passed": bool(passed), **values}

    w = np.ones(N_STEPS) if cfg.weights is None else np.asarray(cfg.weights, dtype=float)
    record("weights_nonnegative", w.shape == (N_STEPS,) and bool(np.all(w >= 0)) and bool(np.all(np.isfinite(w))),
           min_weight=float(np.min(w)) if w.size else None)
    sched = IntervalSchedule(cfg.schedule.intervals, w)
    for est in ("sds", "fds", "itfs"):
        errs = [fd_check(est, s, cfg.dim, cfg.samples, w, sched) for s in cfg.seeds]
        record(f"fd_{est}", max(errs) <= cfg.fd_tol, rel_errors=errs, tolerance=cfg.fd_tol)

    dim = cfg.dim
    rng = np.random.default_rng(cfg.seed)
    rp = RenderParam(rng.standard_normal(dim), LinearRender.random(dim, seed=cfg.seed))
    lin = VelocityOracle.linear(rng.standard_normal((dim, dim)) / math.sqrt(dim), rng.standard_normal(dim))
    full = IntervalSchedule(((0, N_STEPS),), w)
    g_fds = fds_grad(lin, rp, 0, (0, N_STEPS), cfg.samples, cfg.seed, w)
    g_itfs = itfs_grad(lin, rp, 0, full, cfg.samples, cfg.seed)
    record("reduction_m1", g_fds.tobytes() == g_itfs.tobytes())

    zero_itfs = itfs_grad(VelocityOracle.perfect(), rp, 0, IntervalSchedule(DEFAULT_INTERVALS, w), cfg.samples, cfg.seed)
    zero_fds = fds_grad(VelocityOracle.perfect(), rp, 0, (0, N_STEPS), cfg.samples, cfg.seed, w)
    zero_sds = sds_grad(NoiseOracle.perfect(), rp, 0, (20, 980), cfg.samples, cfg.seed, w)
    record("perfect_oracle_zero", all(not np.any(g) for g in (zero_itfs, zero_fds, zero_sds)))

    w2 = 2.0 * w
    noise = NoiseOracle.linear(np.eye(dim) * 0.5, np.ones(dim))
    pairs = [
        (sds_grad(noise, rp, 0, (20, 980), cfg.samples, cfg.seed, w), sds_grad(noise, rp, 0, (20, 980), cfg.samples, cfg.seed, w2)),
        (g_fds, fds_grad(lin, rp, 0, (0, N_STEPS), cfg.samples, cfg.seed, w2)),
        (itfs_grad(lin, rp, 0, sched, cfg.samples, cfg.seed),
         itfs_grad(lin, rp, 0, IntervalSchedule(sched.intervals, w2), cfg.samples, cfg.seed)),
    ]
    record("linearity", all(np.array_equal(2.0 * a, b) for a, b in pairs))

    again = itfs_grad(lin, rp, 0, sched, cfg.samples, cfg.seed)
    record("determinism", again.tobytes() == pairs[2][0].tobytes())

    res, closed = exact_descent(dim, cfg.steps, cfg.lr, seed=cfg.seed)
    dist = np.array([d for _, d in res.curve])
    scale_err = float(np.max(np.abs(dist - closed)) / dist[0])
    final = float(dist[-1])
    record("convergence", final < 1e-3 and scale_err <= 1e-9 and not res.oscillating,
           final_distance=final, closed_form_error=scale_err,
           pointwise_relative_error=float(np.max(np.abs(dist - closed) / closed)))
    curve = [(s, float(d), float(c)) for (s, d), c in zip(res.curve, closed)]
    return {"checks": checks, "passed": all(c["passed"] for c in checks.values())}, curve
