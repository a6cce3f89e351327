"""Gaussian-process surrogate optimization of integer hyperparameters with
an Expected Improvement acquisition.

The surrogate lives on the unit hypercube; candidate points are snapped to
the integer grid before scoring and evaluation. Objectives are minimized:
the acquisition internally negates values so EI keeps its textbook
maximization form. Targets are standardized inside the GP, so the default
exploration offset ``xi`` is in standardized units.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.stats import norm, qmc

from .errors import (
    DimensionMismatch,
    EmptySpace,
    InvalidSpec,
    ObjectiveFailure,
    SingularKernel,
)

JITTER_START = 1e-8
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class SearchSpace:
    """Inclusive integer ranges for the tuned hyperparameters, with the
    mapping to and from the unit hypercube."""

    cnn_layers: tuple = (1, 12)
    heads: tuple = (2, 5)
    filters: tuple = (16, 256)
    kernel_size: tuple = (2, 5)

    NAMES = ("cnn_layers", "heads", "filters", "kernel_size")

    def __post_init__(self):
        for name in self.NAMES:
            lo, hi = getattr(self, name)
            if lo > hi:
                raise InvalidSpec(f"{name}: lo {lo} > hi {hi}")

    @property
    def dim(self) -> int:
        return len(self.NAMES)

    def bounds(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in self.NAMES], dtype=np.float64)

    def round_to_grid(self, u: np.ndarray) -> dict:
        """Snap a unit-hypercube point to the nearest integer config."""
        u = np.clip(np.asarray(u, dtype=np.float64), 0.0, 1.0)
        bounds = self.bounds()
        ints = np.floor(bounds[:, 0] + u * (bounds[:, 1] - bounds[:, 0]) + 0.5)
        ints = np.clip(ints, bounds[:, 0], bounds[:, 1]).astype(int)
        return dict(zip(self.NAMES, (int(v) for v in ints)))

    def to_unit(self, config: dict) -> np.ndarray:
        u = np.empty(self.dim)
        for i, name in enumerate(self.NAMES):
            lo, hi = getattr(self, name)
            v = config[name]
            if not lo <= v <= hi:
                raise InvalidSpec(f"{name}={v} outside [{lo}, {hi}]")
            u[i] = 0.0 if hi == lo else (v - lo) / (hi - lo)
        return u

    def snap_unit(self, u: np.ndarray) -> np.ndarray:
        """Unit coordinates of the grid point nearest to ``u``."""
        return self.to_unit(self.round_to_grid(u))


@dataclass(frozen=True)
class Observation:
    """One evaluated point: unit-hypercube location and objective value."""

    x: np.ndarray
    y: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        object.__setattr__(self, "x", x)
        if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
            raise InvalidSpec("observation outside the unit hypercube")
        if not np.isfinite(self.y):
            raise InvalidSpec("objective value must be finite")


@dataclass(frozen=True)
class GPHyper:
    """Kernel hyperparameters: k(x,x') = signal_var *
    exp(-1/2 sum_i ((x_i-x'_i)/length_scales_i)^2), plus observation noise."""

    signal_var: float = 1.0
    length_scales: np.ndarray = field(default_factory=lambda: np.full(4, 0.2))
    noise_var: float = 1e-4

    def __post_init__(self):
        ls = np.asarray(self.length_scales, dtype=np.float64)
        object.__setattr__(self, "length_scales", ls)
        if self.signal_var <= 0 or np.any(ls <= 0) or self.noise_var < 0:
            raise InvalidSpec("GP hyperparameters must be positive (noise_var >= 0)")


@dataclass(frozen=True)
class GPState:
    """Fitted surrogate: data, standardization, and the Cholesky factor of
    K + (noise + jitter) I on standardized targets."""

    x: np.ndarray          # (n, d)
    y: np.ndarray          # (n,) raw objective values
    hyper: GPHyper
    y_mean: float
    y_std: float
    chol: np.ndarray       # lower triangular
    alpha: np.ndarray      # (K + sI)^-1 y_standardized
    jitter: float          # effective jitter actually used


def sq_exp_kernel(x: np.ndarray, x2: np.ndarray, hyper: GPHyper) -> float:
    """Squared-exponential covariance between two points."""
    x = np.asarray(x, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x.shape != x2.shape or x.ndim != 1:
        raise DimensionMismatch(f"points of shape {x.shape} vs {x2.shape}")
    if x.shape != hyper.length_scales.shape:
        raise DimensionMismatch("length scales do not match the point dimension")
    z = (x - x2) / hyper.length_scales
    return float(hyper.signal_var * np.exp(-0.5 * np.dot(z, z)))


def _kernel_matrix(xa: np.ndarray, xb: np.ndarray, hyper: GPHyper) -> np.ndarray:
    za = xa / hyper.length_scales
    zb = xb / hyper.length_scales
    sq = ((za[:, None, :] - zb[None, :, :]) ** 2).sum(axis=2)
    return hyper.signal_var * np.exp(-0.5 * sq)


def gp_fit(observations, hyper: GPHyper | None = None) -> GPState:
    """Factorize the kernel system for a set of observations.

    Targets are standardized internally (mean/std of y). The jitter added to
    the diagonal escalates tenfold from 1e-8 up to 1e-4 before giving up
    with SingularKernel.
    """
    obs = list(observations)
    if not obs:
        raise EmptySpace("gp_fit needs at least one observation")
    x = np.stack([np.asarray(o.x, dtype=np.float64) for o in obs])
    y = np.array([o.y for o in obs], dtype=np.float64)
    if hyper is None:
        hyper = GPHyper(length_scales=np.full(x.shape[1], 0.2))
    if x.shape[1] != hyper.length_scales.shape[0]:
        raise DimensionMismatch("length scales do not match the observation dimension")

    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std == 0.0:
        y_std = 1.0
    y_st = (y - y_mean) / y_std

    gram = _kernel_matrix(x, x, hyper)
    jitter = JITTER_START
    while True:
        try:
            chol = cholesky(gram + (hyper.noise_var + jitter) * np.eye(len(obs)), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > JITTER_MAX:
                raise SingularKernel(
                    f"kernel matrix not positive definite even with jitter {JITTER_MAX}"
                ) from None
    alpha = cho_solve((chol, True), y_st)
    return GPState(x=x, y=y, hyper=hyper, y_mean=y_mean, y_std=y_std,
                   chol=chol, alpha=alpha, jitter=jitter)


def _posterior_std_units(state: GPState, xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at query points, in standardized target
    units. ``xq`` is (m, d); variances are clamped at zero."""
    ks = _kernel_matrix(state.x, xq, state.hyper)        # (n, m)
    mu = ks.T @ state.alpha
    v = solve_triangular(state.chol, ks, lower=True)     # (n, m)
    var = state.hyper.signal_var - (v * v).sum(axis=0)
    return mu, np.maximum(var, 0.0)


def gp_posterior(state: GPState, x: np.ndarray) -> tuple[float, float]:
    """Posterior mean and variance at one point, de-standardized back to
    objective units."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (state.x.shape[1],):
        raise DimensionMismatch(f"query of shape {x.shape}, expected ({state.x.shape[1]},)")
    mu, var = _posterior_std_units(state, x[None])
    return state.y_mean + state.y_std * float(mu[0]), state.y_std ** 2 * float(var[0])


def expected_improvement(mu: float, sigma: float, f_plus: float, xi: float = 0.0) -> float:
    """Closed-form EI for maximization: sigma * (u Phi(u) + phi(u)) with
    u = (mu - f_plus - xi) / sigma; zero in the deterministic limit."""
    if sigma <= 0.0:
        return 0.0
    u = (mu - f_plus - xi) / sigma
    return max(0.0, float(sigma * (u * norm.cdf(u) + norm.pdf(u))))


def _ei_minimize(state: GPState, uq: np.ndarray, xi: float) -> np.ndarray:
    """EI of candidate points for a minimized objective: scored as
    maximization of the negated standardized posterior."""
    mu, var = _posterior_std_units(state, uq)
    sigma = np.sqrt(var)
    best = -(state.y.min() - state.y_mean) / state.y_std
    ei = np.zeros(len(uq))
    pos = sigma > 0
    u = (-mu[pos] - best - xi) / sigma[pos]
    ei[pos] = np.maximum(0.0, sigma[pos] * (u * norm.cdf(u) + norm.pdf(u)))
    return ei


def propose(state: GPState, space: SearchSpace, pool_size: int,
            rng: np.random.Generator | None = None, xi: float = 0.01,
            refine: bool = False) -> dict:
    """Pick the next configuration to evaluate.

    Draws ``pool_size`` uniform points in the hypercube, snaps each to the
    integer grid, scores EI, and returns the argmax (ties break toward the
    lowest pool index). With ``refine=True`` the winner is additionally
    hill-climbed over grid neighbours, which never lowers its EI.
    """
    if pool_size < 1:
        raise EmptySpace("pool_size must be >= 1")
    if rng is None:
        rng = np.random.default_rng(0)
    pool_u = rng.uniform(size=(pool_size, space.dim))
    snapped = np.stack([space.snap_unit(u) for u in pool_u])
    ei = _ei_minimize(state, snapped, xi)
    best_idx = int(np.argmax(ei))
    best_cfg = space.round_to_grid(snapped[best_idx])
    if not refine:
        return best_cfg
    best_ei = ei[best_idx]
    while True:
        neighbours = []
        for name in space.NAMES:
            lo, hi = getattr(space, name)
            for delta in (-1, 1):
                v = best_cfg[name] + delta
                if lo <= v <= hi:
                    neighbours.append({**best_cfg, name: v})
        if not neighbours:
            return best_cfg
        nu = np.stack([space.to_unit(c) for c in neighbours])
        nei = _ei_minimize(state, nu, xi)
        top = int(np.argmax(nei))
        if nei[top] <= best_ei:
            return best_cfg
        best_ei = nei[top]
        best_cfg = neighbours[top]


def _box_candidates(space: SearchSpace, center: dict, radii: dict,
                    evaluated: set) -> list[dict]:
    """Unevaluated grid cells in an axis-aligned box around ``center``."""
    ranges = []
    for name in space.NAMES:
        lo, hi = getattr(space, name)
        r = radii[name]
        ranges.append(range(max(lo, center[name] - r), min(hi, center[name] + r) + 1))
    cells = []
    for combo in itertools.product(*ranges):
        if combo not in evaluated:
            cells.append(dict(zip(space.NAMES, combo)))
    return cells


def _coordinate_neighbours(space: SearchSpace, center: dict, evaluated: set) -> list[dict]:
    """Unevaluated single-coordinate +-1 neighbours of ``center``."""
    cells = []
    for name in space.NAMES:
        lo, hi = getattr(space, name)
        for delta in (-1, 1):
            v = center[name] + delta
            if lo <= v <= hi:
                cfg = {**center, name: v}
                if tuple(cfg[n] for n in space.NAMES) not in evaluated:
                    cells.append(cfg)
    return cells


@dataclass(frozen=True)
class Trial:
    index: int
    config: dict
    objective: float
    wall_seconds: float
    failed: bool = False


@dataclass(frozen=True)
class TuneResult:
    best_config: dict
    best_objective: float
    trials: tuple
    incumbent: tuple   # best objective seen up to and including each trial


def tune(objective, space: SearchSpace, budget: int, init: int | None = None, *,
         seed: int = 0, pool_size: int = 512, xi: float = 0.01,
         hyper: GPHyper | None = None) -> TuneResult:
    """Minimize ``objective(config)`` over the integer grid.

    The first ``init`` trials (default min(5, budget)) are a seeded
    Latin-hypercube design. After that, global EI proposals alternate with
    exploitation steps that take the best posterior mean over a box of
    unevaluated cells around the incumbent, so the search concentrates
    instead of wandering the hypercube; the final trials sweep the
    incumbent's immediate grid neighbours (best predicted mean alternating
    with highest posterior uncertainty) to settle the exact cell. A failing
    objective is recorded with a worst-so-far penalty and skipped. Fully
    reproducible for fixed seeds.
    """
    if budget < 1:
        raise InvalidSpec("budget must be >= 1")
    if init is None:
        init = min(5, budget)
    if not 1 <= init <= budget:
        raise InvalidSpec("need budget >= init >= 1")
    if hyper is None:
        hyper = GPHyper(length_scales=np.full(space.dim, 0.2))

    sampler = qmc.LatinHypercube(d=space.dim, seed=seed)
    init_points = sampler.random(init)
    rng = np.random.default_rng(seed + 1)
    box_radii = {name: max(2, round(0.1 * (getattr(space, name)[1] - getattr(space, name)[0])))
                 for name in space.NAMES}
    polish = min(max(4, round(0.2 * budget)), max(0, (budget - init) // 2))

    observations: list[Observation] = []
    trials: list[Trial] = []
    incumbent: list[float] = []
    evaluated: set[tuple] = set()
    best_y = np.inf
    best_cfg: dict | None = None

    def evaluate(idx: int, cfg: dict):
        nonlocal best_y, best_cfg
        t0 = time.perf_counter()
        failed = False
        try:
            y = float(objective(cfg))
        except Exception:  # noqa: BLE001 - penalized and skipped, not fatal
            failed = True
            finite = [t.objective for t in trials if np.isfinite(t.objective)]
            y = max(finite) if finite else np.inf
        elapsed = time.perf_counter() - t0
        evaluated.add(tuple(cfg[n] for n in space.NAMES))
        if np.isfinite(y):
            observations.append(Observation(x=space.to_unit(cfg), y=y))
            if y < best_y:
                best_y = y
                best_cfg = cfg
        trials.append(Trial(index=idx, config=cfg, objective=y,
                            wall_seconds=elapsed, failed=failed))
        incumbent.append(best_y)

    def local_pick(state, cells, explore: bool) -> dict:
        uq = np.stack([space.to_unit(c) for c in cells])
        mu, var = _posterior_std_units(state, uq)
        return cells[int(np.argmax(var)) if explore else int(np.argmin(mu))]

    for i in range(init):
        evaluate(i, space.round_to_grid(init_points[i]))
    polish_count = 0
    for i in range(init, budget):
        state = gp_fit(observations, hyper)
        cfg = None
        if best_cfg is not None and i >= budget - polish:
            cells = _coordinate_neighbours(space, best_cfg, evaluated)
            if cells:
                cfg = local_pick(state, cells, explore=polish_count % 2 == 1)
                polish_count += 1
        elif best_cfg is not None and (i - init) % 2 == 1:
            cells = _box_candidates(space, best_cfg, box_radii, evaluated)
            if cells:
                cfg = local_pick(state, cells, explore=False)
        if cfg is None:
            cfg = propose(state, space, pool_size, rng=rng, xi=xi, refine=True)
        evaluate(i, cfg)

    if best_cfg is None:
        raise ObjectiveFailure(budget - 1, RuntimeError("every trial failed"))
    return TuneResult(best_config=best_cfg, best_objective=best_y,
                      trials=tuple(trials), incumbent=tuple(incumbent))
