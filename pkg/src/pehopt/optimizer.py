"""Particle-swarm search for the design that harvests the most energy."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, PehError
from .excitation import AccelerationWindow
from .femodel import ModelSettings
from .geometry import ShapeParams, design_bounds
from .modal import reduce_design
from .response import energy_from_spectrum, simulate, window_power

log = logging.getLogger(__name__)

BOUND_MODES = ("clamp", "reflect")
DISCREPANCY_WARN = 0.10


@dataclass(frozen=True)
class PsoConfig:
    swarm_size: int = 20
    max_iter: int = 50
    inertia: float = 0.72
    c1: float = 1.49
    c2: float = 1.49
    bounds_mode: str = "clamp"
    tol: float = 1e-4
    patience: int = 10
    seed: int = 0
    bin_hz: float | None = 0.01  # spectral bin merge width for the objective

    def __post_init__(self):
        if int(self.swarm_size) < 2:
            raise ConfigError(f"swarm_size must be >= 2, got {self.swarm_size}")
        if int(self.max_iter) < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        if not 0.0 < self.inertia < 1.0:
            raise ConfigError(f"inertia must lie in (0, 1), got {self.inertia}")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ConfigError("c1 and c2 must be positive")
        if self.bounds_mode not in BOUND_MODES:
            raise ConfigError(f"bounds_mode must be one of {BOUND_MODES}")
        if self.tol < 0 or self.patience < 1:
            raise ConfigError("tol must be >= 0 and patience >= 1")
        if self.bin_hz is not None and not self.bin_hz > 0:
            raise ConfigError("bin_hz must be positive or null")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "PsoConfig":
        return cls(**doc)


@dataclass(frozen=True)
class SwarmResult:
    x: np.ndarray
    value: float
    trace: np.ndarray
    evaluations: int
    failures: int


def _apply_bounds(x, v, lo, hi, mode):
    if mode == "clamp":
        out = (x < lo) | (x > hi)
        x = np.clip(x, lo, hi)
        v = np.where(out, 0.0, v)
    else:
        span = hi - lo
        # fold back into the box (period 2*span), reverse velocity where folded
        y = np.mod(x - lo, 2.0 * span)
        folded = y > span
        x = lo + np.where(folded, 2.0 * span - y, y)
        v = np.where(folded, -v, v)
    return x, v


def _safe_eval(fn, x) -> float:
    try:
        val = float(fn(x))
    except (PehError, np.linalg.LinAlgError, ValueError, ArithmeticError) as exc:
        log.warning("objective failed at %s: %s", np.array2string(x, precision=5), exc)
        return -np.inf
    if not np.isfinite(val):
        log.warning("objective non-finite at %s", np.array2string(x, precision=5))
        return -np.inf
    return val


def particle_swarm(objective: Callable[[np.ndarray], float], lo, hi, config: PsoConfig,
                   map_fn: Callable | None = None) -> SwarmResult:
    """Maximise ``objective`` over the box ``[lo, hi]``.

    Global-best topology with the usual inertia/cognitive/social update.
    ``map_fn(f, xs)`` may evaluate a batch in parallel; it must preserve
    order. Failed evaluations score ``-inf`` and never stop the run.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n, d = int(config.swarm_size), lo.size
    rng = np.random.default_rng(config.seed)
    span = hi - lo
    mapper = map_fn or (lambda f, xs: [f(x) for x in xs])

    def evaluate(xs):
        return np.array(mapper(lambda x: _safe_eval(objective, x), list(xs)), dtype=float)

    x = lo + rng.random((n, d)) * span
    v = (rng.random((n, d)) * 2.0 - 1.0) * 0.1 * span
    fx = evaluate(x)
    pbest, pval = x.copy(), fx.copy()
    g = int(np.argmax(pval))
    gbest, gval = pbest[g].copy(), pval[g]
    trace = [gval]
    evals, fails = n, int(np.sum(~np.isfinite(fx)))

    for _ in range(int(config.max_iter) - 1):
        r1 = rng.random((n, d))
        r2 = rng.random((n, d))
        v = config.inertia * v + config.c1 * r1 * (pbest - x) + config.c2 * r2 * (gbest - x)
        v = np.clip(v, -span, span)
        x, v = _apply_bounds(x + v, v, lo, hi, config.bounds_mode)
        fx = evaluate(x)
        evals += n
        fails += int(np.sum(~np.isfinite(fx)))
        better = fx > pval
        pbest[better], pval[better] = x[better], fx[better]
        g = int(np.argmax(pval))
        if pval[g] > gval:
            gbest, gval = pbest[g].copy(), pval[g]
        trace.append(gval)
        if len(trace) > config.patience:
            ref = trace[-1 - config.patience]
            if np.isfinite(ref) and gval - ref <= config.tol * max(abs(ref), 1e-300):
                break
    return SwarmResult(gbest, float(gval), np.array(trace), evals, fails)


# --------------------------------------------------------------------------
# harvester objective
# --------------------------------------------------------------------------

def spectral_objective(window: AccelerationWindow, settings: ModelSettings,
                       bin_hz: float | None = 0.01) -> Callable[[np.ndarray], float]:
    """Steady-state energy [J] of the design ``x`` under ``window``."""
    spectrum = window_power(window, bin_hz)

    def f(x):
        reduced = reduce_design(settings.shape(x), settings)
        return energy_from_spectrum(reduced, spectrum)

    return f


@dataclass
class OptResult:
    params: ShapeParams
    objective: float          # spectral estimate [J]
    energy_time: float        # time-domain re-score [J]
    frequency: float          # fundamental of the best design [Hz]
    trace: np.ndarray
    window_id: str = ""
    location: str = ""
    start: float = 0.0
    evaluations: int = 0
    failures: int = 0

    @property
    def discrepancy(self) -> float:
        if self.energy_time == 0.0:
            return 0.0 if self.objective == 0.0 else np.inf
        return abs(self.objective - self.energy_time) / abs(self.energy_time)

    @property
    def flagged(self) -> bool:
        return bool(self.discrepancy > DISCREPANCY_WARN)

    def to_dict(self) -> dict:
        return {
            "window_id": self.window_id,
            "location": self.location,
            "start": self.start,
            "params": self.params.to_dict(),
            "objective_J": self.objective,
            "energy_time_J": self.energy_time,
            "discrepancy": self.discrepancy,
            "flagged": self.flagged,
            "frequency_hz": self.frequency,
            "evaluations": self.evaluations,
            "failures": self.failures,
            "trace": [float(t) for t in self.trace],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "OptResult":
        return cls(
            params=ShapeParams(**doc["params"]),
            objective=float(doc["objective_J"]),
            energy_time=float(doc["energy_time_J"]),
            frequency=float(doc["frequency_hz"]),
            trace=np.asarray(doc.get("trace", []), dtype=float),
            window_id=doc.get("window_id", ""),
            location=doc.get("location", ""),
            start=float(doc.get("start", 0.0)),
            evaluations=int(doc.get("evaluations", 0)),
            failures=int(doc.get("failures", 0)),
        )


def optimize(window: AccelerationWindow, config: PsoConfig | None = None,
             settings: ModelSettings | None = None, objective=None, map_fn=None,
             rescore: bool = True) -> OptResult:
    """Best design for one window.

    The swarm scores designs with the spectral surrogate; the winner is then
    re-simulated in the time domain and both energies are kept.
    """
    config = config or PsoConfig()
    settings = settings or ModelSettings()
    if window.samples.size == 0:
        raise ValueError(f"window {window.window_id!r} is empty")
    fn = objective or spectral_objective(window, settings, config.bin_hz)
    lo, hi = design_bounds()
    res = particle_swarm(fn, lo, hi, config, map_fn)
    if not np.isfinite(res.value):
        raise PehError(f"every design failed to evaluate for window {window.window_id!r}")
    best = settings.shape(res.x)
    reduced = reduce_design(best, settings)
    e_time = simulate(reduced, window, params=best).energy if rescore else res.value
    out = OptResult(
        params=best,
        objective=res.value,
        energy_time=float(e_time),
        frequency=float(reduced.frequencies_hz[0]),
        trace=res.trace,
        window_id=window.window_id,
        location=window.location,
        start=window.start,
        evaluations=res.evaluations,
        failures=res.failures,
    )
    if rescore and out.flagged:
        log.warning("window %s: spectral %.4g J vs time-domain %.4g J (%.1f%% apart)",
                    window.window_id, out.objective, out.energy_time, 100 * out.discrepancy)
    return out


@dataclass
class BatchResult:
    """Per-window optima in start-time order plus any windows that failed."""

    results: list[OptResult] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)

    def __iter__(self):
        return iter(self.results)

    def __len__(self):
        return len(self.results)

    def __getitem__(self, i):
        return self.results[i]


def optimize_all(windows: Sequence[AccelerationWindow], config: PsoConfig | None = None,
                 settings: ModelSettings | None = None, location: str | None = None,
                 threads: int = 1, rescore: bool = True) -> BatchResult:
    """Optimise every window of one location.

    Each window uses ``config.seed``, so identical windows give identical
    designs regardless of position or thread scheduling.
    """
    windows = list(windows)
    if not windows:
        return BatchResult()
    locs = {w.location for w in windows}
    if location is not None:
        locs.add(location)
    if len(locs) > 1:
        raise ValueError(f"windows span several locations: {sorted(locs)}")
    windows.sort(key=lambda w: (w.start, w.window_id))

    def run(w):
        try:
            return optimize(w, config, settings, rescore=rescore), None
        except (PehError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.error("window %s failed: %s", w.window_id, exc)
            return None, f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, windows))
    else:
        outcomes = [run(w) for w in windows]
    batch = BatchResult()
    for w, (res, err) in zip(windows, outcomes):
        if res is None:
            batch.failures[w.window_id] = err
        else:
            batch.results.append(res)
    return batch


def grid_search(objective, n: int = 30, lo=None, hi=None, map_fn=None):
    """Exhaustive ``n^d`` grid including the box corners; returns ``(x, value)``."""
    if lo is None or hi is None:
        lo, hi = design_bounds()
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    mapper = map_fn or (lambda f, xs: [f(x) for x in xs])
    vals = np.array(mapper(lambda x: _safe_eval(objective, x), list(pts)))
    i = int(np.argmax(vals))
    return pts[i], float(vals[i])
