"""k-means grouping of per-window optima and silhouette-based choice of k."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ClusteringError
from .femodel import ModelSettings
from .geometry import ShapeParams, design_bounds
from .modal import reduce_design
from .response import frf

SILHOUETTE_FLOOR = 0.5
B_MODES = ("min", "mean")


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    history: np.ndarray  # within-cluster SS after each Lloyd step of the kept restart


def _sq_dist(X, C):
    return np.maximum(((X[:, None, :] - C[None, :, :]) ** 2).sum(-1), 0.0)


def _plusplus(X, k, rng):
    n = X.shape[0]
    centres = [X[rng.integers(n)]]
    d2 = _sq_dist(X, np.array(centres))[:, 0]
    for _ in range(1, k):
        tot = d2.sum()
        if tot <= 0:
            i = int(rng.integers(n))
        else:
            i = int(rng.choice(n, p=d2 / tot))
        centres.append(X[i])
        d2 = np.minimum(d2, _sq_dist(X, X[i][None])[:, 0])
    return np.array(centres)


def _lloyd(X, C, max_iter):
    k = C.shape[0]
    labels = None
    history = []
    for _ in range(max_iter):
        d2 = _sq_dist(X, C)
        new = np.argmin(d2, axis=1)
        # reseed empty clusters at the point farthest from its centroid
        for j in range(k):
            if not np.any(new == j):
                far = int(np.argmax(d2[np.arange(X.shape[0]), new]))
                C[j] = X[far]
                new[far] = j
                d2 = _sq_dist(X, C)
        C = np.array([X[new == j].mean(axis=0) for j in range(k)])
        history.append(float(_sq_dist(X, C)[np.arange(X.shape[0]), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    return new, C, np.array(history)


def kmeans(points, k: int, seed: int = 0, restarts: int = 10, max_iter: int = 300) -> KMeansResult:
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    k = int(k)
    if k < 1 or k > n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        labels, C, hist = _lloyd(X, _plusplus(X, k, rng), max_iter)
        inertia = hist[-1]
        if best is None or inertia < best.inertia - 1e-12 * max(1.0, abs(best.inertia)):
            best = KMeansResult(labels, C, inertia, hist)
    return best


def silhouette_samples(points, labels, b_mode: str = "min") -> np.ndarray:
    """Per-sample ``s = (b - a) / max(a, b)``.

    Singletons score 0; ``a = b = 0`` scores 0; ``a = 0 < b`` scores 1.
    ``b_mode="mean"`` averages over all other points instead of taking the
    nearest other cluster.
    """
    if b_mode not in B_MODES:
        raise ValueError(f"b_mode must be one of {B_MODES}")
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    labels = np.asarray(labels)
    ids = np.unique(labels)
    if ids.size < 2:
        raise ClusteringError("silhouette is undefined for a single cluster")
    D = np.sqrt(_sq_dist(X, X))
    n = X.shape[0]
    s = np.zeros(n)
    members = {c: labels == c for c in ids}
    for i in range(n):
        own = members[labels[i]]
        size = own.sum()
        if size == 1:
            continue
        a = D[i, own].sum() / (size - 1)
        if b_mode == "min":
            b = min(D[i, members[c]].mean() for c in ids if c != labels[i])
        else:
            b = D[i, ~own].mean()
        m = max(a, b)
        s[i] = 0.0 if m == 0 else (b - a) / m
    return s


def silhouette(points, labels, b_mode: str = "min") -> tuple[float, np.ndarray]:
    s = silhouette_samples(points, labels, b_mode)
    return float(s.mean()), s


# --------------------------------------------------------------------------
# candidate selection
# --------------------------------------------------------------------------

@dataclass
class DesignCandidate:
    params: ShapeParams
    members: list[str]
    frequency: float = float("nan")
    peak_frequency: float = float("nan")
    peak_magnitude: float = float("nan")
    window_energies: dict[str, float] = field(default_factory=dict)
    energy_24h: float | None = None
    label: int = 0

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "params": self.params.to_dict(),
            "members": list(self.members),
            "frequency_hz": self.frequency,
            "frf_peak_hz": self.peak_frequency,
            "frf_peak_V_per_ms2": self.peak_magnitude,
            "window_energies_J": dict(self.window_energies),
            "energy_24h_J": self.energy_24h,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DesignCandidate":
        return cls(
            params=ShapeParams(**doc["params"]),
            members=list(doc["members"]),
            frequency=float(doc["frequency_hz"]),
            peak_frequency=float(doc["frf_peak_hz"]),
            peak_magnitude=float(doc["frf_peak_V_per_ms2"]),
            window_energies={k: float(v) for k, v in doc.get("window_energies_J", {}).items()},
            energy_24h=doc.get("energy_24h_J"),
            label=int(doc.get("label", 0)),
        )


@dataclass
class ClusteringReport:
    k: int
    silhouettes: dict[int, float]
    assignments: dict[str, int]
    mean: list[float]
    scale: list[float]
    fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "silhouettes": {str(k): v for k, v in sorted(self.silhouettes.items())},
            "assignments": dict(sorted(self.assignments.items())),
            "feature_mean": self.mean,
            "feature_scale": self.scale,
            "single_cluster_fallback": self.fallback,
        }

    def silhouette_csv(self) -> str:
        rows = ["k,silhouette"] + [f"{k},{v!r}" for k, v in sorted(self.silhouettes.items())]
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class ClusterConfig:
    k_max: int = 6
    floor: float = SILHOUETTE_FLOOR
    b_mode: str = "min"
    use_frequency: bool = False
    restarts: int = 10
    frf_band: tuple[float, float] = (0.5, 30.0)
    frf_points: int = 600

    def __post_init__(self):
        if self.k_max < 2:
            raise ValueError("k_max must be >= 2")
        if self.b_mode not in B_MODES:
            raise ValueError(f"b_mode must be one of {B_MODES}")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["frf_band"] = list(self.frf_band)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "ClusterConfig":
        doc = dict(doc)
        if "frf_band" in doc:
            doc["frf_band"] = tuple(doc["frf_band"])
        return cls(**doc)


def _data_seed(X: np.ndarray) -> int:
    # rounded so that harmless float noise does not change the seed
    rows = sorted(tuple(np.round(r, 12)) for r in X)
    digest = hashlib.sha256(repr(rows).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _canonical(labels: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Relabel clusters in lexicographic order of their centroids."""
    ids = np.unique(labels)
    cents = [tuple(X[labels == c].mean(axis=0)) for c in ids]
    order = sorted(range(ids.size), key=lambda i: cents[i])
    remap = {ids[j]: r for r, j in enumerate(order)}
    return np.array([remap[c] for c in labels])


def summarize_design(params: ShapeParams, settings: ModelSettings, band=(0.5, 30.0), points=600):
    """Fundamental frequency and FRF peak of a design."""
    reduced = reduce_design(params, settings)
    f1 = float(reduced.frequencies_hz[0])
    grid = np.unique(np.concatenate([np.linspace(band[0], band[1], points), [f1]]))
    pk_f, pk_m = frf(reduced, grid).peak()
    return f1, pk_f, pk_m


def select_candidates(optima, settings: ModelSettings | None = None,
                      config: ClusterConfig | None = None, analyze: bool = True):
    """Cluster the optimal designs and return ``(candidates, report)``.

    ``optima`` holds objects with ``params``, ``window_id`` and
    ``frequency`` (e.g. OptResult). Features are z-scored ``(L, l, H)``,
    optionally with the fundamental frequency appended.
    """
    settings = settings or ModelSettings()
    config = config or ClusterConfig()
    optima = list(optima)
    if not optima:
        return [], ClusteringReport(0, {}, {}, [], [], fallback=True)
    ids = [o.window_id for o in optima]
    raw = np.array([o.params.vector() for o in optima])
    if config.use_frequency:
        raw = np.column_stack([raw, [o.frequency for o in optima]])
    n = len(optima)
    # work on a sorted copy so nothing (not even float summation order)
    # depends on the input order
    order = np.lexsort(raw.T[::-1])
    raw_s = raw[order]
    mu = raw_s.mean(axis=0)
    sd = raw_s.std(axis=0)
    sd_safe = np.where(sd > 0, sd, 1.0)
    Zs = (raw_s - mu) / sd_safe
    seed = _data_seed(Zs)
    scores: dict[int, float] = {}
    fits: dict[int, np.ndarray] = {}
    distinct = np.unique(np.round(Zs, 12), axis=0).shape[0]
    for k in range(2, min(config.k_max, n - 1) + 1):
        if k > distinct:
            break
        res = kmeans(Zs, k, seed=seed, restarts=config.restarts)
        if np.unique(res.labels).size < 2:
            continue
        scores[k] = silhouette(Zs, res.labels, config.b_mode)[0]
        fits[k] = res.labels
    if scores and max(scores.values()) >= config.floor:
        k = max(scores, key=lambda kk: (scores[kk], -kk))
        labels_sorted = _canonical(fits[k], Zs)
        fallback = False
    else:
        k = 1
        labels_sorted = np.zeros(n, dtype=int)
        fallback = True
    labels = np.empty(n, dtype=int)
    labels[order] = labels_sorted

    lo, hi = design_bounds()
    candidates = []
    for c in range(k):
        sel = labels == c
        centre = raw_s[labels_sorted == c, :3].mean(axis=0)
        centre = np.clip(centre, lo, hi)
        params = settings.shape(centre)
        cand = DesignCandidate(params=params, members=sorted(i for i, m in zip(ids, sel) if m), label=c)
        if analyze:
            cand.frequency, cand.peak_frequency, cand.peak_magnitude = summarize_design(
                params, settings, config.frf_band, config.frf_points)
        candidates.append(cand)
    if analyze:
        candidates.sort(key=lambda cd: (cd.frequency, tuple(cd.params.vector())))
    else:
        candidates.sort(key=lambda cd: tuple(cd.params.vector()))
    relabel = {cd.label: i for i, cd in enumerate(candidates)}
    for cd in candidates:
        cd.label = relabel[cd.label]
    report = ClusteringReport(
        k=k,
        silhouettes=scores,
        assignments={i: relabel[int(l)] for i, l in zip(ids, labels)},
        mean=[float(v) for v in mu],
        scale=[float(v) for v in sd],
        fallback=fallback,
    )
    return candidates, report
