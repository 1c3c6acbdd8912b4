"""Campaign stages: windows, per-window optima, candidates, 24-h evaluation."""
from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..cluster import DesignCandidate, select_candidates
from ..errors import PehError
from ..excitation import (
    AccelerationWindow,
    classify_traffic,
    count_vehicles,
    ingest_csv,
    synthesize,
)
from ..modal import reduce_design
from ..optimizer import BatchResult, OptResult, optimize
from ..response import energy_from_voltage, simulate
from .config import CampaignConfig, load_config

log = logging.getLogger(__name__)

REPORT_VERSION = 1
RECORD_NOTE = ("24-h energies are simulated over the concatenation of the same windows "
               "used for optimisation")


def window_seed(seed: int, index: int) -> int:
    """Traffic seed of window ``index``; shared by every location so that all
    sensors see the same vehicles."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _window_hash(w: AccelerationWindow) -> str:
    return _sha(np.ascontiguousarray(w.samples, dtype="<f8").tobytes())


@dataclass
class WindowSet:
    windows: dict[str, list[AccelerationWindow]]
    meta: dict[str, list[dict]]


def build_windows(cfg: CampaignConfig) -> WindowSet:
    plan = cfg.windows
    out: dict[str, list[AccelerationWindow]] = {}
    meta: dict[str, list[dict]] = {}
    if plan.source == "csv":
        for loc in cfg.locations:
            wins = []
            for path in loc.csv:
                wins.extend(ingest_csv(path, loc.id, plan.duration))
            if len(wins) < plan.count:
                log.warning("%s: only %d of %d windows available", loc.id, len(wins), plan.count)
            wins = wins[:plan.count]
            # ids unique across several files
            for k, w in enumerate(wins):
                w.window_id = f"{loc.id}/w{k:02d}"
                w.start = k * plan.duration
            out[loc.id] = wins
            meta[loc.id] = [{"window_id": w.window_id, "start": w.start, "source": "csv"}
                            for w in wins]
    else:
        bridge = cfg.bridge_model()
        base = cfg.traffic_spec()
        for loc in cfg.locations:
            wins, rows = [], []
            for k in range(plan.count):
                traffic = base.with_rate(cfg.window_rate(k)).with_seed(window_seed(cfg.seed, k))
                w, vehicles = synthesize(bridge, traffic, loc.id, plan.duration, plan.rate,
                                         start=k * plan.duration, window_id=f"{loc.id}/w{k:02d}",
                                         return_vehicles=True)
                wins.append(w)
                rows.append({"window_id": w.window_id, "start": w.start, "source": "synthetic",
                             "traffic_seed": traffic.seed, "rate_per_hour": traffic.rate_per_hour,
                             "vehicles_true": len(vehicles)})
            out[loc.id] = wins
            meta[loc.id] = rows
    for loc, wins in out.items():
        for w, row in zip(wins, meta[loc]):
            row["n_samples"] = int(w.samples.size)
            row["rate"] = w.rate
            row["sha256"] = _window_hash(w)
    return WindowSet(out, meta)


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------

def stage_optimize(cfg: CampaignConfig, ws: WindowSet) -> dict[str, BatchResult]:
    """Optimise every (location, window) pair; failures are kept per window."""
    pso = cfg.pso_config()
    settings = cfg.model_settings()
    jobs = [(loc, w) for loc in sorted(ws.windows) for w in ws.windows[loc]]

    def run(job):
        loc, w = job
        try:
            return optimize(w, pso, settings), None
        except (PehError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.error("%s failed: %s", w.window_id, exc)
            return None, f"{type(exc).__name__}: {exc}"

    outcomes = _pmap(run, jobs, cfg.threads)
    batches = {loc: BatchResult() for loc in ws.windows}
    for (loc, w), (res, err) in zip(jobs, outcomes):
        if res is None:
            batches[loc].failures[w.window_id] = err
        else:
            batches[loc].results.append(res)
    for b in batches.values():
        b.results.sort(key=lambda r: (r.start, r.window_id))
    return batches


def stage_cluster(cfg: CampaignConfig, optima: dict[str, list[OptResult]]):
    settings = cfg.model_settings()
    ccfg = cfg.cluster_config()
    out = {}
    for loc in sorted(optima):
        res = list(optima[loc])
        if not res:
            out[loc] = ([], None)
            continue
        out[loc] = select_candidates(res, settings, ccfg)
    return out


def _concatenate(wins: list[AccelerationWindow]) -> tuple[AccelerationWindow, list[slice]]:
    wins = sorted(wins, key=lambda w: w.start)
    rates = {w.rate for w in wins}
    if len(rates) != 1:
        raise PehError("windows of one location have different sample rates")
    bounds = np.cumsum([0] + [w.samples.size for w in wins])
    rec = AccelerationWindow(np.concatenate([w.samples for w in wins]), wins[0].rate,
                             wins[0].location, wins[0].start, f"{wins[0].location}/record")
    return rec, [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def evaluate_candidate(cand: DesignCandidate, wins: list[AccelerationWindow], cfg: CampaignConfig):
    """Fill the 24-h and per-window energies of ``cand`` in place."""
    settings = cfg.model_settings()
    reduced = reduce_design(cand.params, settings)
    rec, slices = _concatenate(wins)
    sim = simulate(reduced, rec, cfg.evaluation.rtol, cfg.evaluation.atol, params=cand.params)
    ordered = sorted(wins, key=lambda w: w.start)
    cand.energy_24h = float(sim.energy)
    cand.window_energies = {
        w.window_id: energy_from_voltage(sim.voltage[s], rec.dt, reduced.R_l)
        for w, s in zip(ordered, slices)
    }
    return cand


def stage_evaluate(cfg: CampaignConfig, ws: WindowSet, clusters) -> dict[str, list[DesignCandidate]]:
    jobs = [(loc, c) for loc in sorted(clusters) for c in clusters[loc][0]]

    def run(job):
        loc, c = job
        return evaluate_candidate(c, ws.windows[loc], cfg)

    _pmap(run, jobs, cfg.threads)
    return {loc: clusters[loc][0] for loc in sorted(clusters)}


def _pmap(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# --------------------------------------------------------------------------
# traffic and report
# --------------------------------------------------------------------------

def spearman(x, y) -> float | None:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    rho = stats.spearmanr(x, y).statistic
    return float(rho) if np.isfinite(rho) else None


def traffic_report(wins: list[AccelerationWindow], energies: dict[str, float] | None = None,
                   meta: list[dict] | None = None) -> dict:
    """Per-window vehicle count, traffic class and best-device energy."""
    meta_by_id = {m["window_id"]: m for m in (meta or [])}
    rows = []
    for w in sorted(wins, key=lambda w: (w.start, w.window_id)):
        n = count_vehicles(w)
        per_hour = n * 3600.0 / w.duration if w.duration > 0 else 0.0
        row = {
            "window_id": w.window_id,
            "start": w.start,
            "vehicle_count": n,
            "count_per_hour": per_hour,
            "traffic_class": classify_traffic(per_hour).value,
            "energy_J": None if energies is None else energies.get(w.window_id),
        }
        if "vehicles_true" in meta_by_id.get(w.window_id, {}):
            row["vehicles_true"] = meta_by_id[w.window_id]["vehicles_true"]
        rows.append(row)
    valid = [r for r in rows if r["energy_J"] is not None]
    by_class = {}
    for cls in ("Low", "Medium", "High"):
        vals = [r["energy_J"] for r in valid if r["traffic_class"] == cls]
        by_class[cls] = {"windows": len(vals), "mean_energy_J": float(np.mean(vals)) if vals else None}
    return {
        "rows": rows,
        "by_class": by_class,
        "spearman_count_energy": spearman([r["vehicle_count"] for r in valid],
                                          [r["energy_J"] for r in valid]),
    }


@dataclass
class LocationResult:
    location: str
    status: str = "ok"
    candidates: list[DesignCandidate] = field(default_factory=list)
    best: int | None = None
    clustering: dict | None = None
    traffic: dict | None = None
    failures: dict[str, str] = field(default_factory=dict)
    optima: list[OptResult] = field(default_factory=list)

    @property
    def best_energy(self) -> float | None:
        if self.best is None:
            return None
        return self.candidates[self.best].energy_24h

    def to_dict(self) -> dict:
        return {
            "location": self.location,
            "status": self.status,
            "best_candidate": self.best,
            "best_energy_24h_J": self.best_energy,
            "candidates": [c.to_dict() for c in self.candidates],
            "clustering": self.clustering,
            "traffic": self.traffic,
            "window_failures": dict(sorted(self.failures.items())),
            "flagged_windows": sorted(o.window_id for o in self.optima if o.flagged),
        }


@dataclass
class CampaignReport:
    name: str
    config_sha256: str
    locations: dict[str, LocationResult]
    candidate_types: dict[str, int] = field(default_factory=dict)

    def ranking(self) -> list[str]:
        ok = [l for l in self.locations.values() if l.best_energy is not None]
        ok.sort(key=lambda l: (-l.best_energy, l.location))
        return [l.location for l in ok]

    def energy_table(self) -> list[dict]:
        return [
            {"location": loc, "best_energy_24h_J": r.best_energy,
             "candidate_energies_J": [c.energy_24h for c in r.candidates], "status": r.status}
            for loc, r in sorted(self.locations.items())
        ]

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "name": self.name,
            "config_sha256": self.config_sha256,
            "note": RECORD_NOTE,
            "locations": {k: v.to_dict() for k, v in sorted(self.locations.items())},
            "energy_by_location": self.energy_table(),
            "ranking": self.ranking(),
            "candidate_types": dict(sorted(self.candidate_types.items())),
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), sort_keys=True, indent=2) + "\n"


def _clean(obj):
    """JSON-safe copy: NaN/inf become null, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def assign_candidate_types(results: dict[str, LocationResult], cfg: CampaignConfig) -> dict[str, int]:
    """Group every location's best design into global candidate types."""
    best = [(loc, r.candidates[r.best]) for loc, r in sorted(results.items()) if r.best is not None]
    if not best:
        return {}
    if len(best) < 3:
        return {loc: 0 for loc, _ in best}

    class _Item:
        def __init__(self, loc, cand):
            self.params = cand.params
            self.window_id = loc
            self.frequency = cand.frequency

    _, rep = select_candidates([_Item(l, c) for l, c in best], cfg.model_settings(),
                               cfg.cluster_config(), analyze=False)
    return dict(rep.assignments)


def finish_location(loc: str, optima: BatchResult | list, cands, clus_report, wins, meta) -> LocationResult:
    res = LocationResult(loc, optima=list(optima))
    if isinstance(optima, BatchResult):
        res.failures = dict(optima.failures)
    res.candidates = list(cands)
    res.clustering = clus_report.to_dict() if clus_report is not None else None
    if res.candidates and all(c.energy_24h is not None for c in res.candidates):
        energies = [c.energy_24h for c in res.candidates]
        res.best = int(np.argmax(energies))
        assert all(res.best_energy >= e for e in energies)
        res.traffic = traffic_report(wins, res.candidates[res.best].window_energies, meta)
    else:
        res.traffic = traffic_report(wins, None, meta)
        if not res.candidates:
            res.status = "failed: no candidates"
    if res.failures and res.status == "ok":
        res.status = f"partial: {len(res.failures)} window(s) failed"
    return res


def config_sha(cfg: CampaignConfig) -> str:
    return _sha(cfg.canonical_json().encode())


def run_campaign(config, out_dir=None, plots: bool | None = None) -> CampaignReport:
    """Run every stage.

    Artifacts go to ``out_dir`` (default: the configured output directory);
    pass ``out_dir=False`` to keep everything in memory.
    """
    from .artifacts import ArtifactWriter

    cfg = load_config(config)
    target = cfg.output_dir if out_dir is None else out_dir
    writer = ArtifactWriter(target) if target else None
    if writer:
        writer.write_json("config", "config.json", json.loads(cfg.canonical_json()))

    ws = build_windows(cfg)
    if writer:
        writer.write_windows(ws, with_samples=False)
    batches = stage_optimize(cfg, ws)
    if writer:
        writer.write_optima(batches)

    results: dict[str, LocationResult] = {}
    clusters = {}
    for loc in sorted(batches):
        try:
            clusters[loc] = stage_cluster(cfg, {loc: batches[loc].results})[loc]
        except (PehError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.error("clustering failed for %s: %s", loc, exc)
            results[loc] = LocationResult(loc, status=f"failed: {exc}",
                                          failures=dict(batches[loc].failures))
    if writer:
        writer.write_clusters(clusters)

    for loc in sorted(clusters):
        cands, rep = clusters[loc]
        try:
            stage_evaluate(cfg, ws, {loc: (cands, rep)})
            results[loc] = finish_location(loc, batches[loc], cands, rep, ws.windows[loc],
                                           ws.meta[loc])
        except (PehError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.error("evaluation failed for %s: %s", loc, exc)
            results[loc] = LocationResult(loc, status=f"failed: {exc}", candidates=list(cands),
                                          failures=dict(batches[loc].failures))

    report = CampaignReport(cfg.name, config_sha(cfg), results)
    report.candidate_types = assign_candidate_types(results, cfg)
    if writer:
        writer.write_report(report)
        if cfg.plots if plots is None else plots:
            from .plots import emit_plots
            emit_plots(report, cfg.model_settings(), writer)
        writer.write_manifest()
    return report
