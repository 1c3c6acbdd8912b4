"""Output directory layout, stage writers/loaders and the hash manifest."""
from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import numpy as np

from ..cluster import ClusteringReport, DesignCandidate
from ..optimizer import BatchResult, OptResult

MANIFEST = "manifest.json"


def _dumps(obj) -> str:
    from .campaign import _clean
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _loc_file(loc: str) -> str:
    return loc.replace("/", "_")


class ArtifactWriter:
    """Writes files under ``root`` and records their sha256 per stage."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.stages: dict[str, dict[str, str]] = {}
        old = self.root / MANIFEST
        if old.is_file():
            try:
                doc = json.loads(old.read_text())
                self.stages = {k: dict(v["files"]) for k, v in doc.get("stages", {}).items()}
            except (json.JSONDecodeError, KeyError, TypeError, AttributeError):
                self.stages = {}

    def write_bytes(self, stage: str, rel: str, data: bytes) -> Path:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        self.stages.setdefault(stage, {})[rel] = hashlib.sha256(data).hexdigest()
        return path

    def write_text(self, stage: str, rel: str, text: str) -> Path:
        return self.write_bytes(stage, rel, text.encode("utf-8"))

    def write_json(self, stage: str, rel: str, obj) -> Path:
        return self.write_text(stage, rel, _dumps(obj))

    def write_csv(self, stage: str, rel: str, header, rows) -> Path:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        return self.write_text(stage, rel, buf.getvalue())

    # stage writers ----------------------------------------------------------

    def write_windows(self, ws, with_samples: bool = False):
        self.write_json("windows", "windows/index.json", ws.meta)
        if with_samples:
            for loc, wins in ws.windows.items():
                for w in wins:
                    rows = zip(w.times(), w.samples)
                    name = w.window_id.split("/")[-1]
                    self.write_csv("windows", f"windows/{_loc_file(loc)}/{name}.csv",
                                   ["time_s", "accel_ms2"], rows)

    def write_optima(self, batches: dict[str, BatchResult]):
        for loc, b in sorted(batches.items()):
            self.write_json("optimize", f"optima/{_loc_file(loc)}.json", {
                "location": loc,
                "results": [r.to_dict() for r in b.results],
                "failures": dict(sorted(b.failures.items())),
            })
            rows = [(r.window_id, i, v) for r in b.results for i, v in enumerate(r.trace)]
            self.write_csv("optimize", f"optima/{_loc_file(loc)}_traces.csv",
                           ["window_id", "iteration", "best_J"], rows)

    def write_clusters(self, clusters):
        for loc, (cands, rep) in sorted(clusters.items()):
            self.write_json("cluster", f"clusters/{_loc_file(loc)}.json", {
                "location": loc,
                "report": rep.to_dict() if rep is not None else None,
                "candidates": [c.to_dict() for c in cands],
            })
            if rep is not None:
                self.write_text("cluster", f"clusters/{_loc_file(loc)}_silhouette.csv",
                                rep.silhouette_csv())

    def write_report(self, report):
        self.write_text("evaluate", "report.json", report.to_json())
        rows = []
        for loc, r in sorted(report.locations.items()):
            for row in (r.traffic or {}).get("rows", []):
                rows.append((loc, row["window_id"], row["vehicle_count"], row["traffic_class"],
                             "" if row["energy_J"] is None else float(row["energy_J"])))
        self.write_csv("evaluate", "traffic.csv",
                       ["location", "window_id", "vehicle_count", "traffic_class", "energy_J"], rows)

    def write_manifest(self):
        stages = {}
        for name, files in sorted(self.stages.items()):
            files = dict(sorted(files.items()))
            digest = hashlib.sha256("".join(f"{k}:{v}\n" for k, v in files.items()).encode())
            stages[name] = {"files": files, "sha256": digest.hexdigest()}
        (self.root / MANIFEST).write_text(json.dumps({"stages": stages}, sort_keys=True, indent=2) + "\n")


# --------------------------------------------------------------------------
# loaders for stage-by-stage runs
# --------------------------------------------------------------------------

def load_optima(root) -> dict[str, BatchResult]:
    out = {}
    for path in sorted(Path(root, "optima").glob("*.json")):
        doc = json.loads(path.read_text())
        out[doc["location"]] = BatchResult(
            [OptResult.from_dict(d) for d in doc["results"]], dict(doc.get("failures", {})))
    return out


def load_clusters(root) -> dict:
    out = {}
    for path in sorted(Path(root, "clusters").glob("*.json")):
        doc = json.loads(path.read_text())
        rep = doc.get("report")
        report = None
        if rep is not None:
            report = ClusteringReport(
                k=rep["k"],
                silhouettes={int(k): v for k, v in rep["silhouettes"].items()},
                assignments=dict(rep["assignments"]),
                mean=rep["feature_mean"], scale=rep["feature_scale"],
                fallback=rep["single_cluster_fallback"],
            )
        out[doc["location"]] = ([DesignCandidate.from_dict(c) for c in doc["candidates"]], report)
    return out
