"""Deterministic SVG figures, each with a CSV of the plotted data."""
from __future__ import annotations

import io

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from ..femodel import ModelSettings
from ..geometry import ShapeParams
from ..modal import reduce_design
from ..response import frf

FRF_BAND = (0.5, 30.0)
FRF_STEP = 0.02  # Hz
MAX_BUBBLE = 2000.0  # pt^2 for the largest energy
_RC = {"svg.hashsalt": "pehopt", "svg.fonttype": "none", "path.simplify": False}


def _save(fig: Figure, writer, rel: str):
    buf = io.BytesIO()
    with matplotlib.rc_context(_RC):
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    writer.write_bytes("report", rel, buf.getvalue())


def _placeholder(writer, rel: str, title: str, text: str = "no candidates"):
    fig = Figure(figsize=(5, 3.5))
    ax = fig.add_subplot()
    ax.set_title(title)
    ax.text(0.5, 0.5, text, ha="center", va="center", transform=ax.transAxes)
    ax.set_xticks([])
    ax.set_yticks([])
    _save(fig, writer, rel)


def frf_overlay(candidates: list[dict], settings: ModelSettings):
    """Dense |H| sweeps, a marker at each fundamental and each curve's maximum.

    With heavy mass-proportional damping the |H| maximum can sit a few
    grid steps off the fundamental, so the marker uses the fundamental.
    """
    grid = np.arange(FRF_BAND[0], FRF_BAND[1] + 0.5 * FRF_STEP, FRF_STEP)
    curves, markers, maxima = [], [], []
    for c in candidates:
        params = ShapeParams(**c["params"])
        red = reduce_design(params, settings)
        mag = frf(red, grid).magnitude
        curves.append(mag)
        j = int(np.argmin(np.abs(grid - red.frequencies_hz[0])))
        markers.append((float(grid[j]), float(mag[j])))
        i = int(np.argmax(mag))
        maxima.append((float(grid[i]), float(mag[i])))
    return grid, curves, markers, maxima


def bubble_sizes(energies) -> np.ndarray:
    """Marker areas [pt^2] proportional to energy."""
    e = np.asarray(energies, dtype=float)
    top = e.max() if e.size and e.max() > 0 else 1.0
    return MAX_BUBBLE * e / top


def emit_plots(report, settings: ModelSettings, writer, optima: dict | None = None) -> list[str]:
    """Write every figure of a campaign report; returns the SVG paths written.

    ``report`` is a CampaignReport or its JSON dict. ``optima`` maps location
    ids to lists of optimum dicts for the parameter-space scatter; when
    omitted the report's in-memory optima are used if present.
    """
    doc = report if isinstance(report, dict) else report.to_dict()
    if optima is None and not isinstance(report, dict):
        optima = {loc: [o.to_dict() for o in r.optima] for loc, r in report.locations.items()}
    optima = optima or {}
    written = []
    for loc, r in sorted(doc["locations"].items()):
        tag = loc.replace("/", "_")
        cands = r["candidates"]
        # FRF overlay
        rel = f"plots/{tag}_frf.svg"
        if not cands:
            _placeholder(writer, rel, f"{loc}: FRF")
        else:
            grid, curves, peaks, maxima = frf_overlay(cands, settings)
            fig = Figure(figsize=(6, 4))
            ax = fig.add_subplot()
            for i, (c, mag, pk) in enumerate(zip(cands, curves, peaks)):
                ax.semilogy(grid, mag, label=f"candidate {i} ({c['frequency_hz']:.2f} Hz)")
                ax.plot([pk[0]], [pk[1]], "kv")
            ax.set_xlabel("frequency [Hz]")
            ax.set_ylabel("|H| [V s^2/m]")
            ax.set_title(f"{loc}: voltage FRF")
            ax.legend(fontsize=7)
            _save(fig, writer, rel)
            rows = [[f] + [m[j] for m in curves] for j, f in enumerate(grid)]
            writer.write_csv("report", f"plots/{tag}_frf.csv",
                             ["frequency_hz"] + [f"candidate_{i}" for i in range(len(cands))], rows)
            writer.write_csv("report", f"plots/{tag}_frf_peaks.csv",
                             ["candidate", "marker_hz", "marker_mag", "fundamental_hz", "max_hz",
                              "max_mag"],
                             [(i, p[0], p[1], float(c["frequency_hz"]), m[0], m[1])
                              for i, (p, c, m) in enumerate(zip(peaks, cands, maxima))])
        written.append(rel)

        # silhouette vs k
        rel = f"plots/{tag}_silhouette.svg"
        sil = (r.get("clustering") or {}).get("silhouettes") or {}
        if not sil:
            _placeholder(writer, rel, f"{loc}: silhouette", "fewer than two clusters tested")
        else:
            ks = sorted(int(k) for k in sil)
            vals = [sil[str(k)] if str(k) in sil else sil[k] for k in ks]
            fig = Figure(figsize=(5, 3.5))
            ax = fig.add_subplot()
            ax.plot(ks, vals, "o-")
            ax.axhline(0.5, color="grey", ls="--", lw=0.8)
            ax.set_xlabel("k")
            ax.set_ylabel("mean silhouette")
            ax.set_title(f"{loc}: chosen k = {r['clustering']['k']}")
            _save(fig, writer, rel)
            writer.write_csv("report", f"plots/{tag}_silhouette.csv", ["k", "silhouette"],
                             list(zip(ks, vals)))
        written.append(rel)

        # parameter-space scatter
        rel = f"plots/{tag}_designs.svg"
        pts = optima.get(loc) or []
        if not pts and not cands:
            _placeholder(writer, rel, f"{loc}: designs")
        else:
            assign = (r.get("clustering") or {}).get("assignments", {})
            fig = Figure(figsize=(5, 4))
            ax = fig.add_subplot()
            rows = []
            if pts:
                L = [p["params"]["L"] for p in pts]
                H = [p["params"]["H"] for p in pts]
                lab = [assign.get(p["window_id"], 0) for p in pts]
                ax.scatter(L, H, c=lab, cmap="viridis", s=18, label="window optima")
                rows += [(p["window_id"], p["params"]["L"], p["params"]["l"], p["params"]["H"], a)
                         for p, a in zip(pts, lab)]
            if cands:
                ax.scatter([c["params"]["L"] for c in cands], [c["params"]["H"] for c in cands],
                           marker="x", color="red", s=60, label="candidates")
                rows += [(f"candidate_{i}", c["params"]["L"], c["params"]["l"], c["params"]["H"], i)
                         for i, c in enumerate(cands)]
            ax.set_xlabel("L [m]")
            ax.set_ylabel("H")
            ax.set_title(f"{loc}: optimal designs")
            ax.legend(fontsize=7)
            _save(fig, writer, rel)
            writer.write_csv("report", f"plots/{tag}_designs.csv", ["id", "L", "l", "H", "cluster"], rows)
        written.append(rel)

    # energy vs location
    table = [row for row in doc["energy_by_location"] if row["best_energy_24h_J"] is not None]
    rel = "plots/energy_by_location.svg"
    if not table:
        _placeholder(writer, rel, "energy by location")
    else:
        locs = [row["location"] for row in table]
        e = np.array([row["best_energy_24h_J"] for row in table])
        sizes = bubble_sizes(e)
        fig = Figure(figsize=(max(5, 0.8 * len(locs) + 2), 4))
        ax = fig.add_subplot()
        x = np.arange(len(locs))
        ax.scatter(x, e, s=sizes, alpha=0.6)
        ax.set_xticks(x, locs, rotation=45, ha="right")
        ax.set_ylabel("best 24-h energy [J]")
        ax.set_title("energy by location")
        ax.margins(0.2)
        fig.tight_layout()
        _save(fig, writer, rel)
        writer.write_csv("report", "plots/energy_by_location.csv",
                         ["location", "energy_J", "marker_area_pt2"], list(zip(locs, e, sizes)))
    written.append(rel)
    return written
