"""Command-line entry point: ``pehopt <stage> --config cfg.json``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import BoundsError, ConfigError, DataError, DataFormatError, PehError

EXIT_OK, EXIT_INVALID, EXIT_COMPUTE = 0, 1, 2
STAGES = ("synth", "optimize", "cluster", "evaluate", "campaign", "report")
log = logging.getLogger("pehopt")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pehopt", description="Bridge-mounted harvester design campaigns.")
    p.add_argument("stage", choices=STAGES)
    p.add_argument("--config", required=True, help="campaign JSON file")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="campaign seed (overrides the config)")
    p.add_argument("--threads", type=int, help="worker threads (overrides the config)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _need(path: Path, what: str):
    if not path.exists():
        raise ConfigError(f"{what} not found at {path}; run the earlier stage first")


def _run(args) -> int:
    from .pipeline import artifacts, campaign
    from .pipeline.config import load_config
    from .pipeline.plots import emit_plots

    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        raise ConfigError("--seed must be an unsigned 64-bit integer")
    if args.threads is not None and args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    cfg = load_config(args.config).with_overrides(args.seed, args.threads, args.out)
    root = Path(cfg.output_dir)

    if args.stage == "campaign":
        report = campaign.run_campaign(cfg)
        failed = [l for l, r in report.locations.items() if r.status != "ok"]
        for l in failed:
            log.error("location %s: %s", l, report.locations[l].status)
        print(root / "report.json")
        return EXIT_COMPUTE if failed else EXIT_OK

    writer = artifacts.ArtifactWriter(root)
    writer.write_json("config", "config.json", json.loads(cfg.canonical_json()))
    status = EXIT_OK
    if args.stage == "synth":
        ws = campaign.build_windows(cfg)
        writer.write_windows(ws, with_samples=True)
    elif args.stage == "optimize":
        ws = campaign.build_windows(cfg)
        writer.write_windows(ws)
        batches = campaign.stage_optimize(cfg, ws)
        writer.write_optima(batches)
        if any(b.failures for b in batches.values()):
            status = EXIT_COMPUTE
    elif args.stage == "cluster":
        _need(root / "optima", "optimisation results")
        optima = artifacts.load_optima(root)
        writer.write_clusters(campaign.stage_cluster(cfg, {k: v.results for k, v in optima.items()}))
    elif args.stage == "evaluate":
        _need(root / "clusters", "clustering results")
        optima = artifacts.load_optima(root)
        clusters = artifacts.load_clusters(root)
        ws = campaign.build_windows(cfg)
        results = {}
        for loc in sorted(clusters):
            cands, rep = clusters[loc]
            campaign.stage_evaluate(cfg, ws, {loc: (cands, rep)})
            results[loc] = campaign.finish_location(loc, optima.get(loc, []), cands, rep,
                                                    ws.windows[loc], ws.meta[loc])
        report = campaign.CampaignReport(cfg.name, campaign.config_sha(cfg), results)
        report.candidate_types = campaign.assign_candidate_types(results, cfg)
        writer.write_report(report)
        if any(r.status != "ok" for r in results.values()):
            status = EXIT_COMPUTE
    elif args.stage == "report":
        _need(root / "report.json", "report")
        doc = json.loads((root / "report.json").read_text())
        optima = {loc: [r.to_dict() for r in b.results]
                  for loc, b in artifacts.load_optima(root).items()}
        emit_plots(doc, cfg.model_settings(), writer, optima)
    writer.write_manifest()
    print(root)
    return status


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ConfigError, BoundsError, DataFormatError, DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (PehError, ArithmeticError, ValueError) as exc:
        print(f"compute failure: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
