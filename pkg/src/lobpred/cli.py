"""``lobpred`` command line: ingest, synth, label, run, compare, report."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from datetime import date
from pathlib import Path

import numpy as np
import yaml

from . import __version__, config, plotting
from .book import ReconstructionStats, iter_snapshots, write_snapshot_csv
from .features import Variant
from .itch import StreamStats, stream_messages
from .labeling import Label, LabeledSample, choose_alpha, classify_array, day_samples, save_archive
from .runner import (
    DayCache,
    compare_variants,
    load_reports,
    open_source,
    render_aggregate,
    run_range,
)
from .synth import SynthConfig, write_days

log = logging.getLogger("lobpred")


def _config(args) -> config.ExperimentConfig:
    return config.load(args.config, args.set)


def cmd_ingest(args) -> int:
    src = Path(args.itch)
    day = args.date or src.name.split(".")[0]
    try:
        date.fromisoformat(day)
    except ValueError:
        log.error("cannot infer the trading date from %s; pass --date YYYY-MM-DD", src.name)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stream, recon = StreamStats(), ReconstructionStats()
    with open(src, "rb") as fh:
        snaps = iter_snapshots(stream_messages(fh, stream), args.symbol, stats=recon)
        n = write_snapshot_csv(out_dir / f"{day}.csv", list(snaps))
    print(f"{day}: {stream.messages} messages decoded, {stream.skipped} skipped "
          f"{dict(sorted(stream.skipped_by_type.items()))}, {recon.applied} applied to "
          f"{args.symbol}, {n} snapshots")
    return 0


def cmd_synth(args) -> int:
    raw = yaml.safe_load(Path(args.config).read_text()) if args.config else {}
    raw = config.apply_overrides(raw or {}, args.set)
    cfg = SynthConfig(**raw)
    paths = write_days(cfg, args.out)
    print(f"wrote {len(paths)} day(s) to {args.out}")
    return 0


def cmd_label(args) -> int:
    cfg = _config(args)
    cache = DayCache(cfg, open_source(cfg))
    day = date.fromisoformat(args.day)
    policy = cfg.policy()
    if args.alpha is not None:
        alpha, source = args.alpha, "given"
    else:
        try:
            train = cache.training_days(day)
            y = np.concatenate([day_samples(cache.prepare(d).features, cache.prepare(d).m,
                                            policy, d).y for d in train])
            source = f"training window {train[0]}..{train[-1]}"
        except ValueError:
            p = cache.prepare(day)
            y = day_samples(p.features, p.m, policy, day).y
            source = "the day itself (not enough history for a training window)"
        alpha = choose_alpha(y)
    policy = cfg.policy(alpha)
    p = cache.prepare(day)
    ds = day_samples(p.features, p.m, policy, day, stride=cfg.labels.eval_stride)
    labels = classify_array(ds.y, alpha)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    w = cfg.labels.window
    samples = [LabeledSample(p.features[t - w + 1 : t + 1], float(y), Label(int(c)), int(t), day)
               for t, y, c in zip(ds.anchors, ds.y, labels)]
    stem = f"{day}.{cfg.variant.value}"
    save_archive(out / f"{stem}.lobs", samples, policy)
    with open(out / f"{stem}.labels.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "y", "label"])
        wr.writerows([int(t), repr(float(y)), int(c)] for t, y, c in zip(ds.anchors, ds.y, labels))
    plotting.label_path(p.m, ds.anchors, ds.y, labels, alpha, out / f"{stem}.png",
                        f"{day} {cfg.labels.target} k={cfg.labels.k} k'={cfg.labels.k_prime}")
    shares = np.bincount(labels, minlength=3) / max(len(labels), 1)
    print(f"{day}: {len(samples)} samples, alpha={alpha:.6g} from {source}; "
          f"UP {shares[0]:.3f} DOWN {shares[1]:.3f} STABLE {shares[2]:.3f}")
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    result = run_range(cfg)
    sys.stdout.write(result.table)
    print(f"reports in {cfg.output_dir}")
    return 1 if result.failures and not result.reports else 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    variants = [Variant(v.strip()) for v in args.variants.split(",") if v.strip()]
    comp = compare_variants(cfg, variants)
    sys.stdout.write(comp.table)
    return 0


def cmd_report(args) -> int:
    reports = load_reports(args.run_dir)
    if not reports:
        log.error("no reports under %s/reports", args.run_dir)
        return 1
    sys.stdout.write(render_aggregate(args.run_dir, reports, title=args.title))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lobpred", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("-c", "--config", help="experiment YAML file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. --set train.epochs=3")
        return p

    p = sub.add_parser("ingest", help="ITCH 5.0 file -> snapshot CSV")
    p.add_argument("itch")
    p.add_argument("--symbol", required=True)
    p.add_argument("--date", help="trading date, default: from the file name")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="write synthetic snapshot CSV days")
    p.add_argument("-c", "--config", help="YAML with SynthConfig fields")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = with_config(sub.add_parser("label", help="label one day: archive, CSV and figure"))
    p.add_argument("--day", required=True)
    p.add_argument("--alpha", type=float, help="fixed threshold instead of fitting one")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label)

    p = with_config(sub.add_parser("run", help="rolling per-day evaluation"))
    p.set_defaults(func=cmd_run)

    p = with_config(sub.add_parser("compare", help="same run for several input variants"))
    p.add_argument("--variants", required=True, help="comma list, e.g. level1,prices_only")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="re-render aggregate table and figure of a run")
    p.add_argument("run_dir")
    p.add_argument("--title", default="")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (config.ConfigError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
