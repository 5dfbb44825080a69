"""Command-line entry point.

Subcommands: curate, synth, eval, report, export-ab. All pipeline
parameters come from the config file; flags only select paths and the
subcommand, which keeps the config hash stamped into manifests
meaningful. Exit codes: 0 success, 2 config error, 3 empty corpus,
1 unexpected failure. Set SECP_LOG to change the log level.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import sys
from pathlib import Path

from . import evalgen
from .audio_io import read_wav, write_wav
from .curation import ConfigError, export_ab_pairs, filter_manifest, load_config, run_round
from .enhance import EnhancerSpec, enhance
from .evalgen import EvalTriple, NoiseSpec, delta_quality, inject_noise, synth_clean

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_EMPTY_CORPUS = 3


def _enhancer_from_file(path: str) -> EnhancerSpec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if isinstance(data, dict) and "enhancer" in data:
        data = data["enhancer"]
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError(f"{path}: expected an enhancer object with a 'kind' field")
    data = dict(data)
    try:
        return EnhancerSpec(kind=data.pop("kind"), params=data)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_curate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    if args.round is not None:
        cfg.round_id = args.round
        cfg.validate()
    files = sorted(p for p in glob.glob(args.corpus, recursive=True) if Path(p).is_file())
    if not files:
        print(f"no files matched corpus pattern {args.corpus!r}", file=sys.stderr)
        return EXIT_EMPTY_CORPUS
    report = run_round(files, cfg, args.manifest, jobs=args.jobs)
    print(
        f"round {report.round_id}: {report.files_processed} file(s), "
        f"{len(report.failures)} failure(s), {report.segment_count} segment(s), "
        f"{report.curated_seconds:.1f} s curated -> {args.manifest}"
    )
    for failure in report.failures:
        print(f"  failed: {failure['source']}: {failure['error']}", file=sys.stderr)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(args.count):
        clean = synth_clean(args.duration, args.sample_rate, seed=args.seed + i)
        spec = NoiseSpec(
            noise_kind=args.noise_kind,
            rayleigh_sigma=args.rayleigh_sigma,
            snr_clip=(args.snr_min, args.snr_max),
            seed=args.seed + 100_000 + i,
        )
        noisy, target = inject_noise(clean, spec)
        clean_name = f"clean_{i:03d}.wav"
        noisy_name = f"noisy_{i:03d}.wav"
        write_wav(out / clean_name, clean, "float32")
        write_wav(out / noisy_name, noisy, "float32")
        entries.append(
            {
                "clean": clean_name,
                "noisy": noisy_name,
                "target_snr_db": target,
                "seed": args.seed + i,
            }
        )
    meta = {
        "sample_rate": args.sample_rate,
        "duration_seconds": args.duration,
        "noise_kind": args.noise_kind,
        "rayleigh_sigma": args.rayleigh_sigma,
        "snr_clip": [args.snr_min, args.snr_max],
        "seed": args.seed,
        "files": entries,
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {args.count} clean/noisy pair(s) to {out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    pairs = Path(args.pairs)
    meta_path = pairs / "metadata.json"
    if not meta_path.is_file():
        raise ConfigError(f"{meta_path}: pair metadata not found")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    spec = _enhancer_from_file(args.enhancer_config)

    per_file = []
    skipped = 0
    for entry in meta.get("files", []):
        clean_path = pairs / entry["clean"]
        noisy_path = pairs / entry["noisy"]
        if not clean_path.is_file() or not noisy_path.is_file():
            skipped += 1
            logger.warning("skipping unpaired entry %s", entry)
            continue
        clean = read_wav(clean_path)
        noisy = read_wav(noisy_path)
        enhanced = enhance(noisy, spec)
        triple = EvalTriple.from_components(clean, noisy, enhanced)
        delta = delta_quality(triple, args.metric)
        per_file.append(
            {
                "noisy": entry["noisy"],
                "target_snr_db": entry.get("target_snr_db"),
                "delta": delta.delta,
            }
        )
    report = {
        "metric": args.metric,
        "enhancer": spec.identifier(),
        "files_evaluated": len(per_file),
        "files_skipped": skipped,
        "mean_delta": (sum(f["delta"] for f in per_file) / len(per_file)) if per_file else None,
        "per_file": per_file,
    }
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote evaluation report to {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hours = evalgen.accepted_hours(args.manifests)
    hist = evalgen.rho_histogram(args.manifests, bin_width_db=args.bin_width)
    report = {
        "accepted_hours": {str(r): h for r, h in hours.items()},
        "rho_histogram": {str(r): counts for r, counts in hist.items()},
    }
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    with (out / "accepted_hours.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round_id", "hours"])
        for rid, h in hours.items():
            writer.writerow([rid, f"{h:.6f}"])
    with (out / "rho_histogram.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round_id", "bin", "count"])
        for rid, counts in hist.items():
            for bin_key, count in sorted(
                counts.items(), key=lambda kv: (kv[0] == "neg_inf", float(kv[0]) if kv[0] != "neg_inf" else 0)
            ):
                writer.writerow([rid, bin_key, count])
    print(f"wrote report.json, accepted_hours.csv, rho_histogram.csv to {out}")
    return EXIT_OK


def cmd_export_ab(args: argparse.Namespace) -> int:
    segments = filter_manifest(args.manifest, min_rho=args.min_rho, max_rho=args.max_rho)
    enhancer = _enhancer_from_file(args.enhancer_config) if args.enhancer_config else None
    pairs = export_ab_pairs(segments, args.out, enhancer=enhancer)
    print(f"exported {pairs} A/B pair(s) to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="speechmine",
        description="Mine high-SNR, full-bandwidth speech segments from audio corpora.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curate", help="run one curation round over a corpus")
    p.add_argument("--config", required=True, help="pipeline config (JSON)")
    p.add_argument("--corpus", required=True, help="glob pattern of input WAV files")
    p.add_argument("--manifest", required=True, help="JSONL manifest to append to")
    p.add_argument("--round", type=int, default=None, help="override the config round_id")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="parallel file workers (default: logical CPUs)")
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("synth", help="generate a synthetic clean/noisy corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, required=True, help="number of pairs")
    p.add_argument("--duration", type=float, default=20.0, help="seconds per file")
    p.add_argument("--sample-rate", type=int, default=48000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-kind", choices=["white", "pink", "babble_proxy"], default="white")
    p.add_argument("--rayleigh-sigma", type=float, default=15.0)
    p.add_argument("--snr-min", type=float, default=0.0)
    p.add_argument("--snr-max", type=float, default=60.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score an enhancer on a clean/noisy pair corpus")
    p.add_argument("--pairs", required=True, help="directory produced by synth")
    p.add_argument("--enhancer-config", required=True, help="JSON enhancer spec")
    p.add_argument("--metric", default="segmental_snr")
    p.add_argument("--out", default=None, help="report path (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="cross-round curated-hours and score histograms")
    p.add_argument("manifests", nargs="+", help="manifest files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--bin-width", type=float, default=5.0)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("export-ab", help="export unprocessed/enhanced segment pairs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--min-rho", type=float, default=None,
                   help="keep segments whose weakest frame reaches this bound")
    p.add_argument("--max-rho", type=float, default=None,
                   help="keep segments whose strongest frame stays at or under this bound")
    p.add_argument("--enhancer-config", default=None,
                   help="override the enhancer recorded in the manifest")
    p.set_defaults(func=cmd_export_ab)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("SECP_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:
        logger.exception("unexpected failure")
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
