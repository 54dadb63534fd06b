"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration, shape
mismatch or bad usage.  Logs go to stderr; results go to files (--out)
or stdout.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import io as fio
from .benchmarks import compare_variants, generate_mc_task, generate_synthetic_frames
from .config import parse_override, read_config_file, split_config
from .errors import ConfigError, ESNError
from .features import extract_features
from .pipeline import (
    DatasetManifest,
    ManifestEntry,
    TrainedModel,
    TrialResult,
    evaluate,
    grid_search,
    load_manifest,
    load_split,
    result_row,
    run_trials,
    split_by_speaker,
    train_model,
    write_manifest,
    write_results_csv,
)
from .spectral import spectral_radius

log = logging.getLogger("hetero_esn")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _load_settings(args):
    flat = read_config_file(args.config) if args.config else {}
    for item in args.set or ():
        key, value = parse_override(item)
        flat[key] = value
    if args.seed is not None:
        flat["run.master_seed"] = args.seed
    return split_config(flat)


def _manifest(data: dict, override=None) -> DatasetManifest:
    path = override or data.get("data.manifest")
    if not path:
        raise ConfigError("no manifest given (use --manifest or data.manifest)")
    manifest = load_manifest(path)
    if "data.train_n" in data:
        manifest = split_by_speaker(
            manifest,
            int(data["data.train_n"]),
            int(data.get("data.test_n", 0)),
            float(data.get("data.val_fraction", 0.2)),
            int(data.get("data.split_seed", 0)),
        )
    return manifest


def _summary(rate: float) -> None:
    print(f"mean_frame_rate={rate:.4f}%")


# -- extract ----------------------------------------------------------------------------

def _extract_one(job):
    uid, src, dst, cfg = job
    try:
        feats = extract_features(fio.read_wav(src), cfg.feature_config())
        fio.write_features(dst, feats)
        return uid, feats.shape[0], None
    except (ESNError, OSError) as exc:
        return uid, 0, f"{src}: {exc}"


def cmd_extract(args) -> int:
    cfg, _, _ = _load_settings(args)
    src = Path(args.input)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if src.is_dir():
        entries = []
        for wav in sorted(src.glob("*.wav")):
            lab = wav.with_suffix(".lab")
            entries.append(ManifestEntry(wav.stem, wav, lab, wav.stem))
    else:
        entries = load_manifest(src, check_files=False).entries
    jobs = [(e.utterance_id, e.path, out / f"{e.utterance_id}.feat", cfg) for e in entries]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_extract_one, jobs))
    else:
        results = [_extract_one(j) for j in jobs]

    kept, failed = [], 0
    for entry, (uid, n_frames, error) in zip(entries, results):
        if error:
            failed += 1
            log.error("extract failed for %s", error)
            continue
        log.info("%s: %d frames", uid, n_frames)
        if entry.label_path.is_file():
            n_labels = fio.read_labels(entry.label_path).size
            if n_labels != n_frames:
                log.warning("%s: %d labels for %d frames", uid, n_labels, n_frames)
            kept.append(replace(entry, path=out / f"{uid}.feat"))
    write_manifest(DatasetManifest(kept, out), out / "manifest.tsv")
    print(f"extracted={len(entries) - failed} failed={failed}")
    return 1 if failed else 0


# -- train / eval ---------------------------------------------------------------------------

def _rate_on(model: TrainedModel, utterances) -> float:
    return evaluate(model, utterances).rate


def cmd_train(args) -> int:
    cfg, data, _ = _load_settings(args)
    manifest = _manifest(data, args.manifest)
    train_set = load_split(manifest, "train", cfg)
    model = train_model(cfg, train_set, cfg.master_seed)
    out = Path(args.out or "model.esnm")
    fio.save_model(out, model.reservoir, model.readout, context_width=model.context_width,
                   context_center=model.context_center, washout=model.washout)
    log.info("wrote %s (%d trainable parameters)", out, model.n_params)
    _summary(_rate_on(model, train_set))
    return 0


def _load_trained(path) -> TrainedModel:
    reservoir, readout, meta = fio.load_model(path)
    if readout is None:
        raise ConfigError(f"{path} holds an untrained model")
    return TrainedModel(reservoir, readout, meta["context_width"], meta["context_center"], meta["washout"])


def cmd_eval(args) -> int:
    cfg, data, _ = _load_settings(args)
    model = _load_trained(args.model)
    manifest = _manifest(data, args.manifest)
    test_set = load_split(manifest, args.split, cfg)
    rate = evaluate(model, test_set).rate
    trial = TrialResult.from_rates([cfg.master_seed], [rate], None, model.n_params)
    write_results_csv(args.out or "results.csv", [result_row(cfg, trial)])
    _summary(rate)
    return 0


def cmd_grid(args) -> int:
    cfg, data, axes = _load_settings(args)
    if not axes:
        raise ConfigError("grid needs at least one grid.<key> = [values] axis")
    manifest = _manifest(data, args.manifest)
    train_set = load_split(manifest, "train", cfg)
    val_set = load_split(manifest, "val", cfg)
    rows = grid_search(cfg, axes, train_set, val_set, jobs=args.jobs)
    write_results_csv(args.out or "grid.csv", rows)
    best = rows[0]
    if best["error"]:
        log.error("every grid point failed")
        return 1
    _summary(float(best["mean"]))
    return 0


# -- benchmarks ----------------------------------------------------------------------------

def cmd_bench_mc(args) -> int:
    cfg, _, _ = _load_settings(args)
    hetero = cfg.replace(variant="hetero_shallow", size=args.size, delays=tuple(args.delays), group_sizes=())
    homog = cfg.replace(variant="shallow", size=args.size, delays=(), group_sizes=())
    task = generate_mc_task(args.length, args.max_lag, cfg.master_seed)
    if not 1 <= len(args.lag_window) <= 2:
        raise ConfigError("--lag-window takes LO or LO,HI")
    lo, hi = args.lag_window[0], (args.lag_window + [args.max_lag])[1]
    if not 1 <= lo <= hi <= args.max_lag:
        raise ConfigError(f"lag window {lo}..{hi} must lie within 1..{args.max_lag}")
    report = compare_variants(task, {"homogeneous": homog, "heterogeneous": hetero},
                              cfg.n_seeds, cfg.master_seed, (lo, hi))
    write_results_csv(args.out or "bench_mc.csv", report.rows())
    for name, mean in report.means.items():
        print(f"{name}: mean_mc={mean:.4f} wins={report.wins[name]}")
    return 0


def cmd_bench_synth(args) -> int:
    cfg, _, _ = _load_settings(args)
    task = generate_synthetic_frames(args.classes, args.frames_per_class, args.task_seed)
    cfg = cfg.replace(n_classes=args.classes)
    train_set, test_set = task.split_frames(args.n_train)
    trial = run_trials(cfg, train_set, test_set)
    write_results_csv(args.out or "bench_synth.csv", [result_row(cfg, trial)])
    _summary(trial.mean)
    return 0


# -- inspect ----------------------------------------------------------------------------------

def cmd_inspect(args) -> int:
    path = Path(args.path)
    head = path.read_bytes()[:4]
    if head == fio.FEAT_MAGIC:
        X = fio.read_features(path)
        print(f"FEAT1 frames={X.shape[0]} features={X.shape[1]}")
        print(f"mean={X.mean():.6g} std={X.std():.6g} min={X.min():.6g} max={X.max():.6g}")
    elif head == fio.MODEL_MAGIC:
        model, readout, meta = fio.load_model(path)
        print(f"ESNM1 variant={model.variant} n_in={model.n_in} layers={len(model.layers)} "
              f"state_dim={model.state_dim}")
        for i, layer in enumerate(model.layers, 1):
            c = layer.config
            print(f"  layer {i}: size={c.size} rho={c.spectral_radius} "
                  f"measured_rho={spectral_radius(layer.weights.W):.9f} leak={c.leak_rate} "
                  f"delay={c.delay} nnz={layer.weights.W.nnz}")
        if model.partition is not None:
            print(f"  groups={list(model.partition.group_sizes)} delays={list(model.partition.group_delays)}")
        print(f"  context_width={meta['context_width']} center={meta['context_center']} washout={meta['washout']}")
        if readout is None:
            print("  readout: none")
        else:
            print(f"  readout: {readout.n_classes} x {readout.z_dim} ({readout.W_out.size} parameters)")
            if args.out:
                readout.to_csv(args.out)
    else:
        manifest = load_manifest(path, check_files=False)
        counts = {}
        for e in manifest.entries:
            counts[e.split or "-"] = counts.get(e.split or "-", 0) + 1
        print(f"manifest entries={len(manifest)} speakers={len(manifest.speakers())} "
              + " ".join(f"{k}={v}" for k, v in sorted(counts.items())))
    return 0


# -- parser --------------------------------------------------------------------------------------

def _delays(text: str):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", metavar="PATH", help="dotted-key config file")
    shared.add_argument("--set", metavar="KEY=VALUE", action="append", help="override a config key")
    shared.add_argument("--seed", type=int, help="master seed (overrides run.master_seed)")
    shared.add_argument("--out", metavar="PATH", help="output file or directory")
    shared.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    shared.add_argument("--log-level", choices=list(LOG_LEVELS), default="warn")

    parser = argparse.ArgumentParser(prog="hetero-esn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", parents=[shared], help="WAV -> FEAT1 features")
    p.add_argument("--in", dest="input", required=True, help="audio directory or manifest")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[shared], help="train one model, write ESNM1")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[shared], help="score a trained model, write results CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest")
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", parents=[shared], help="seed-averaged grid search on the validation split")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("bench-mc", parents=[shared], help="memory capacity: heterogeneous vs homogeneous")
    p.add_argument("--size", type=int, default=300)
    p.add_argument("--delays", type=_delays, default=[0, 2, 4])
    p.add_argument("--length", type=int, default=4000)
    p.add_argument("--max-lag", type=int, default=10)
    p.add_argument("--lag-window", type=_delays, default=[3], help="LO or LO,HI (default 3..max-lag)")
    p.set_defaults(func=cmd_bench_mc)

    p = sub.add_parser("bench-synth", parents=[shared], help="synthetic frame classification trials")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--frames-per-class", type=int, default=1000)
    p.add_argument("--n-train", type=int, default=4000)
    p.add_argument("--task-seed", type=int, default=0)
    p.set_defaults(func=cmd_bench_synth)

    p = sub.add_parser("inspect", parents=[shared], help="describe a FEAT1, ESNM1 or manifest file")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=LOG_LEVELS[args.log_level],
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return 2
    except (ESNError, OSError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
