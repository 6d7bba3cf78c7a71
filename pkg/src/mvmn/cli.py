"""Command-line entry point: ``mvmn <command> ...``.

Every command that writes files also writes ``<output>.manifest.json`` with
the resolved configuration, seed, input digests, version and wall time.
Exit status is 0 on success, 2 on usage errors and 1 on runtime failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from contextlib import nullcontext
from pathlib import Path

from . import __version__

log = logging.getLogger("mvmn")


def _digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(output: str | Path, command: str, config: dict, seed: int | None,
                   inputs: list[str | Path], started: float) -> Path:
    path = Path(f"{output}.manifest.json")
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {str(p): _digest(p) for p in inputs},
        "version": __version__,
        "duration_seconds": round(time.perf_counter() - started, 3),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _write_json(path: str | Path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _floats(text: str, n: int) -> tuple[float, ...]:
    parts = text.split(",")
    if len(parts) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from None


def save_candidates(path: str | Path, candidates: dict[int, list[int]], dataset, split: str,
                    per_user: int, seed: int) -> None:
    _write_json(path, {
        "split": split,
        "per_user": per_user,
        "seed": seed,
        "dataset_fingerprint": dataset.fingerprint(),
        "candidates": {str(u): c for u, c in sorted(candidates.items())},
    })


def load_candidates(path: str | Path, dataset=None) -> tuple[dict[int, list[int]], str]:
    data = json.loads(Path(path).read_text())
    if dataset is not None and data.get("dataset_fingerprint") not in (None, dataset.fingerprint()):
        raise ValueError(f"{path}: candidates were drawn for a different dataset")
    return {int(u): [int(v) for v in c] for u, c in data["candidates"].items()}, data.get("split", "test")


# -- commands ------------------------------------------------------------------

def cmd_synth(args) -> int:
    from dataclasses import replace

    from .synth import SynthConfig, synth_files

    cfg = SynthConfig.from_json(args.config) if args.config else SynthConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    data = synth_files(cfg, args.out_checkins, args.out_edges)
    inputs = [args.config] if args.config else []
    write_manifest(args.out_checkins, "synth", cfg.to_dict(), cfg.seed, inputs, args.started)
    print(f"{cfg.n_users} users, {len(data.edges)} edges, {len(data.coords)} locations")
    return 0


def cmd_preprocess(args) -> int:
    from .ingestion import PRESETS, ActivityFilter, PreprocessConfig, RegionFilter, preprocess, sample_eval_candidates

    bbox = args.bbox or (PRESETS[args.preset] if args.preset else None)
    region = RegionFilter(*bbox, min_in_region_fraction=args.min_fraction) if bbox else None
    config = PreprocessConfig(region, ActivityFilter(args.min_friends, args.min_checkins), args.kmax, args.seed)
    dataset = preprocess(args.checkins, args.edges, config, args.format)
    dataset.to_jsonl(args.out)
    cand_path = args.candidates_out or str(Path(args.out).with_suffix(".candidates.json"))
    if args.per_user > 0:
        candidates = sample_eval_candidates(dataset, args.per_user, args.seed, "test")
        save_candidates(cand_path, candidates, dataset, "test", args.per_user, args.seed)
    write_manifest(args.out, "preprocess", {**config.to_dict(), "format": args.format,
                                            "per_user": args.per_user}, args.seed,
                   [args.checkins, args.edges], args.started)
    print(f"{dataset.n_users} users, {dataset.n_locations} locations, edges "
          f"{len(dataset.train_edges)}/{len(dataset.val_edges)}/{len(dataset.test_edges)}")
    return 0


def cmd_analyze(args) -> int:
    from .analysis import report
    from .types import Dataset

    dataset = Dataset.from_jsonl(args.data)
    result = report(dataset, args.window_hours, args.mode, args.seed)
    _write_json(args.out, result)
    write_manifest(args.out, "analyze", {"window_hours": args.window_hours, "mode": args.mode},
                   args.seed, [args.data], args.started)
    co = result["cooccurrence"]
    print(f"SR {co['SR']}  STR {co['STR']}")
    return 0


def _model_config(args):
    from .model import ModelConfig

    cfg = ModelConfig(seed=args.seed, beta=args.beta, gat_depth=args.gat_depth, lr=args.lr,
                      epochs=args.epochs, patience=args.patience, batch_size=args.batch_size)
    if args.variant:
        cfg = cfg.with_variant(args.variant)
    if args.disable_view:
        cfg = ModelConfig(**{**cfg.to_dict(), "views": {**cfg.views, **{v: False for v in args.disable_view}}})
    return cfg


def cmd_train(args) -> int:
    from .train import train
    from .types import Dataset

    dataset = Dataset.from_jsonl(args.data)
    config = _model_config(args)
    val = load_candidates(args.val_candidates, dataset)[0] if args.val_candidates else None

    def progress(entry):
        log.info("epoch %d loss %s val_auc %s", entry["epoch"], entry["loss"], entry["val_auc"])

    ckpt = train(dataset, config, val, progress=progress)
    ckpt.meta = {"data": str(Path(args.data).resolve()), "dataset_fingerprint": dataset.fingerprint()}
    ckpt.save(args.out)
    inputs = [args.data] + ([args.val_candidates] if args.val_candidates else [])
    write_manifest(args.out, "train", config.to_dict(), config.seed, inputs, args.started)
    print(f"best epoch {ckpt.epoch} val_auc {ckpt.val_auc}")
    return 0


def _load_for_scoring(checkpoint: str, data: str | None):
    from .train import Checkpoint
    from .types import Dataset

    ckpt = Checkpoint.load(checkpoint)
    data = data or ckpt.meta.get("data")
    if not data:
        raise ValueError("no --data given and the checkpoint records no dataset path")
    dataset = Dataset.from_jsonl(data)
    expected = ckpt.meta.get("dataset_fingerprint")
    if expected and expected != dataset.fingerprint():
        raise ValueError(f"{data} is not the dataset this checkpoint was trained on")
    if (dataset.n_users, dataset.n_locations) != (ckpt.n_users, ckpt.n_locations):
        raise ValueError("dataset vocabulary sizes do not match the checkpoint")
    return ckpt, dataset, data


def cmd_evaluate(args) -> int:
    from .evaluation import evaluate

    ckpt, dataset, data = _load_for_scoring(args.checkpoint, args.data)
    candidates, split = load_candidates(args.candidates, dataset)
    result = evaluate(ckpt.model(), dataset, candidates, k=args.k, split=split)
    _write_json(args.out, result)
    write_manifest(args.out, "evaluate", {"k": args.k, "split": split}, ckpt.config.seed,
                   [args.checkpoint, data, args.candidates], args.started)
    print(f"auc {result['auc']:.4f}  p@{args.k} {result[f'p@{args.k}']:.4f}  r@{args.k} {result[f'r@{args.k}']:.4f}")
    return 0


def cmd_predict(args) -> int:
    ckpt, dataset, _ = _load_for_scoring(args.checkpoint, args.data)
    a, b = args.pair.split(",") if args.pair.count(",") == 1 else (None, None)
    if a is None:
        raise ValueError(f"--pair expects U1,U2, got {args.pair!r}")
    y, _ = ckpt.model().score_pair(dataset, dataset.user_index(a.strip()), dataset.user_index(b.strip()))
    print(f"{y:.6f}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import gradcheck

    worst: dict[str, float] = {}
    for seed in range(args.seed, args.seed + args.seeds):
        for name, err in gradcheck(seed, h=args.h).items():
            worst[name] = max(worst.get(name, 0.0), err)
    for name, err in worst.items():
        print(f"{name:12s} {err:.2e}")
    ok = max(worst.values()) < args.tol
    print(f"max relative error {max(worst.values()):.2e} ({'ok' if ok else 'FAIL'}, tolerance {args.tol:g})")
    return 0 if ok else 1


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from .ingestion import FORMATS, PRESETS
    from .model import VARIANTS, VIEWS

    # accepted before or after the command name
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="cap BLAS threads")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="mvmn", parents=[common],
                                description="Multi-view social link inference from check-in data.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.set_defaults(threads=None, verbose=False)
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    _add = sub.add_parser
    sub.add_parser = lambda *a, **kw: _add(*a, parents=[common], **kw)

    s = sub.add_parser("synth", help="generate a synthetic network in raw format")
    s.add_argument("--config", help="JSON file of generator settings")
    s.add_argument("--out-checkins", required=True)
    s.add_argument("--out-edges", required=True)
    s.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="filter, index and split raw data")
    s.add_argument("--checkins", required=True)
    s.add_argument("--edges", required=True)
    s.add_argument("--format", choices=FORMATS, default="gowalla_tsv")
    box = s.add_mutually_exclusive_group()
    box.add_argument("--bbox", type=lambda t: _floats(t, 4), help="latmin,latmax,lonmin,lonmax")
    box.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--min-fraction", type=float, default=0.1)
    s.add_argument("--min-friends", type=int, default=1)
    s.add_argument("--min-checkins", type=int, default=10)
    s.add_argument("--kmax", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--per-user", type=int, default=50, help="negatives per test user (0: no candidates)")
    s.add_argument("--candidates-out", help="default: <out> with suffix .candidates.json")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("analyze", help="co-occurrence ratios and temporal similarities")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--window-hours", type=float, default=1.0)
    s.add_argument("--mode", choices=("bucket", "sliding"), default="bucket")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("train", help="train a model and write the best checkpoint")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--beta", type=float, default=0.1)
    s.add_argument("--gat-depth", type=int, default=2)
    s.add_argument("--disable-view", action="append", choices=VIEWS, default=[])
    s.add_argument("--variant", choices=sorted(VARIANTS))
    s.add_argument("--lr", type=float, default=1e-4)
    s.add_argument("--epochs", type=int, default=50)
    s.add_argument("--patience", type=int, default=10)
    s.add_argument("--batch-size", type=int, default=64)
    s.add_argument("--val-candidates", help="validation pools; sampled from the data if omitted")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="ranking metrics on candidate pools")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", help="default: the dataset recorded in the checkpoint")
    s.add_argument("--candidates", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--k", type=int, default=10)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("predict", help="print the link probability of one pair")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", help="default: the dataset recorded in the checkpoint")
    s.add_argument("--pair", required=True, help="raw user ids U1,U2")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("gradcheck", help="finite-difference check of every parameter gradient")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--seeds", type=int, default=5)
    s.add_argument("--h", type=float, default=1e-5)
    s.add_argument("--tol", type=float, default=1e-4)
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.started = time.perf_counter()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be positive")
    if args.threads:
        from threadpoolctl import threadpool_limits

        limits = threadpool_limits(args.threads)
    else:
        limits = nullcontext()
    try:
        with limits:
            return args.func(args)
    except (OSError, ValueError, KeyError, FloatingPointError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"mvmn {args.command}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
