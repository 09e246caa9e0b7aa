"""Operator entry points.

    sppnet train         --config run.yaml [--seed N] [--output DIR]
    sppnet eval          --config run.yaml --checkpoint ckpt.sppn [--fps] [--overlays]
    sppnet stability     --config run.yaml --checkpoint ckpt.sppn [--iterations N]
    sppnet sample-points --config run.yaml --image-id ID [--n N]
    sppnet info          --config run.yaml
    sppnet ablate        --config run.yaml

Every command is deterministic given (config, seed) and writes only under the
output directory. Exit code 0 means all requested artifacts were written.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from sppnet import evaluation
from sppnet.checkpoint import load_model, save_checkpoint
from sppnet.data_io import RunConfig, compute_channel_stats, load_dataset, load_run_config
from sppnet.errors import DataError, SPPNetError
from sppnet.network.blocks import BLOCK_KINDS
from sppnet.network.model import build_sppnet
from sppnet.predictor import Predictor
from sppnet.prompt_sampling import (
    InstanceLabelMap,
    SamplerConfig,
    sample_prompt_pair,
)
from sppnet.training import split_dataset, train_loop
from sppnet.visualize import overlay_boundary, overlay_points, save_png

SAMPLING_MODES = ("cnps", "center-only")


def sampler_for_mode(cfg: SamplerConfig, mode: str) -> SamplerConfig:
    """center-only collapses the neighbor window so the exact center is used."""
    if mode == "cnps":
        return cfg
    if mode == "center-only":
        return dataclasses.replace(cfg, k=0)
    raise SPPNetError(f"unknown sampling mode {mode!r}")


def _load_splits(run: RunConfig):
    samples = load_dataset(run.dataset_root)
    by_id = {s.id: s for s in samples}
    train_ids, val_ids, test_ids = split_dataset(
        [s.id for s in samples], run.train.split, run.train.seed
    )
    pick = lambda ids: [by_id[i] for i in ids]  # noqa: E731
    return samples, pick(train_ids), pick(val_ids), pick(test_ids)


def _apply_overrides(run: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        run = dataclasses.replace(
            run,
            train=dataclasses.replace(run.train, seed=args.seed),
            sampler=dataclasses.replace(run.sampler, rng_seed=args.seed),
        )
    if args.output is not None:
        run = dataclasses.replace(run, output_dir=Path(args.output).resolve())
    return run


def _out_dir(run: RunConfig) -> Path:
    run.output_dir.mkdir(parents=True, exist_ok=True)
    return run.output_dir


def cmd_train(run: RunConfig) -> int:
    _, train_samples, val_samples, test_samples = _load_splits(run)
    model = build_sppnet(run.model, seed=run.train.seed)
    result = train_loop(model, train_samples, val_samples, run.train, run.model,
                        run.sampler)
    out = _out_dir(run)
    save_checkpoint(out / "checkpoint.sppn", run.model, result.best_state)
    with open(out / "train_log.jsonl", "w") as fh:
        for rec in result.records:
            fh.write(json.dumps(dataclasses.asdict(rec)) + "\n")
    with open(out / "split.json", "w") as fh:
        json.dump({
            "train": [s.id for s in train_samples],
            "val": [s.id for s in val_samples],
            "test": [s.id for s in test_samples],
        }, fh, indent=2)
    print(f"best val DSC {result.best_val_dsc:.4f} after {len(result.records)} epochs"
          f"{' (early stop)' if result.stopped_early else ''}")
    print(f"wrote {out / 'checkpoint.sppn'}")
    return 0


def _restore_predictor(run: RunConfig, checkpoint_path):
    if checkpoint_path is None:
        raise SPPNetError("this command needs --checkpoint")
    model, config = load_model(checkpoint_path)
    _, train_samples, _, test_samples = _load_splits(run)
    if not test_samples:
        raise DataError("test split is empty")
    stats = compute_channel_stats(train_samples)
    return Predictor(model, config, stats), test_samples


def cmd_eval(run: RunConfig, args) -> int:
    predictor, test_samples = _restore_predictor(run, args.checkpoint)
    report = evaluation.evaluate(predictor, test_samples, run.sampler,
                                 seed=run.sampler.rng_seed)
    if args.fps:
        report.fps = evaluation.fps_benchmark(predictor.model)
    out = _out_dir(run)
    (out / "eval_report.json").write_text(report.to_json() + "\n")
    if args.overlays:
        for i, sample in enumerate(test_samples):
            rng = np.random.default_rng([run.sampler.rng_seed, i])
            prompts = sample_prompt_pair(InstanceLabelMap(sample.instances),
                                         run.sampler, rng)
            pred = predictor.predict(sample, prompts)
            img = overlay_points(overlay_boundary(sample.image, pred), prompts)
            save_png(img, out / f"overlay_{sample.id}.png")
    print(f"mIoU {report.miou_mean:.4f} +/- {report.miou_std:.4f}  "
          f"DSC {report.dsc_mean:.4f} +/- {report.dsc_std:.4f}")
    print(f"wrote {out / 'eval_report.json'}")
    return 0


def cmd_stability(run: RunConfig, args) -> int:
    predictor, test_samples = _restore_predictor(run, args.checkpoint)
    report = evaluation.stability_eval(predictor, test_samples, run.sampler,
                                       iterations=args.iterations,
                                       base_seed=run.sampler.rng_seed)
    out = _out_dir(run)
    (out / "stability_report.json").write_text(report.to_json() + "\n")
    print(f"DSC over {report.iterations} iterations: "
          f"min {report.min:.6f} max {report.max:.6f} "
          f"mean {report.mean:.6f} std {report.std:.6f}")
    print(f"wrote {out / 'stability_report.json'}")
    return 0


def cmd_sample_points(run: RunConfig, args) -> int:
    samples = load_dataset(run.dataset_root)
    matches = [s for s in samples if s.id == args.image_id]
    if not matches:
        raise DataError(f"no sample with id {args.image_id!r}")
    sample = matches[0]
    mask = InstanceLabelMap(sample.instances)
    rng = np.random.default_rng(run.sampler.rng_seed)
    pairs = [sample_prompt_pair(mask, run.sampler, rng) for _ in range(args.n)]
    points = [p for pair in pairs for p in pair]
    out = _out_dir(run)
    with open(out / f"points_{sample.id}.jsonl", "w") as fh:
        for p in points:
            fh.write(json.dumps({
                "x": p.x, "y": p.y, "label": p.label, "instance_id": p.instance_id,
            }) + "\n")
    overlay = overlay_points(overlay_boundary(sample.image, sample.instances > 0),
                             points)
    save_png(overlay, out / f"points_{sample.id}.png")
    print(f"wrote {out / f'points_{sample.id}.jsonl'} and overlay")
    return 0


def _info_rows(run: RunConfig, block_kind: str):
    config = dataclasses.replace(run.model, block_kind=block_kind)
    model = build_sppnet(config, seed=run.train.seed)
    return evaluation.profile_model(model, config)


def cmd_info(run: RunConfig) -> int:
    rows = _info_rows(run, run.model.block_kind)
    out = _out_dir(run)
    lines = [f"{'component':<24}{'params':>12}{'flops':>16}"]
    for row in rows:
        lines.append(f"{row.name:<24}{row.params:>12}{row.flops:>16}")
    lines.append(f"{'total':<24}{sum(r.params for r in rows):>12}"
                 f"{sum(r.flops for r in rows):>16}")
    text = "\n".join(lines)
    (out / "model_info.txt").write_text(text + "\n")
    print(text)
    return 0


def cmd_ablate(run: RunConfig) -> int:
    rows = []
    for kind in BLOCK_KINDS:
        profile = _info_rows(run, kind)
        params = sum(r.params for r in profile)
        flops = sum(r.flops for r in profile)
        for mode in SAMPLING_MODES:
            sampler = sampler_for_mode(run.sampler, mode)
            rows.append({
                "block_kind": kind,
                "sampling": mode,
                "sampler_k": sampler.k,
                "params": params,
                "flops": flops,
            })
    out = _out_dir(run)
    (out / "ablation.json").write_text(json.dumps(rows, indent=2) + "\n")
    header = f"{'block':<12}{'sampling':<14}{'k':>3}{'params':>12}{'flops':>16}"
    print(header)
    for r in rows:
        print(f"{r['block_kind']:<12}{r['sampling']:<14}{r['sampler_k']:>3}"
              f"{r['params']:>12}{r['flops']:>16}")
    print(f"wrote {out / 'ablation.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sppnet",
        description="Single-point-prompt nuclei segmentation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="run config YAML")
        p.add_argument("--seed", type=int, default=None,
                       help="override training and sampling seeds")
        p.add_argument("--output", default=None, help="override output directory")

    p_train = sub.add_parser("train", help="train and write checkpoint + log")
    add_common(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    add_common(p_eval)
    p_eval.add_argument("--checkpoint", default=None)
    p_eval.add_argument("--fps", action="store_true",
                        help="also measure frames/second (non-deterministic field)")
    p_eval.add_argument("--overlays", action="store_true",
                        help="write per-image prediction overlays")

    p_stab = sub.add_parser("stability", help="repeated evaluation with fresh prompts")
    add_common(p_stab)
    p_stab.add_argument("--checkpoint", default=None)
    p_stab.add_argument("--iterations", type=int, default=500)

    p_pts = sub.add_parser("sample-points", help="draw prompt pairs for one image")
    add_common(p_pts)
    p_pts.add_argument("--image-id", required=True)
    p_pts.add_argument("--n", type=int, default=1, help="number of prompt pairs")

    p_info = sub.add_parser("info", help="parameter and FLOPs table per component")
    add_common(p_info)

    p_abl = sub.add_parser("ablate", help="accounting across block and sampling variants")
    add_common(p_abl)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = _apply_overrides(load_run_config(args.config), args)
        if args.command == "train":
            return cmd_train(run)
        if args.command == "eval":
            return cmd_eval(run, args)
        if args.command == "stability":
            return cmd_stability(run, args)
        if args.command == "sample-points":
            return cmd_sample_points(run, args)
        if args.command == "info":
            return cmd_info(run)
        if args.command == "ablate":
            return cmd_ablate(run)
        raise SPPNetError(f"unknown command {args.command!r}")
    except SPPNetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
