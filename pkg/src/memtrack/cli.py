"""Command-line entry points: ``synth``, ``train``, ``propagate``, ``eval``.

Every command writes ``manifest.json`` next to its outputs with the resolved
configuration, enough to replay the run.
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import asdict

import numpy as np
import torch
from PIL import Image as PILImage

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .colorspace import as_space
from .config import RunConfig, load_config, parse_kv
from .data import (FRAME_DIR, MASK_DIR, CorpusSpec, generate_corpus, list_frames, list_sequences,
                   load_dataset, load_sequence, read_mask, write_corpus, write_masks)
from .memory import get_policy
from .metrics import score_sequence, write_scores_csv, write_summary_json
from .propagation import PropagationConfig, propagate_sequence
from .train import Trainer, write_loss_csv

log = logging.getLogger("memtrack")


class CLIError(Exception):
    pass


def _overrides(pairs):
    out = {}
    for p in pairs or []:
        if "=" not in p:
            raise CLIError(f"--set expects key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _run_config(args) -> RunConfig:
    ov = _overrides(getattr(args, "set", None))
    if args.seed is not None:
        ov["seed"] = str(args.seed)
    return load_config(args.config, ov)


def _prepare_out(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise CLIError(f"cannot create output directory {path}: {e.strerror}") from None
    if not os.access(path, os.W_OK):
        raise CLIError(f"output directory {path} is not writable")


def _write_manifest(out, command, payload):
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump({"command": command, "version": __version__, **payload}, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- commands

def cmd_synth(args):
    d = {}
    if args.config:
        with open(args.config) as fh:
            d = parse_kv(fh.read())
    d.update(_overrides(args.set))
    if args.seed is not None:
        d["seed"] = args.seed
    types = {k: type(v) for k, v in asdict(CorpusSpec()).items()}
    unknown = set(d) - set(types)
    if unknown:
        raise CLIError(f"unknown synth keys: {sorted(unknown)}")
    spec = CorpusSpec(**{k: types[k](v) for k, v in d.items()})
    if spec.num_sequences < 1:
        raise CLIError("num_sequences must be >= 1")
    _prepare_out(args.out)
    write_corpus(args.out, generate_corpus(spec))
    _write_manifest(args.out, "synth", {"spec": asdict(spec)})
    log.info("wrote %d sequences to %s", spec.num_sequences, args.out)


def cmd_train(args):
    cfg = _run_config(args)
    if not os.path.isdir(os.path.join(args.data, FRAME_DIR)):
        raise CLIError(f"no training data under {args.data}")
    _prepare_out(args.out)
    data = load_dataset(args.data, cfg.image_size, with_masks=False)
    sequences = [frames for frames, _ in data.values()]
    trainer = Trainer(cfg)
    meta = {"colorspace": cfg.colorspace, "run": cfg.to_dict()}

    def on_phase_end(rec):
        if rec is None:
            save_checkpoint(os.path.join(args.out, "checkpoint_phase1.bin"), trainer.model, trainer.enc_cfg, meta)

    result = trainer.fit(sequences, callback=on_phase_end)
    save_checkpoint(os.path.join(args.out, "checkpoint.bin"), result.model, result.encoder_config, meta)
    write_loss_csv(result.losses, os.path.join(args.out, "loss.csv"))
    _write_manifest(args.out, "train", {"config": cfg.to_dict(), "data": os.path.abspath(args.data),
                                        "sequences": sorted(data)})


def _prop_config(cfg: RunConfig, meta) -> PropagationConfig:
    return PropagationConfig(mode=cfg.mode, policy=get_policy(cfg.policy), radius=cfg.radius,
                             colorspace=as_space(meta.get("colorspace", cfg.colorspace)), backend=cfg.backend)


def _propagate_one(model, pcfg, cfg, frame_dir, mask0_path, out_dir):
    if not os.path.isfile(mask0_path):
        raise CLIError(f"mask0 not found: {mask0_path}")
    names = list_frames(frame_dir)
    native = PILImage.open(os.path.join(frame_dir, names[0])).size
    _, frames, _ = load_sequence(frame_dir, None, cfg.image_size)
    mask0 = read_mask(mask0_path, cfg.image_size)
    result = propagate_sequence(frames, mask0, model, pcfg)
    masks = result.masks
    if cfg.image_size is not None and native != (cfg.image_size, cfg.image_size):
        masks = [np.asarray(PILImage.fromarray(m).resize(native, PILImage.NEAREST)) for m in masks]
    write_masks(out_dir, masks, names)


def cmd_propagate(args):
    cfg = _run_config(args)
    if not os.path.isfile(args.checkpoint):
        raise CLIError(f"checkpoint not found: {args.checkpoint}")
    model, _, meta = load_checkpoint(args.checkpoint)
    pcfg = _prop_config(cfg, meta)
    _prepare_out(args.out)
    torch.manual_seed(cfg.seed)
    if args.dataset:
        seqs = list_sequences(args.dataset)
        for name in seqs:
            fdir = os.path.join(args.dataset, FRAME_DIR, name)
            first = os.path.splitext(list_frames(fdir)[0])[0] + ".png"
            _propagate_one(model, pcfg, cfg, fdir, os.path.join(args.dataset, MASK_DIR, name, first),
                           os.path.join(args.out, name))
    else:
        if not args.frames or not args.mask0:
            raise CLIError("propagate needs --dataset, or --frames with --mask0")
        seqs = [os.path.basename(os.path.normpath(args.frames))]
        _propagate_one(model, pcfg, cfg, args.frames, args.mask0, args.out)
    _write_manifest(args.out, "propagate", {"config": cfg.to_dict(), "checkpoint": os.path.abspath(args.checkpoint),
                                            "sequences": seqs})


def _mask_seqs(root):
    ann = os.path.join(root, MASK_DIR)
    base = ann if os.path.isdir(ann) else root
    if not os.path.isdir(base):
        raise CLIError(f"directory not found: {root}")
    return base, sorted(n for n in os.listdir(base) if os.path.isdir(os.path.join(base, n)))


def cmd_eval(args):
    pbase, pseqs = _mask_seqs(args.pred)
    gbase, gseqs = _mask_seqs(args.gt)
    if set(pseqs) != set(gseqs):
        raise CLIError(f"unmatched sequences: pred-only {sorted(set(pseqs) - set(gseqs))}, "
                       f"gt-only {sorted(set(gseqs) - set(pseqs))}")
    split = None
    if args.split:
        with open(args.split) as fh:
            split = json.load(fh)
        bad = {v for v in split.values()} - {"seen", "unseen"}
        if bad:
            raise CLIError(f"split values must be 'seen' or 'unseen', got {sorted(bad)}")
    _prepare_out(args.out)
    scores = []
    for name in gseqs:
        gnames = list_frames(os.path.join(gbase, name))
        pnames = list_frames(os.path.join(pbase, name))
        if gnames != pnames:
            raise CLIError(f"{name}: predicted and ground-truth frame names differ")
        gts = [read_mask(os.path.join(gbase, name, n)) for n in gnames]
        preds = [read_mask(os.path.join(pbase, name, n)) for n in pnames]
        scores += score_sequence(name, preds, gts, tolerance_px=args.tolerance)
    write_scores_csv(scores, os.path.join(args.out, "scores.csv"))
    summary = write_summary_json(scores, os.path.join(args.out, "summary.json"), split)
    _write_manifest(args.out, "eval", {"pred": os.path.abspath(args.pred), "gt": os.path.abspath(args.gt),
                                       "split": args.split, "tolerance": args.tolerance})
    log.info("J %.4f F %.4f", summary["overall"]["J"], summary["overall"]["F"])


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="memtrack", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=True, help=out_help)
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    s = sub.add_parser("synth", parents=[shared], help="generate a synthetic moving-shapes dataset")
    common(s, "dataset directory")
    s.add_argument("--spec", dest="config", help="alias for --config")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", parents=[shared], help="two-phase self-supervised training")
    common(t, "run directory (checkpoints, loss.csv)")
    t.add_argument("--data", required=True, help="dataset root with JPEGImages/")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("propagate", parents=[shared], help="propagate first-frame masks")
    common(pr, "mask output directory")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--dataset", help="dataset root; propagates every sequence")
    pr.add_argument("--frames", help="single sequence frame directory")
    pr.add_argument("--mask0", help="first-frame label image for --frames")
    pr.set_defaults(func=cmd_propagate)

    e = sub.add_parser("eval", parents=[shared], help="J/F scores and generalization gap")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--split", help="JSON mapping sequence -> seen|unseen")
    e.add_argument("--tolerance", type=float, help="boundary tolerance in px (default 0.8%% of the diagonal)")
    e.add_argument("--out", required=True)
    e.add_argument("--config", help=argparse.SUPPRESS)
    e.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CLIError, ValueError, FileNotFoundError, OSError) as e:
        print(f"memtrack {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
