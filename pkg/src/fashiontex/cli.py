"""Command-line entry points: invert, edit, train, eval, serve.

Every command reads one YAML config (--config, else $FASHIONTEX_CONFIG, else
defaults) and is deterministic under (config, seed) with toy backbones.
Exit codes: 0 success, 1 user error, 2 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import torch

from .backbones import BackboneError, load_backbones
from .confutil import ConfigError
from .config import Config, dump_config, load_config, train_config
from .evaluation import EvaluationError, evaluate
from .imaging import ImageDecodeError, load_image_file, save_image_file
from .latent import LatentError, load_latent, save_latent
from .losses import LossInputError
from .mapper import (ConditionError, EditCondition, PromptFormatError, edit,
                     load_mapper, split_text)
from .recovery import recover
from .training import (DatasetError, ingest_dataset, new_mapper, train)

log = logging.getLogger(__name__)

USER_ERRORS = (
    ConfigError,
    DatasetError,
    ImageDecodeError,
    PromptFormatError,
    ConditionError,
    LossInputError,
    EvaluationError,
    LatentError,
    BackboneError,
    FileNotFoundError,
    NotADirectoryError,
    ValueError,
)


class _Parser(argparse.ArgumentParser):
    # Flag misuse is a user error (exit 1), not an internal one.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config path (else $FASHIONTEX_CONFIG)")
    common.add_argument("--print-config", action="store_true",
                        help="print the effective config and exit")

    parser = _Parser(prog="fashiontex", description=__doc__, parents=[common])
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("invert", parents=[common],
                       help="image -> latent file (optionally a reconstruction preview)")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True, help="latent file to write")
    p.add_argument("--preview", help="write generate(invert(image)) here")

    p = sub.add_parser("edit", parents=[common],
                       help="apply a text/texture edit to a portrait or latent")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--image")
    src.add_argument("--latent")
    p.add_argument("--text", help='full prompt "<upper>, <lower>"')
    p.add_argument("--patch-upper", help="texture patch image for the upper garment")
    p.add_argument("--patch-lower", help="texture patch image for the lower garment")
    p.add_argument("--checkpoint", help="mapper checkpoint (freshly initialized mapper if absent)")
    p.add_argument("--recover", action="store_true",
                   help="also run identity recovery and write the recovered image")
    p.add_argument("--out", required=True, help="edited image path")

    p = sub.add_parser("train", parents=[common], help="train the editing mapper")
    p.add_argument("--resume", help="checkpoint to resume from")

    p = sub.add_parser("eval", parents=[common], help="run the metric suite")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="write the report here (stdout always)")
    p.add_argument("--csv", help="write one row per evaluated sample here")

    sub.add_parser("serve", parents=[common], help="run the HTTP service")
    return parser


def cmd_invert(args, cfg: Config) -> int:
    backbones = load_backbones(cfg.backbones)
    img = load_image_file(args.image)
    latent = backbones.inverter.invert(img)
    save_latent(latent, args.out)
    print(f"wrote {args.out}")
    if args.preview:
        with torch.no_grad():
            save_image_file(backbones.generator.generate(latent), args.preview)
        print(f"wrote {args.preview}")
    return 0


def cmd_edit(args, cfg: Config) -> int:
    backbones = load_backbones(cfg.backbones)
    if args.latent:
        w = load_latent(args.latent, bounds=backbones.generator.bounds)
    else:
        w = backbones.inverter.invert(load_image_file(args.image))

    text_upper = text_lower = None
    if args.text is not None:
        text_upper, text_lower = split_text(args.text)
    cond = EditCondition(
        text_upper=text_upper,
        text_lower=text_lower,
        patch_upper=load_image_file(args.patch_upper) if args.patch_upper else None,
        patch_lower=load_image_file(args.patch_lower) if args.patch_lower else None,
    )

    if args.checkpoint:
        mapper = load_mapper(args.checkpoint)
    else:
        log.info("no checkpoint given; using a freshly initialized mapper")
        mapper = new_mapper(train_config(cfg), backbones)
    mapper.eval()

    with torch.no_grad():
        w_edit, i_e = edit(w, cond, mapper, backbones)
    out = Path(args.out)
    save_image_file(i_e, out)
    latent_out = out.with_suffix(".wplatent")
    save_latent(w_edit, latent_out)
    print(f"wrote {out}")
    print(f"wrote {latent_out}")
    if args.recover:
        if args.image:
            i_i = load_image_file(args.image)
        else:
            with torch.no_grad():
                i_i = backbones.generator.generate(w)
        i_o, _ = recover(w_edit, i_i, i_e, backbones, cfg.recovery)
        recovered_out = out.with_name(out.stem + ".recovered" + out.suffix)
        save_image_file(i_o, recovered_out)
        print(f"wrote {recovered_out}")
    return 0


def _dataset_index(cfg: Config, backbones):
    if not cfg.training.data_dir:
        raise ConfigError("config: training.data_dir must point at a dataset directory")
    return ingest_dataset(cfg.training.data_dir, backbones, seed=cfg.training.seed)


def cmd_train(args, cfg: Config) -> int:
    tc = train_config(cfg)
    backbones = load_backbones(cfg.backbones)
    index = _dataset_index(cfg, backbones)
    result = train(tc, index, backbones, resume=args.resume)
    print(f"trained to step {tc.steps}; final {result.reports[-1].log_line(tc.steps - 1)}")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"log: {result.log_path}")
    return 0


def cmd_eval(args, cfg: Config) -> int:
    backbones = load_backbones(cfg.backbones)
    index = _dataset_index(cfg, backbones)
    report = evaluate(args.checkpoint, index, backbones, cfg.evaluation)
    text = report.serialize()
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    if args.csv:
        Path(args.csv).write_text(report.csv(), encoding="utf-8")
        print(f"wrote {args.csv}")
    return 0


def cmd_serve(args, cfg: Config) -> int:
    from .service import run

    run(cfg)
    return 0


_COMMANDS = {
    "invert": cmd_invert,
    "edit": cmd_edit,
    "train": cmd_train,
    "eval": cmd_eval,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.print_config:
            print(dump_config(cfg), end="")
            return 0
        if not args.command:
            parser.print_help()
            return 1
        return _COMMANDS[args.command](args, cfg)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
