"""Command-line entry point: ``vcsr <command> [options]``.

Exit codes: 0 success, 1 invalid arguments or configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from ..causalsim.synthetic import DatasetSpec, generate_dataset
from .config import DESK_DATA, PROFILES, TrainConfig, dumps_config, make_config, parse_pairs, read_config_file

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
DATASET_NAME = "dataset.jsonl"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="flat key=value config file")
    p.add_argument("--seed", type=int, default=d, help="overrides the config seed")
    p.add_argument("--out", default=d, help="output directory")
    p.add_argument("--profile", choices=sorted(PROFILES), default=d)
    p.add_argument("--set", dest="overrides", action="append", default=d, metavar="KEY=VALUE",
                   help="override a config field; prefix with data. for dataset fields")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vcsr", description="Visual causal scene refinement toolkit")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        return p

    add("gen-data", "write a synthetic confounded dataset")
    p = add("train", "train a model")
    p.add_argument("--data", required=True, help="dataset file")
    p = add("eval", "evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p = add("grad-check", "run the finite-difference gradient suite")
    p.add_argument("--seeds", type=int, default=5, help="seeds for the per-op checks")
    p = add("frontdoor-demo", "compare naive, front-door and interventional P(A|V) on the fixture")
    p.add_argument("--v", type=int, default=None, help="video value (default: the worst case)")
    p.add_argument("--q", type=int, default=None)
    p = add("ablate", "train and evaluate the ablation grid")
    p.add_argument("--data", required=True)
    p.add_argument("--variants", default="full,no_qgr,no_css,no_sp,no_vc")
    p.add_argument("--split", default="test")
    return parser


# ---------------------------------------------------------------- option resolution
def _resolve(args) -> tuple[TrainConfig, DatasetSpec]:
    train_pairs, data_pairs = [], []
    if args.config:
        train_pairs, data_pairs = read_config_file(args.config)
    for pair in args.overrides or []:
        (data_pairs if pair.startswith("data.") else train_pairs).append(
            pair[len("data."):] if pair.startswith("data.") else pair)
    train_kw = parse_pairs(train_pairs, TrainConfig)
    data_kw = parse_pairs(data_pairs, DatasetSpec)
    profile = args.profile or train_kw.pop("profile", None) or "desk"
    train_kw.pop("profile", None)
    if args.seed is not None:
        train_kw["seed"] = args.seed
        data_kw.setdefault("seed", args.seed)
    if "mode" in train_kw:
        data_kw.setdefault("mode", train_kw["mode"])
    train_kw.setdefault("mode", data_kw.get("mode", DESK_DATA.mode))
    cfg = make_config(profile, **train_kw)
    spec = dataclasses.replace(DESK_DATA, **data_kw)
    spec.validate()
    return cfg, spec


def _out_dir(args, default: str) -> Path:
    return Path(args.out or default)


# ---------------------------------------------------------------- commands
def cmd_gen_data(args, cfg, spec) -> int:
    from .data import DatasetHeader, write_dataset

    out = _out_dir(args, ".")
    path = out / DATASET_NAME
    write_dataset(path, DatasetHeader.from_spec(spec), generate_dataset(spec))
    print(f"wrote {spec.n_train + spec.n_val + spec.n_test} samples to {path}")
    return EXIT_OK


def cmd_train(args, cfg, spec) -> int:
    from .data import read_dataset
    from .train import fit

    header, samples = read_dataset(args.data)
    if cfg.mode != header.mode:
        cfg = cfg.replace(mode=header.mode)
    out = _out_dir(args, "run")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(dumps_config(cfg))

    def progress(tr, va):
        rec = "-" if va["scene_recall"] is None else f"{va['scene_recall']:.3f}"
        print(f"epoch {tr['epoch']:3d}  loss {tr['loss']:.4f}  train_acc {tr['accuracy']:.3f}  "
              f"val_acc {va['accuracy']:.3f}  val_recall {rec}  lr {tr['lr']:.2e}", flush=True)

    _, report = fit(cfg, header, samples, out, progress)
    print(f"best epoch {report.best_epoch} val_acc {report.best_val_accuracy:.3f}; "
          f"checkpoint {report.checkpoint}")
    return EXIT_OK


def cmd_eval(args, cfg, spec) -> int:
    from .evaluate import evaluate

    res = evaluate(args.checkpoint, args.data, args.split)
    print(json.dumps(res, indent=2, sort_keys=True))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"eval_{args.split}.json").write_text(json.dumps(res, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_grad_check(args, cfg, spec) -> int:
    from .gradsuite import check_end_to_end, check_ops

    results = check_ops(range(args.seeds))
    results += [check_end_to_end("open"), check_end_to_end("mc")]
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        failed += not r.passed
        print(f"{status}  {r.name:<28} max_rel_err={r.max_rel_err:.3e}  tol={r.tol:.0e}  "
              f"coords={r.checked}")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_RUNTIME


def cmd_frontdoor(args, cfg, spec) -> int:
    from ..causalsim import (frontdoor_adjust, interventional_truth, load_fixture, max_tv,
                             naive_conditional, total_variation)

    scm = load_fixture()
    nv, nq = scm.cards["V"], scm.cards["Q"]
    if args.v is None and args.q is None:
        v, q = max(((v, q) for v in range(nv) for q in range(nq)),
                   key=lambda vq: total_variation(naive_conditional(scm, *vq),
                                                  interventional_truth(scm, *vq)))
    else:
        v, q = args.v or 0, args.q or 0
    if not (0 <= v < nv and 0 <= q < nq):
        raise UsageError(f"v must lie in [0, {nv}) and q in [0, {nq})")
    naive = naive_conditional(scm, v, q)
    fd = frontdoor_adjust(scm, v, q)
    truth = interventional_truth(scm, v, q)
    np.set_printoptions(precision=4, suppress=True)
    print(f"fixture SCM, V={v}, Q={q}")
    print(f"  naive  P(A|V,Q)      {naive}")
    print(f"  front-door estimate  {fd}")
    print(f"  P(A|do(V),Q)         {truth}")
    print(f"TV(naive, interventional)      = {total_variation(naive, truth):.6f}")
    print(f"TV(front-door, interventional) = {total_variation(fd, truth):.3e}")
    print(f"max over (v, q): naive {max_tv(scm, naive_conditional, interventional_truth):.6f}, "
          f"front-door {max_tv(scm, frontdoor_adjust, interventional_truth):.3e}")
    return EXIT_OK


def cmd_ablate(args, cfg, spec) -> int:
    from .ablate import format_table, run_grid, variant_config

    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    try:
        for v in variants:
            variant_config(cfg, v)      # reject unknown names before any training
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = _out_dir(args, "ablation")
    rows = run_grid(cfg, args.data, out, variants, args.split,
                    progress=lambda r: print(f"finished {r['label']}: acc {r['accuracy']:.3f}",
                                             flush=True))
    table = format_table(rows)
    print(table)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.txt").write_text(table + "\n")
    (out / "ablation.json").write_text(json.dumps(rows, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "grad-check": cmd_grad_check,
    "frontdoor-demo": cmd_frontdoor,
    "ablate": cmd_ablate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg, spec = _resolve(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:          # --help
        return EXIT_OK if not exc.code else EXIT_INVALID
    except (ValueError, TypeError, OSError) as exc:
        print(f"vcsr: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](args, cfg, spec)
    except UsageError as exc:
        print(f"vcsr {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"vcsr {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
