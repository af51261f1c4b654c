"""Command-line entry point.

Subcommands cover the full desk-scale experiment flow: fixture generation,
discriminator/generator training, adversarial corpus crafting, evaluation
(ROC, fooling, cross-evaluation), defense rounds, and chart emission. Every
command writes a resolved-config snapshot and an input-hash manifest next to
its outputs. Exit codes: 0 success, 1 contract violation, 2 bad input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .attack import GenTrainConfig, train_generator
from .dataset import load_corpus, protected_unprotected, split
from .defense import MixConfig, adaptive_generator, adversarial_train, game_rounds
from .discriminators import (
    build_discriminator,
    discriminator_hash,
    load_discriminator,
    save_discriminator,
    train_discriminator,
    training_accuracy,
)
from .discriminators.training import DiscTrainConfig
from .errors import ContractError
from .evaluation import (
    EvalReport,
    RocCurve,
    cross_eval,
    evaluate_attack,
    evaluate_clean,
    fooling_ratio,
)
from .fixtures import build_fixture_corpus
from .generation import craft_batch, generator_checksum, load_generator, save_generator
from .reporting import (
    plot_fooling_bars,
    plot_fooling_vs_fpr,
    plot_roc,
    write_cross_csv,
    write_report_json,
    write_roc_csv,
    write_trajectory_csv,
)

log = logging.getLogger("logogap")

ARCH_FLAGS = {"vit": "vit", "swin": "swin", "siamese": "siamese", "siamese++": "siamese_pp"}


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _input_digest(path: Path) -> dict:
    if path.is_file():
        return {"sha256": _sha256_file(path)}
    listing = sorted(str(p.relative_to(path)) + f":{p.stat().st_size}"
                     for p in path.rglob("*") if p.is_file())
    h = hashlib.sha256("\n".join(listing).encode()).hexdigest()
    return {"files": len(listing), "listing_sha256": h}


def _write_run_metadata(out_dir: Path, command: str, resolved: dict,
                        inputs: dict[str, Path]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    snapshot = {"command": command, "version": __version__, **resolved}
    with open(out_dir / "run_config.json", "w", encoding="utf-8") as fh:
        json.dump(snapshot, fh, indent=2, default=str)
        fh.write("\n")
    manifest = {name: {"path": str(p), **_input_digest(p)} for name, p in inputs.items()}
    with open(out_dir / "inputs.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    return doc


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Precedence: explicit flags > config file values > defaults."""
    file_vals = _load_config_file(getattr(args, "config", None))
    resolved = dict(defaults)
    for key, val in file_vals.items():
        if key not in defaults:
            raise ValueError(f"unknown config key {key!r}")
        resolved[key] = val
    for key in defaults:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            resolved[key] = flag_val
    return resolved


def _load_split(data: str, registry_path: str, ratio: float, split_seed: int):
    registry, images = load_corpus(data, registry_path)
    protected, unprotected = protected_unprotected(images)
    ds = split(protected, ratio=ratio, seed=split_seed)
    return registry, ds, unprotected


# ---------------------------------------------------------------- commands

def cmd_fixture(args) -> int:
    out = Path(args.out)
    registry_path = build_fixture_corpus(out, brands=args.brands,
                                         images_per_brand=args.images_per_brand,
                                         unprotected=args.unprotected, seed=args.seed,
                                         force=args.force)
    _write_run_metadata(out, "fixture",
                        {"brands": args.brands, "images_per_brand": args.images_per_brand,
                         "unprotected": args.unprotected, "seed": args.seed},
                        {"registry": registry_path})
    print(f"fixture corpus written to {out} "
          f"({args.brands}x{args.images_per_brand} protected + {args.unprotected} unprotected)")
    return 0


DISC_DEFAULTS = dict(profile="mini", split_ratio=0.85, epochs=None,
                     head_finetune_epochs=None, steps=None, batch_size=None,
                     learning_rate=None, clip_mode=None)


def cmd_train_disc(args) -> int:
    arch = ARCH_FLAGS[args.arch]
    resolved = _resolve(args, DISC_DEFAULTS)
    registry, ds, _ = _load_split(args.data, args.registry, resolved["split_ratio"], args.seed)
    overrides = {key: resolved[key] for key in
                 ("epochs", "head_finetune_epochs", "steps", "batch_size",
                  "learning_rate", "clip_mode")
                 if resolved[key] is not None}
    config = DiscTrainConfig.defaults(arch, resolved["profile"], seed=args.seed, **overrides)
    disc = build_discriminator(arch, k=registry.k, profile=resolved["profile"], seed=args.seed)
    t0 = time.time()
    disc = train_discriminator(disc, ds.train, config)
    acc = training_accuracy(disc, ds.train)
    disc.metadata["registry_hash"] = _sha256_file(Path(args.registry))
    out = Path(args.out)
    save_discriminator(disc, out)
    _write_run_metadata(out, "train-disc",
                        {**resolved, "arch": arch, "seed": args.seed,
                         "config": config.hash(), "train_accuracy": acc},
                        {"data": Path(args.data), "registry": Path(args.registry)})
    print(f"trained {arch} ({resolved['profile']}) in {time.time() - t0:.0f}s; "
          f"train accuracy {acc:.3f}; checkpoint at {out}")
    return 0


GEN_DEFAULTS = dict(profile="mini", split_ratio=0.85, epochs=None, epsilon=None,
                    p_adversarial=None, batch_size=None, target_fooling=None)


def cmd_train_gen(args) -> int:
    resolved = _resolve(args, GEN_DEFAULTS)
    disc = load_discriminator(args.disc)
    _, ds, _ = _load_split(args.data, args.registry, resolved["split_ratio"], args.seed)
    overrides = {key: resolved[key] for key in
                 ("epochs", "epsilon", "p_adversarial", "batch_size", "target_fooling")
                 if resolved[key] is not None}
    config = GenTrainConfig.defaults(disc.arch, resolved["profile"], seed=args.seed,
                                     **overrides)
    t0 = time.time()
    gen = train_generator(disc, ds.train, config)
    out = Path(args.out)
    save_generator(gen, out)
    _write_run_metadata(out, "train-gen",
                        {**resolved, "seed": args.seed, "config": config.hash(),
                         "epochs_run": gen.metadata["epochs_run"],
                         "trained_against": gen.trained_against},
                        {"disc": Path(args.disc), "data": Path(args.data),
                         "registry": Path(args.registry)})
    print(f"trained generator against {disc.arch} in {time.time() - t0:.0f}s "
          f"({gen.metadata['epochs_run']} epochs); checkpoint at {out}")
    return 0


def cmd_attack(args) -> int:
    gen = load_generator(args.gen)
    registry, images = load_corpus(args.input, args.registry)
    protected, _ = protected_unprotected(images)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    crafted = craft_batch(gen, protected)
    by_dir: dict[str, int] = {}
    for logo in crafted:
        src = Path(logo.source_path)
        dest_dir = out / src.parent.name
        dest_dir.mkdir(exist_ok=True)
        arr = np.round(logo.pixels.transpose(1, 2, 0) * 255.0).astype(np.uint8)
        Image.fromarray(arr).save(dest_dir / src.name)
        by_dir[src.parent.name] = by_dir.get(src.parent.name, 0) + 1
    marker = {"generator": generator_checksum(gen.core), "epsilon": gen.epsilon,
              "trained_against": gen.trained_against}
    for dirname in by_dir:
        with open(out / dirname / "ADVERSARIAL.json", "w", encoding="utf-8") as fh:
            json.dump({**marker, "images": by_dir[dirname]}, fh, indent=2)
            fh.write("\n")
    _write_run_metadata(out, "attack", {"epsilon": gen.epsilon},
                        {"gen": Path(args.gen), "input": Path(args.input),
                         "registry": Path(args.registry)})
    print(f"crafted {len(crafted)} adversarial logos into {out}")
    return 0


EVAL_DEFAULTS = dict(split_ratio=0.85, split_seed=1, fpr_targets=None)


def _parse_targets(raw: str | None) -> list[float]:
    if raw is None:
        return [1e-2]
    return [float(tok) for tok in raw.split(",") if tok]


def cmd_eval(args) -> int:
    resolved = _resolve(args, EVAL_DEFAULTS)
    targets = _parse_targets(resolved["fpr_targets"])
    _, ds, unprotected = _load_split(args.data, args.registry, resolved["split_ratio"],
                                     resolved["split_seed"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = {"data": Path(args.data), "registry": Path(args.registry)}

    if args.mode == "roc":
        disc = load_discriminator(args.disc)
        report = evaluate_clean(disc, list(ds.test), unprotected, targets)
        write_report_json(report, out / "clean.report.json")
        write_roc_csv(report.roc, out / "roc.csv")
        inputs["disc"] = Path(args.disc)
        print(f"clean evaluation: tpr_at={_fmt_map(report.tpr_at)} "
              f"theta_at={_fmt_map(report.theta_at)}")
    elif args.mode == "fooling":
        disc = load_discriminator(args.disc)
        gen = load_generator(args.gen)
        if gen.trained_against != discriminator_hash(disc):
            log.warning("generator was trained against a different discriminator; "
                        "recording the mismatch in the report")
        report = evaluate_attack(disc, gen, list(ds.test), unprotected, targets)
        write_report_json(report, out / "fooling.report.json")
        inputs.update({"disc": Path(args.disc), "gen": Path(args.gen)})
        print(f"fooling_at={_fmt_map(report.fooling_at)} (matched={report.generator_matched})")
    else:  # cross
        discs = [load_discriminator(p) for p in args.discs]
        gens = [load_generator(p) for p in args.gens]
        result = cross_eval(gens, discs, list(ds.test), unprotected, targets,
                            generator_labels=[Path(p).name for p in args.gens],
                            discriminator_labels=[Path(p).name for p in args.discs])
        write_cross_csv(result, out / "cross.csv")
        with open(out / "cross.json", "w", encoding="utf-8") as fh:
            json.dump({"generators": result.generator_labels,
                       "discriminators": result.discriminator_labels,
                       "fpr_targets": result.fpr_targets,
                       "fooling": result.fooling.tolist()}, fh, indent=2)
            fh.write("\n")
        reports_dir = out / "reports"
        reports_dir.mkdir(exist_ok=True)
        for di, rep in enumerate(result.clean_reports):
            write_report_json(rep, reports_dir / f"clean_{result.discriminator_labels[di]}.report.json")
        for gi, row in enumerate(result.attack_reports):
            for di, rep in enumerate(row):
                name = f"{result.generator_labels[gi]}_vs_{result.discriminator_labels[di]}"
                write_report_json(rep, reports_dir / f"{name}.report.json")
        for i, p in enumerate(args.discs):
            inputs[f"disc{i}"] = Path(p)
        for i, p in enumerate(args.gens):
            inputs[f"gen{i}"] = Path(p)
        print(f"cross matrix {result.fooling.shape} written to {out / 'cross.csv'}")
    _write_run_metadata(out, f"eval-{args.mode}", {**resolved, "fpr_targets": targets}, inputs)
    return 0


def _fmt_map(d: dict) -> str:
    return "{" + ", ".join(f"{k:g}: {v:.3f}" for k, v in d.items()) + "}"


DEFEND_DEFAULTS = dict(profile="mini", split_ratio=0.85, mix=0.5, rounds=1,
                       fpr_target=1e-2, epochs=None, gen_epochs=None)


def cmd_defend(args) -> int:
    resolved = _resolve(args, DEFEND_DEFAULTS)
    registry, ds, unprotected = _load_split(args.data, args.registry,
                                            resolved["split_ratio"], args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = {"data": Path(args.data), "registry": Path(args.registry)}
    arch = ARCH_FLAGS[args.arch]
    disc_overrides = {"epochs": resolved["epochs"]} if resolved["epochs"] else {}
    disc_config = DiscTrainConfig.defaults(arch, resolved["profile"], seed=args.seed,
                                           **disc_overrides)
    gen_overrides = {"epochs": resolved["gen_epochs"]} if resolved["gen_epochs"] else {}
    gen_config = GenTrainConfig.defaults(arch, resolved["profile"], seed=args.seed,
                                         **gen_overrides)

    if args.mode == "adv-train":
        gen = load_generator(args.gen)
        inputs["gen"] = Path(args.gen)
        mix = MixConfig(mix_ratio=resolved["mix"],
                        source_generator=generator_checksum(gen.core), seed=args.seed)
        disc = adversarial_train(disc_config, list(ds.train), gen, mix, k=registry.k)
        save_discriminator(disc, out)
        print(f"robust {arch} at mix {resolved['mix']} saved to {out}")
    elif args.mode == "adaptive":
        robust = load_discriminator(args.disc)
        inputs["disc"] = Path(args.disc)
        gen_config = GenTrainConfig.defaults(robust.arch, resolved["profile"],
                                             seed=args.seed, **gen_overrides)
        gen = adaptive_generator(robust, list(ds.train), gen_config)
        save_generator(gen, out)
        print(f"adaptive generator saved to {out}")
    else:  # game
        mix = MixConfig(mix_ratio=resolved["mix"], source_generator="bootstrap",
                        seed=args.seed)
        rounds = game_rounds(int(resolved["rounds"]), disc_config, gen_config, mix,
                             list(ds.train), k=registry.k, out_dir=out)
        trajectory = []
        for i, (disc, gen) in enumerate(rounds, start=1):
            report = evaluate_attack(disc, gen, list(ds.test), unprotected,
                                     [resolved["fpr_target"]])
            trajectory.append({
                "round": i,
                "fooling": report.fooling_at[resolved["fpr_target"]],
                "tpr": report.tpr_at[resolved["fpr_target"]],
                "theta": report.theta_at[resolved["fpr_target"]],
            })
        write_trajectory_csv(trajectory, out / "trajectory.csv")
        print(f"{len(rounds)} defense/attack rounds checkpointed under {out}")
    _write_run_metadata(out, f"defend-{args.mode}", {**resolved, "seed": args.seed}, inputs)
    return 0


def cmd_report(args) -> int:
    reports_dir = Path(args.reports)
    out = Path(args.out)
    report_files = sorted(reports_dir.rglob("*.report.json"))
    cross_file = next(iter(reports_dir.rglob("cross.json")), None)
    if not report_files and cross_file is None:
        raise ValueError(f"no stored reports under {reports_dir}")
    out.mkdir(parents=True, exist_ok=True)

    curves: dict[str, RocCurve] = {}
    fooling_series: dict[str, list[tuple[float, float]]] = {}
    for path in report_files:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        label = path.stem.replace(".report", "")
        if doc.get("roc"):
            curves[label] = RocCurve(tuple(tuple(p) for p in doc["roc"]))
        if doc.get("fooling_at"):
            pts = [(float(t), v) for t, v in doc["fooling_at"].items()]
            fooling_series[label] = pts
    written = []
    if curves:
        plot_roc(curves, out / "roc.svg")
        written.append("roc.svg")
    if fooling_series:
        plot_fooling_vs_fpr(fooling_series, out / "fooling_vs_fpr.svg")
        written.append("fooling_vs_fpr.svg")
    if cross_file is not None:
        with open(cross_file, encoding="utf-8") as fh:
            doc = json.load(fh)
        from .evaluation import CrossEvalResult
        result = CrossEvalResult(generator_labels=doc["generators"],
                                 discriminator_labels=doc["discriminators"],
                                 fpr_targets=doc["fpr_targets"],
                                 fooling=np.asarray(doc["fooling"]),
                                 clean_reports=[], attack_reports=[])
        for target in result.fpr_targets:
            fname = f"cross_bars_fpr_{target:g}.svg"
            plot_fooling_bars(result, target, out / fname)
            written.append(fname)
    print(f"wrote {', '.join(written)} to {out}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logogap",
                                     description="Logo identification, adversarial logo "
                                                 "crafting, and the evaluation harness.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("fixture", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--brands", type=int, default=12)
    p.add_argument("--images-per-brand", type=int, default=40)
    p.add_argument("--unprotected", type=int, default=300)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_fixture)

    def add_common(p, with_seed=True):
        p.add_argument("--data", required=True, help="corpus root directory")
        p.add_argument("--registry", required=True, help="registry JSON path")
        p.add_argument("--out", required=True)
        p.add_argument("--config", help="JSON config file; flags override its values")
        if with_seed:
            p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("train-disc", help="train a discriminator")
    p.add_argument("--arch", required=True, choices=sorted(ARCH_FLAGS))
    add_common(p)
    p.add_argument("--profile", choices=("mini", "paper"))
    p.add_argument("--split-ratio", type=float, dest="split_ratio")
    p.add_argument("--epochs", type=int)
    p.add_argument("--head-finetune-epochs", type=int, dest="head_finetune_epochs")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--clip-mode", choices=("grad_norm", "grad_value"), dest="clip_mode")
    p.set_defaults(func=cmd_train_disc)

    p = sub.add_parser("train-gen", help="train a perturbation generator")
    p.add_argument("--disc", required=True, help="discriminator checkpoint directory")
    add_common(p)
    p.add_argument("--profile", choices=("mini", "paper"))
    p.add_argument("--split-ratio", type=float, dest="split_ratio")
    p.add_argument("--epochs", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--p-adversarial", type=float, dest="p_adversarial")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--target-fooling", type=float, dest="target_fooling")
    p.set_defaults(func=cmd_train_gen)

    p = sub.add_parser("attack", help="craft an adversarial corpus")
    p.add_argument("--gen", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("eval", help="evaluate discriminators and attacks")
    p.add_argument("mode", choices=("roc", "fooling", "cross"))
    p.add_argument("--disc", help="discriminator checkpoint (roc, fooling)")
    p.add_argument("--gen", help="generator checkpoint (fooling)")
    p.add_argument("--discs", nargs="+", help="discriminator checkpoints (cross)")
    p.add_argument("--gens", nargs="+", help="generator checkpoints (cross)")
    p.add_argument("--data", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--split-ratio", type=float, dest="split_ratio")
    p.add_argument("--split-seed", type=int, dest="split_seed")
    p.add_argument("--fpr-targets", dest="fpr_targets",
                   help="comma-separated FPR targets (default 1e-2)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("defend", help="adversarial training and adaptive attacks")
    p.add_argument("mode", choices=("adv-train", "adaptive", "game"))
    p.add_argument("--arch", choices=sorted(ARCH_FLAGS), default="vit")
    p.add_argument("--gen", help="generator checkpoint (adv-train)")
    p.add_argument("--disc", help="robust discriminator checkpoint (adaptive)")
    add_common(p)
    p.add_argument("--profile", choices=("mini", "paper"))
    p.add_argument("--split-ratio", type=float, dest="split_ratio")
    p.add_argument("--mix", type=float)
    p.add_argument("--rounds", type=int)
    p.add_argument("--fpr-target", type=float, dest="fpr_target")
    p.add_argument("--epochs", type=int)
    p.add_argument("--gen-epochs", type=int, dest="gen_epochs")
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("report", help="render SVG charts from stored reports")
    p.add_argument("--reports", required=True, help="directory of stored eval outputs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def _validate_mode_args(args) -> None:
    if getattr(args, "cmd", None) == "eval":
        if args.mode in ("roc", "fooling") and not args.disc:
            raise ValueError(f"eval {args.mode} requires --disc")
        if args.mode == "fooling" and not args.gen:
            raise ValueError("eval fooling requires --gen")
        if args.mode == "cross" and not (args.discs and args.gens):
            raise ValueError("eval cross requires --discs and --gens")
    if getattr(args, "cmd", None) == "defend":
        if args.mode == "adv-train" and not args.gen:
            raise ValueError("defend adv-train requires --gen")
        if args.mode == "adaptive" and not args.disc:
            raise ValueError("defend adaptive requires --disc")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _validate_mode_args(args)
        return int(args.func(args) or 0)
    except ContractError as exc:
        log.error("contract violation: %s", exc)
        return 1
    except (ValueError, KeyError, FileNotFoundError, FileExistsError,
            NotADirectoryError, json.JSONDecodeError) as exc:
        log.error("bad input: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
