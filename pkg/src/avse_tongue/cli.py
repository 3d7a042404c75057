"""Command-line front end: ``avse-tongue <command> [options]``.

Every training command writes ``runs/<name>/{config.yaml, checkpoints/, log.jsonl, reports/}``.
Errors from the package exit with the status code of their category.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import AVSEError, ConfigError, DataError, ModalityError

log = logging.getLogger("avse_tongue")

SWEEP_SLOTS = (128, 256, 512, 1024, 2048, 4096)


def _run_dir(cfg: RunConfig, name: str | None) -> Path:
    d = Path(cfg.paths.get("runs", "runs")) / (name or cfg.name)
    (d / "checkpoints").mkdir(parents=True, exist_ok=True)
    (d / "reports").mkdir(exist_ok=True)
    return d


def _corpus(cfg: RunConfig, path: str | None):
    from .synthdata import CorpusCache, CorpusManifest
    return CorpusCache(CorpusManifest.load(path or cfg.paths["corpus"]))


def _check_corpus(cfg: RunConfig, cache, model_cfg) -> None:
    g = cache.gen_cfg
    if (g.image_height, g.image_width) != (model_cfg.image_height, model_cfg.image_width):
        raise ConfigError(f"corpus images are {g.image_height}x{g.image_width}, the model expects "
                          f"{model_cfg.image_height}x{model_cfg.image_width}")
    if g.stft.freq_bins != model_cfg.freq_bins:
        raise ConfigError(f"corpus STFT has {g.stft.freq_bins} bins, the model expects {model_cfg.freq_bins}")


def _meta(cfg: RunConfig, command: str, **extra) -> dict:
    return {"command": command, "seed": cfg.seed, "run_config": cfg.resolved(), **extra}


def _report_fit(res, run_dir: Path) -> None:
    print(f"best epoch {res.best_epoch}  valid L_SE {res.best_valid_se:.5f}")
    print(f"checkpoint {res.checkpoint}")
    print(f"log {run_dir / 'log.jsonl'}")


# -- commands ----------------------------------------------------------------

def cmd_gen_data(args, cfg: RunConfig) -> int:
    from .synthdata import generate_corpus
    out = Path(args.out or cfg.paths["corpus"])
    manifest = generate_corpus(cfg.generator_config(), out, workers=args.workers or cfg.workers)
    n = {s: len(manifest.ids(s)) for s in ("train", "valid", "test")}
    print(f"wrote {sum(n.values())} utterances ({n['train']} train, {n['valid']} valid, {n['test']} test) to {out}")
    print(f"manifest {manifest.path}  digest {manifest.digest()}")
    return 0


def _resume(args, model_cfg):
    from .senet import load_model
    if not args.resume:
        return model_cfg, 0
    model, meta = load_model(args.resume)
    if model.cfg.fingerprint() != model_cfg.replace(memory_slots=model.cfg.memory_slots).fingerprint():
        log.warning("resumed checkpoint config differs from the run config; using the checkpoint's")
    return model, int(meta.get("last_epoch", meta.get("epoch", 0)))


def cmd_train(args, cfg: RunConfig) -> int:
    from .training import SEObjective, fit
    model_cfg = cfg.model_config(args.modalities)
    cache = _corpus(cfg, args.corpus)
    _check_corpus(cfg, cache, model_cfg)
    run_dir = _run_dir(cfg, args.name)
    cfg.dump(run_dir / "config.yaml")
    model, start = _resume(args, model_cfg)
    res = fit(model, cache, SEObjective(cfg.loss_weights()), cfg.train_config(), run_dir=run_dir,
              start_epoch=start, meta=_meta(cfg, "train"))
    _report_fit(res, run_dir)
    return 0


def cmd_distill(args, cfg: RunConfig) -> int:
    from .senet import load_model
    from .training import KDObjective, fit
    teacher, _ = load_model(args.teacher)
    model_cfg = cfg.model_config(args.modalities)
    cache = _corpus(cfg, args.corpus)
    _check_corpus(cfg, cache, model_cfg)
    run_dir = _run_dir(cfg, args.name)
    cfg.dump(run_dir / "config.yaml")
    obj = KDObjective(teacher, cfg.loss_weights(), cfg.kd_config())
    model, start = _resume(args, model_cfg)
    res = fit(model, cache, obj, cfg.train_config(), run_dir=run_dir, check=obj.check, start_epoch=start,
              meta=_meta(cfg, "distill", teacher=str(args.teacher)))
    _report_fit(res, run_dir)
    return 0


def cmd_train_memory(args, cfg: RunConfig) -> int:
    from .experiments import memory_model, sweep_records, sweep_table
    from .training import MemoryObjective, fit
    if not args.pretrained or not Path(args.pretrained).is_file():
        raise DataError(f"pretrained checkpoint {args.pretrained!r} does not exist")
    from .senet import load_model
    pretrained, _ = load_model(args.pretrained)
    cache = _corpus(cfg, args.corpus)
    slots = ([int(s) for s in args.sweep] if args.sweep else [args.slots or cfg.default_memory_slots()])
    base = _run_dir(cfg, args.name)
    cfg.dump(base / "config.yaml")
    rows = []
    from .evaluation import evaluate_corpus
    from .experiments import SweepRow
    for n in slots:
        model_cfg = cfg.model_config("audio-lip-tongue", memory_slots=n)
        _check_corpus(cfg, cache, model_cfg)
        run_dir = _run_dir(cfg, f"{args.name or cfg.name}/slots-{n}") if args.sweep else base
        model = memory_model(model_cfg, pretrained, cfg.seed)
        res = fit(model, cache, MemoryObjective(cfg.loss_weights()), cfg.train_config(), run_dir=run_dir,
                  meta=_meta(cfg, "train-memory", pretrained=str(args.pretrained), memory_slots=n))
        _report_fit(res, run_dir)
        if args.sweep:
            rep = evaluate_corpus(res.model, cache, cfg.train_config().valid_snrs, seed=cfg.seed)
            rows.append(SweepRow(n, float(res.best_valid_se), rep.mean("segsnr"), rep.mean("stoi")))
    if rows:
        (base / "reports").mkdir(exist_ok=True)
        (base / "reports" / "slot_sweep.txt").write_text(sweep_table(rows) + "\n")
        (base / "reports" / "slot_sweep.jsonl").write_text(sweep_records(rows))
        print(sweep_table(rows))
    return 0


def cmd_finetune(args, cfg: RunConfig) -> int:
    from .senet import load_model
    from .training import MemoryObjective, SEObjective, fit
    model, meta = load_model(args.ckpt)
    if args.freeze_memory and not model.cfg.memory_slots:
        raise ConfigError("--freeze-memory needs a memory model checkpoint")
    cache = _corpus(cfg, args.target_corpus)
    _check_corpus(cfg, cache, model.cfg)
    run_dir = _run_dir(cfg, args.name)
    cfg.dump(run_dir / "config.yaml")
    overrides = {"freeze_memory": bool(args.freeze_memory)}
    if args.lr is not None:
        overrides["lr"] = args.lr
    tcfg = cfg.train_config(**overrides)
    obj = MemoryObjective(cfg.loss_weights()) if model.cfg.memory_slots else SEObjective(cfg.loss_weights())
    res = fit(model, cache, obj, tcfg, run_dir=run_dir,
              meta=_meta(cfg, "finetune", source=str(args.ckpt), freeze_memory=tcfg.freeze_memory, lr=tcfg.lr))
    _report_fit(res, run_dir)
    return 0


def cmd_evaluate(args, cfg: RunConfig) -> int:
    from .evaluation import evaluate_corpus
    from .senet import load_model
    model, _ = load_model(args.ckpt)
    cache = _corpus(cfg, args.corpus)
    _check_corpus(cfg, cache, model.cfg)
    snrs = [float(s) for s in args.snrs] if args.snrs is not None else list(cfg.train_config().valid_snrs)
    rep = evaluate_corpus(model, cache, snrs, noise_split=args.noise_split, seed=cfg.seed, identity=args.identity_mask)
    out = Path(args.out) if args.out else Path(args.ckpt).resolve().parent.parent / "reports"
    txt, jl = rep.write(out, args.stem)
    print(rep.table())
    print(f"report {txt} {jl}")
    return 0


def _read_frames(path):
    if path is None:
        return None
    from .synthdata import read_image_array
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{p} does not exist")
    return np.load(p) if p.suffix == ".npy" else read_image_array(p)


def cmd_enhance(args, cfg: RunConfig) -> int:
    from .dsp import read_wav, write_wav
    from .evaluation import enhance
    from .senet import load_model
    model, _ = load_model(args.ckpt)
    noisy = read_wav(args.noisy)
    lip = _read_frames(args.lip)
    tongue = _read_frames(args.tongue)
    if not args.identity_mask:
        if "lip" in model.cfg.modalities and lip is None:
            raise ModalityError("this model needs --lip frames")
        if "tongue" in model.cfg.modalities and not model.cfg.memory_slots and tongue is None:
            raise ModalityError("this model needs --tongue frames")
    out = enhance(model, noisy, lip, tongue, cfg.stft_config(), identity=args.identity_mask)
    write_wav(args.out, out)
    print(f"wrote {args.out} ({len(out)} samples)")
    return 0


def cmd_probe(args, cfg: RunConfig) -> int:
    from .evaluation import SOURCES, probe_sources, probe_table
    from .senet import load_model
    model, _ = load_model(args.ckpt)
    cache = _corpus(cfg, args.corpus)
    sources = args.sources or [s for s in SOURCES if s != "memory-recalled-features" or model.cfg.memory_slots]
    ids = cache.manifest.ids("test")
    results = probe_sources(cache, model, ids, target=args.target, sources=sources, seed=cfg.seed)
    table = probe_table(results)
    print(table)
    out = Path(args.out) if args.out else Path(args.ckpt).resolve().parent.parent / "reports"
    out.mkdir(parents=True, exist_ok=True)
    (out / f"probe_{args.target}.txt").write_text(table + "\n")
    with open(out / f"probe_{args.target}.jsonl", "w") as fh:
        for src, r in results.items():
            fh.write(json.dumps({"source": src, "target": args.target, "accuracy": r.accuracy,
                                 "chance": r.chance, "z": r.z, "n_test": r.n_test}) + "\n")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run config (defaults to the toy preset)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. optimizer.epochs=2")
    common.add_argument("--name", help="run name under paths.runs (default: config name)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="avse-tongue", description="Audio-visual speech enhancement with lip and tongue streams.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="generate the synthetic corpus")
    g.add_argument("--out", help="output directory (default: paths.corpus)")
    g.add_argument("--workers", type=int, default=0)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", parents=[common], help="train a masking network")
    t.add_argument("--modalities", default=None, help="audio | audio-lip | audio-tongue | audio-lip-tongue")
    t.add_argument("--corpus")
    t.add_argument("--resume", help="checkpoint to continue from; epoch numbering continues")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("distill", parents=[common], help="distil a teacher into a student")
    d.add_argument("--teacher", required=True)
    d.add_argument("--modalities", default="audio-lip")
    d.add_argument("--corpus")
    d.add_argument("--resume")
    d.set_defaults(func=cmd_distill)

    m = sub.add_parser("train-memory", parents=[common], help="train the lip/tongue memory model")
    m.add_argument("--pretrained", required=True, help="audio-lip-tongue checkpoint to initialize from")
    m.add_argument("--slots", type=int)
    m.add_argument("--sweep", nargs="*", default=None, metavar="N",
                   help=f"train one model per slot count (no values: {' '.join(map(str, SWEEP_SLOTS))})")
    m.add_argument("--corpus")
    m.set_defaults(func=cmd_train_memory)

    f = sub.add_parser("finetune", parents=[common], help="adapt a checkpoint to another corpus")
    f.add_argument("--ckpt", required=True)
    f.add_argument("--target-corpus", required=True)
    f.add_argument("--freeze-memory", action="store_true")
    f.add_argument("--lr", type=float)
    f.set_defaults(func=cmd_finetune)

    e = sub.add_parser("evaluate", parents=[common], help="SegSNR/STOI on the test split")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--corpus")
    e.add_argument("--snrs", nargs="*", type=float)
    e.add_argument("--noise-split", choices=("seen", "unseen", "both"), default="both")
    e.add_argument("--identity-mask", action="store_true", help="bypass the network (debug)")
    e.add_argument("--out")
    e.add_argument("--stem", default="eval")
    e.set_defaults(func=cmd_evaluate)

    n = sub.add_parser("enhance", parents=[common], help="enhance one noisy recording")
    n.add_argument("--ckpt", required=True)
    n.add_argument("--noisy", required=True, help="16-bit WAV")
    n.add_argument("--lip", help="lip frames (.npy or corpus image file)")
    n.add_argument("--tongue", help="tongue frames; not needed by memory models")
    n.add_argument("--out", required=True)
    n.add_argument("--identity-mask", action="store_true", help="bypass the network (debug)")
    n.set_defaults(func=cmd_enhance)

    r = sub.add_parser("probe", parents=[common], help="classification probes on tongue features")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--corpus")
    r.add_argument("--target", choices=("pseudo-phoneme", "speaker"), default="pseudo-phoneme")
    r.add_argument("--sources", nargs="*")
    r.add_argument("--out")
    r.set_defaults(func=cmd_probe)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "sweep", None) == []:
        args.sweep = list(SWEEP_SLOTS)
    try:
        cfg = RunConfig.load(args.config, args.overrides)
        return args.func(args, cfg)
    except AVSEError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
