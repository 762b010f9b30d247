"""``wdce`` command-line entry point.

Exit codes: 0 success, 1 verification or training failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import ablation, config, data, verify
from .backbone import default_edges
from .estimator import WDCEClassifier
from .io import FormatError, dump_tensor
from .model import ABLATIONS, WdceModel, load_checkpoint, save_checkpoint
from .training import TrainingError, fit, metrics_csv
from .wavelet import build_haar, dwt, idwt

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _add_config_flags(p: argparse.ArgumentParser, sections=tuple(config.SECTIONS)) -> None:
    p.add_argument("--config", metavar="FILE", help="JSON run configuration")
    group = p.add_argument_group("configuration overrides")
    for section, key in config.flag_names():
        if section in sections:
            group.add_argument(f"--{section}.{key}", dest=f"cfg:{section}.{key}", metavar="V", default=None)


def _resolve(args, extra: dict | None = None) -> config.RunConfig:
    overrides = dict(extra or {})
    overrides.update({k[4:]: v for k, v in vars(args).items() if k.startswith("cfg:") and v is not None})
    return config.resolve(getattr(args, "config", None), overrides)


def _echo_config(cfg: config.RunConfig, sections) -> None:
    doc = {k: v for k, v in cfg.to_dict().items() if k in sections}
    print("config: " + json.dumps(doc, sort_keys=True, separators=(",", ":")))


def _load_dataset(path) -> data.Dataset:
    path = Path(path)
    return data.read_csv(path) if path.suffix.lower() == ".csv" else data.load(path)


# -- commands ----------------------------------------------------------------------------


def cmd_config(args) -> int:
    if args.print_defaults:
        print(config.RunConfig().to_json())
    else:
        print(_resolve(args).to_json())
    return EXIT_OK


def cmd_gen(args) -> int:
    extra = {}
    if args.spec:
        spec_doc = config.read_json_object(args.spec)
        extra.update({f"synth.{k}": v for k, v in spec_doc.items()})
    if args.seed is not None:
        extra["synth.seed"] = args.seed
    cfg = _resolve(args, extra)
    _echo_config(cfg, ("synth",))
    ds = data.generate(cfg.synth)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data.save(ds, out)
    print(f"wrote {len(ds)} samples to {out}")
    for k, n in ds.class_counts().items():
        print(f"class {k}: {n}")
    for p, r in enumerate(data.discriminability(ds)):
        print(f"pair {p} (classes {2 * p},{2 * p + 1}): high/low band distance ratio {r:.4f}")
    return EXIT_OK


def cmd_train(args) -> int:
    extra = {"train.seed": args.seed} if args.seed is not None else {}
    cfg = _resolve(args, extra)
    _echo_config(cfg, ("train", "backbone", "run"))
    ds = _load_dataset(args.data)
    tr, te = data.split(ds, cfg.run.train_fraction, cfg.run.split_seed)
    model = WdceModel(ds.n_classes, ds.T, ds.V, ds.joints.shape[3], cfg.train, cfg.backbone, default_edges(ds.V))
    rows, opt = fit(model, tr.model_input(), tr.labels, max_steps=args.max_steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(metrics_csv(rows))
    extra_meta = {"train_fraction": cfg.run.train_fraction, "split_seed": cfg.run.split_seed, "steps": len(rows)}
    save_checkpoint(out / "model.wdcc", model, opt.buffers, extra_meta)
    print(f"steps {len(rows)}  train acc {ablation.accuracy(model, tr):.4f}  test acc {ablation.accuracy(model, te):.4f}")
    print(f"wrote {out / 'metrics.csv'} and {out / 'model.wdcc'}")
    return EXIT_OK


def evaluation_report(model: WdceModel, ds: data.Dataset) -> dict:
    pred = model.predict_logits(ds.model_input()).argmax(axis=1)
    per_class = {}
    for k in range(model.K):
        mask = ds.labels == k
        per_class[k] = float((pred[mask] == k).mean()) if mask.any() else float("nan")
    partner = ds.labels ^ 1
    paired = partner < model.K
    return {
        "n": len(ds),
        "accuracy": float((pred == ds.labels).mean()),
        "per_class": per_class,
        "within_pair_confusion": float((pred[paired] == partner[paired]).mean()) if paired.any() else float("nan"),
    }


def _check_compatible(model: WdceModel, ds: data.Dataset) -> None:
    got = (ds.joints.shape[3], ds.T, ds.V)
    want = (model.c_in, model.T, model.V)
    if got != want:
        raise UsageError(f"checkpoint expects (C_in, T, V) = {want}, data has {got}")
    if len(ds) and ds.labels.max() >= model.K:
        raise UsageError(f"data has label {ds.labels.max()}, checkpoint was trained for {model.K} classes")


def _restore(args) -> tuple[WdceModel, dict, data.Dataset]:
    model, _, extra = load_checkpoint(args.ckpt)
    if getattr(args, "config", None):
        cfg = _resolve(args)
        for section in ("train", "backbone"):
            want = asdict(getattr(model, section))
            got = asdict(getattr(cfg, section))
            diff = sorted(k for k in want if want[k] != got[k])
            if diff:
                raise UsageError(f"checkpoint/config mismatch in section {section!r}: {diff}")
    ds = _load_dataset(args.data)
    _check_compatible(model, ds)
    split = getattr(args, "split", "all")
    if split != "all":
        if "train_fraction" not in extra:
            raise UsageError("checkpoint has no split settings; use --split all")
        tr, te = data.split(ds, extra["train_fraction"], extra["split_seed"])
        ds = tr if split == "train" else te
    return model, extra, ds


def cmd_eval(args) -> int:
    model, _, ds = _restore(args)
    rep = evaluation_report(model, ds)
    print(f"samples {rep['n']} ({args.split} split)")
    print(f"accuracy {rep['accuracy']:.4f}")
    for k, acc in rep["per_class"].items():
        print(f"class {k}: {acc:.4f}")
    print(f"within-pair confusion rate {rep['within_pair_confusion']:.4f}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _resolve(args)
    _echo_config(cfg, ("train", "backbone", "run"))
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    rows = [r for r in args.rows.split(",") if r.strip()] if args.rows else list(ABLATIONS)
    if not seeds:
        raise UsageError("--seeds needs at least one seed")
    unknown = [r for r in rows if r not in ABLATIONS]
    if unknown:
        raise UsageError(f"unknown ablation rows {unknown}; choose from {list(ABLATIONS)}")
    ds = _load_dataset(args.data)
    tr, te = data.split(ds, cfg.run.train_fraction, cfg.run.split_seed)
    runs = ablation.run_ablation(tr, te, cfg.train, cfg.backbone, seeds, rows, log=print)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = ablation.ranking_table(runs)
    (out / "ablation.csv").write_text(ablation.runs_csv(runs))
    (out / "ranking.txt").write_text(table)
    print(table, end="")
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = verify.run(args.suite)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    for c in failed:
        print(f"property failed: {c.suite}.{c.name}", file=sys.stderr)
    print(f"{len(checks) - len(failed)}/{len(checks)} properties passed")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_dwt(args) -> int:
    if args.inverse:
        src = Path(args.inp)
        sid_l, lab_l, low = data.read_trajectories(src / "low.csv")
        sid_h, lab_h, high = data.read_trajectories(src / "high.csv")
        if not (np.array_equal(sid_l, sid_h) and np.array_equal(lab_l, lab_h)) or low.shape != high.shape:
            raise FormatError(f"{src}: low.csv and high.csv describe different samples or shapes")
        n, v, half, c = low.shape
        f = build_haar(2 * half)
        rows = lambda a: a.transpose(0, 1, 3, 2).reshape(n, v * c, half)  # noqa: E731
        x = idwt(rows(low), rows(high), f).data.reshape(n, v, c, 2 * half).transpose(0, 1, 3, 2)
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        data.write_trajectories(out, sid_l, lab_l, x)
        print(f"wrote {out}")
        return EXIT_OK
    ds = data.read_csv(args.inp)
    n, v, t, c = ds.joints.shape
    low, high = dwt(ds.joints.transpose(0, 1, 3, 2).reshape(n, v * c, t), build_haar(t))
    grid = lambda b: b.data.reshape(n, v, c, t // 2).transpose(0, 1, 3, 2)  # noqa: E731
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data.write_trajectories(out / "low.csv", ds.sample_ids, ds.labels, grid(low))
    data.write_trajectories(out / "high.csv", ds.sample_ids, ds.labels, grid(high))
    print(f"wrote {out / 'low.csv'} and {out / 'high.csv'}")
    return EXIT_OK


def cmd_dump(args) -> int:
    model, _, ds = _restore(args)
    est = WDCEClassifier.from_model(model)
    feats = est.features(ds.model_input())
    logits = model.predict_logits(ds.model_input())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, arr in sorted(feats.items()):
        dump_tensor(out / f"{name}.wdct", arr)
        print(f"{name}: {arr.shape}")
    dump_tensor(out / "logits.wdct", logits)
    with open(out / "samples.csv", "w") as f:
        f.write("sample_id,label,pred\n")
        for sid, lab, pred in zip(ds.sample_ids, ds.labels, logits.argmax(axis=1)):
            f.write(f"{sid},{lab},{pred}\n")
    print(f"wrote {len(feats) + 2} files to {out}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wdce", description="Wavelet-decoupled contrastive skeleton action recognition.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("config", help="print the resolved or default configuration")
    p.add_argument("--print-defaults", action="store_true", help="print built-in defaults and exit")
    _add_config_flags(p)
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--spec", metavar="FILE", help="JSON object of generator fields")
    p.add_argument("--out", required=True, metavar="PATH")
    p.add_argument("--seed", type=int)
    _add_config_flags(p, ("synth",))
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train one model and write metrics and a checkpoint")
    p.add_argument("--data", required=True, metavar="PATH", help="dataset container or CSV")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-steps", type=int)
    _add_config_flags(p, ("train", "backbone", "run"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--ckpt", required=True, metavar="PATH")
    p.add_argument("--data", required=True, metavar="PATH")
    p.add_argument("--split", choices=("test", "train", "all"), default="test")
    _add_config_flags(p, ("train", "backbone"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the ablation rows across seeds")
    p.add_argument("--data", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    p.add_argument("--rows", help=f"comma-separated subset of {','.join(ABLATIONS)}")
    _add_config_flags(p, ("train", "backbone", "run"))
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("verify", help="run property suites")
    p.add_argument("--suite", choices=(*verify.SUITES, "all"), default="all")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("dwt", help="split CSV trajectories into Haar low/high bands (or invert)")
    p.add_argument("--in", dest="inp", required=True, metavar="PATH", help="CSV file, or band directory with --inverse")
    p.add_argument("--out", required=True, metavar="PATH", help="band directory, or CSV file with --inverse")
    p.add_argument("--inverse", action="store_true", help="rebuild trajectories from low.csv and high.csv")
    p.set_defaults(func=cmd_dwt)

    p = sub.add_parser("dump", help="write pooled features and attention maps as tensor dumps")
    p.add_argument("--ckpt", required=True, metavar="PATH")
    p.add_argument("--data", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--split", choices=("test", "train", "all"), default="all")
    p.set_defaults(func=cmd_dump)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, config.ConfigError, FormatError, FileNotFoundError, ValueError) as e:
        print(f"wdce {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as e:
        print(f"wdce {args.command}: training failed: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
