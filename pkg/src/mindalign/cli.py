"""Command-line interface: ``mindalign <command> ...``.

Runs are driven by a versioned JSON config. Scalar fields can be overridden
with ``--set section.key=value`` (value parsed as JSON, falling back to a
string); dedicated flags such as ``--epochs`` and ``--seed`` win over both.
Every failure prints one ``category: message`` line on stderr and exits
nonzero.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .data import SyntheticSpec, generate_synthetic, load_manifest, synthesize, write_mft
from .errors import ConfigError, MindAlignError
from .eval.ablation import ABLATION_SEEDS, MODES, ablate_data_size, ablate_subject_token
from .eval.metrics import MetricsReport, evaluate, predict
from .model import ModelConfig, load_checkpoint, param_count, preset_config
from .model.config import PRESETS
from .model.diagnostics import end_to_end_gradcheck
from .objective import LossConfig
from .train import TrainConfig, fit
from .train.loop import write_metrics_csv

log = logging.getLogger("mindalign")

CONFIG_VERSION = 1
GRADCHECK_TOLERANCE = 1e-4
H_RANGE = (1e-10, 1e-2)

_NUM = {"type": "number"}
_INT = {"type": "integer"}
_SUBJECTS = {
    "type": "array", "minItems": 1,
    "items": {"type": "array", "minItems": 2, "maxItems": 2,
              "prefixItems": [{"type": "string"}, {"type": "integer", "minimum": 1}]},
}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "seed"],
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "seed": {"type": "integer", "minimum": 0},
        "preset": {"enum": sorted(PRESETS)},
        "model": {
            "type": "object", "additionalProperties": False,
            "properties": {"n_tokens": _INT, "token_dim": _INT, "depth": _INT, "heads": _INT,
                           "mlp_ratio": _NUM, "ln_eps": _NUM, "subject_tokens": {"type": "boolean"},
                           "subjects": _SUBJECTS},
        },
        "train": {
            "type": "object", "additionalProperties": False,
            "properties": {"lr": _NUM, "beta1": _NUM, "beta2": _NUM, "eps": _NUM, "weight_decay": _NUM,
                           "batch_size": _INT, "epochs": _INT, "shuffle": {"type": "boolean"},
                           "clip_grad_norm": {"type": ["number", "null"]}},
        },
        "loss": {
            "type": "object", "additionalProperties": False,
            "properties": {"alpha": _NUM, "dot_scale": _NUM},
        },
        "dataset": {"type": "string", "minLength": 1},
        "synthetic": {
            "type": "object", "additionalProperties": False,
            "properties": {"subjects": _SUBJECTS, "n_tokens": _INT, "token_dim": _INT, "latent_dim": _INT,
                           "noise_std": _NUM, "bias_std": _NUM, "n_stimuli": _INT, "n_test": _INT,
                           "repetitions": _INT, "seed": _INT},
        },
        "ablation": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "seeds": {"type": "array", "items": _INT, "minItems": 1},
                "sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "modes": {"type": "array", "items": {"enum": list(MODES)}, "minItems": 1},
            },
        },
    },
}


class UsageError(MindAlignError):
    category = "usage"


class IOFailure(MindAlignError):
    category = "io"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------- config

def parse_override(text: str):
    if "=" not in text:
        raise UsageError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(doc: dict, overrides) -> dict:
    doc = copy.deepcopy(doc)
    for text in overrides or ():
        key, value = parse_override(text)
        parts = key.split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise UsageError(f"--set {key}: {p!r} is not a section")
        node[parts[-1]] = value
    return doc


def load_run_config(path, overrides=(), epochs=None, seed=None) -> dict:
    """Read, override and schema-check a run config; returns the resolved document."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise IOFailure(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    doc = apply_overrides(doc, overrides)
    # the data seed is fixed by the document; --seed only reseeds init and shuffling
    if isinstance(doc.get("synthetic"), dict) and "seed" in doc:
        doc["synthetic"].setdefault("seed", doc["seed"])
    if epochs is not None:
        doc.setdefault("train", {})["epochs"] = epochs
    if seed is not None:
        doc["seed"] = seed
    validate_run_config(doc)
    return doc


def validate_run_config(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(RUN_CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {e.message}")
    if "dataset" in doc and "synthetic" in doc:
        raise ConfigError("give exactly one of 'dataset' and 'synthetic'")


def synthetic_spec(doc: dict) -> SyntheticSpec:
    if "synthetic" not in doc:
        raise ConfigError("this command needs a 'synthetic' section")
    syn = dict(doc["synthetic"])
    syn.setdefault("seed", doc["seed"])
    try:
        return SyntheticSpec.from_dict(syn)
    except TypeError as exc:
        raise ConfigError(f"synthetic: {exc}") from None


def load_dataset(doc: dict):
    if "dataset" in doc:
        return load_manifest(doc["dataset"])
    if "synthetic" not in doc:
        raise ConfigError("this command needs a 'dataset' or 'synthetic' section")
    return synthesize(synthetic_spec(doc))[0]


def model_config(doc: dict, subjects) -> ModelConfig:
    fields = dict(doc.get("model", {}))
    fields.setdefault("subjects", subjects)
    fields["subjects"] = tuple(tuple(s) for s in fields["subjects"])
    return preset_config(doc.get("preset", "desk"), seed=doc["seed"], **fields)


def train_config(doc: dict) -> TrainConfig:
    fields = dict(doc.get("train", {}))
    fields["seed"] = doc["seed"]
    if "alpha" in doc.get("loss", {}):
        fields["alpha"] = doc["loss"]["alpha"]
    return TrainConfig.from_dict(fields)


def loss_config(doc: dict) -> LossConfig:
    return LossConfig(**doc.get("loss", {}))


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create output directory {out}: {exc.strerror}") from None
    if not os.access(out, os.W_OK):
        raise IOFailure(f"output directory {out} is not writable")
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _config(args) -> dict:
    return load_run_config(args.config, args.set, getattr(args, "epochs", None), getattr(args, "seed", None))


# ---------------------------------------------------------------------------- commands

def cmd_gen_data(args) -> int:
    doc = _config(args)
    out = _out_dir(args)
    path = generate_synthetic(synthetic_spec(doc), out)
    print(path)
    return 0


def cmd_train(args) -> int:
    doc = _config(args)
    out = _out_dir(args)
    dataset = load_dataset(doc)
    cfg = model_config(doc, dataset.subjects)
    init = None
    if args.resume:
        init, ckpt_cfg, _ = load_checkpoint(args.resume)
        if ckpt_cfg.to_dict() | {"seed": 0} != cfg.to_dict() | {"seed": 0}:
            raise ConfigError(f"checkpoint {args.resume} was trained with a different model config")
    _write_json(out / "run_config.json", doc)
    result = fit(cfg, train_config(doc), dataset, out_dir=out, loss_cfg=loss_config(doc), init=init)
    print(json.dumps({"best_epoch": result.best_epoch, **result.best.to_dict()}, sort_keys=True))
    return 0


def _report_rows(report: MetricsReport) -> dict:
    d = report.to_dict()
    return {"epoch": "", "split": d["split"], **{k: d[k] for k in d if k not in ("split", "n_samples")}}


def cmd_eval(args) -> int:
    doc = _config(args)
    params, cfg, _ = load_checkpoint(args.checkpoint)
    dataset = load_dataset(doc)
    report = evaluate(params, cfg, dataset, args.split, loss_config(doc), score=args.score)
    print(json.dumps(report.to_dict(), sort_keys=True))
    if args.out:
        out = _out_dir(args)
        _write_json(out / f"eval_{args.split}.json", report.to_dict())
        write_metrics_csv(out / f"eval_{args.split}.csv", [_report_rows(report)])
    return 0


def cmd_grad_check(args) -> int:
    if not H_RANGE[0] <= args.h <= H_RANGE[1]:
        raise UsageError(f"--h must lie in [{H_RANGE[0]:g}, {H_RANGE[1]:g}], got {args.h:g}")
    err = end_to_end_gradcheck(h=args.h, seed=args.seed, inject_sign_flip=args.inject_sign_flip)
    print(f"max relative error {err:.3e}")
    if not err < GRADCHECK_TOLERANCE:
        print(f"numeric: gradient check failed, max relative error {err:.3e} >= {GRADCHECK_TOLERANCE:g}",
              file=sys.stderr)
        return 1
    return 0


def cmd_ablate(args) -> int:
    doc = _config(args)
    out = _out_dir(args)
    spec = synthetic_spec(doc)
    cfg = model_config(doc, spec.subjects)
    tcfg = train_config(doc)
    abl = doc.get("ablation", {})
    seeds = args.seeds or abl.get("seeds") or list(ABLATION_SEEDS)
    if args.which == "token":
        report = ablate_subject_token(spec, cfg, tcfg, seeds)
    else:
        sizes = args.sizes or abl.get("sizes")
        if not sizes:
            raise UsageError("datasize ablation needs --sizes or ablation.sizes")
        report = ablate_data_size(spec, cfg, tcfg, sizes, abl.get("modes", list(MODES)), seeds)
    csv_path, json_path = report.write(out, f"ablation_{args.which}")
    print(csv_path)
    print(json_path)
    return 0


def cmd_param_count(args) -> int:
    if args.config:
        doc = _config(args)
        subjects = doc.get("synthetic", {}).get("subjects")
        if subjects is None and "dataset" in doc:
            subjects = load_manifest(doc["dataset"]).subjects
        cfg = model_config(doc, subjects or preset_config(doc.get("preset", "desk")).subjects)
    else:
        cfg = preset_config(args.preset)
    total, breakdown = param_count(cfg)
    if args.json:
        print(json.dumps({"config": cfg.to_dict(), **breakdown}, sort_keys=True))
        return 0
    width = max(len(k) for k in list(breakdown["groups"]) + list(breakdown["per_subject"])) + 2
    print(f"{'group':<{width}}{'parameters':>14}")
    for k, v in breakdown["groups"].items():
        print(f"{k:<{width}}{v:>14,}")
    for k, v in breakdown["per_subject"].items():
        print(f"{'subject ' + k:<{width}}{v:>14,}")
    print(f"{'total':<{width}}{total:>14,}")
    return 0


def cmd_export(args) -> int:
    doc = _config(args)
    out = _out_dir(args)
    params, cfg, _ = load_checkpoint(args.checkpoint)
    dataset = load_dataset(doc)
    trials = dataset.select(args.split if args.split != "all" else None, cfg.subject_ids)
    voxels, subjects, _ = dataset.arrays(trials)
    z = predict(params, cfg, voxels, subjects).astype(np.float32)
    path = out / "embeddings.mft"
    write_mft(path, {"embeddings": z})
    with open(out / "embeddings_index.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("row", "subject_id", "stimulus_id", "split"))
        for i, t in enumerate(trials):
            w.writerow((i, t.subject_id, t.stimulus_id, t.split))
    print(path)
    return 0


# ---------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mindalign", description="Multi-subject fMRI-to-embedding encoder toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(sp, required=True):
        sp.add_argument("--config", required=required, help="run config JSON")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field, e.g. train.lr=1e-3 (repeatable)")
        return sp

    sp = with_config(sub.add_parser("gen-data", help="write a synthetic dataset"))
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_data)

    sp = with_config(sub.add_parser("train", help="train and checkpoint the best epoch"))
    sp.add_argument("--out", required=True)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--resume", help="initialise parameters from this checkpoint")
    sp.set_defaults(func=cmd_train)

    sp = with_config(sub.add_parser("eval", help="evaluate a checkpoint"))
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--split", choices=("train", "test"), default="test")
    sp.add_argument("--score", choices=("cosine", "neg_l1"), default="cosine")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("grad-check", help="finite-difference check of the full model gradient")
    sp.add_argument("--h", type=float, default=1e-6)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--inject-sign-flip", action="store_true", help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_grad_check)

    sp = with_config(sub.add_parser("ablate", help="subject-token or data-size ablation"))
    sp.add_argument("which", choices=("token", "datasize"))
    sp.add_argument("--out", required=True)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--sizes", type=_int_list)
    sp.add_argument("--seeds", type=_int_list)
    sp.set_defaults(func=cmd_ablate)

    sp = with_config(sub.add_parser("param-count", help="analytic parameter breakdown"), required=False)
    sp.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_param_count)

    sp = with_config(sub.add_parser("export", help="write predicted embeddings to MFT1"))
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--split", choices=("train", "test", "all"), default="all")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_export)
    return p


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def main(argv=None) -> int:
    level = os.environ.get("MF_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except MindAlignError as exc:
        msg = " ".join(str(exc).split())
        print(f"{exc.category}: {msg}", file=sys.stderr)
        return 2 if isinstance(exc, UsageError) else 1
    except OSError as exc:
        print(f"io: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
