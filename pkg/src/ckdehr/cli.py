"""Command-line front end: one subcommand per pipeline stage.

Every stage reads and writes inside the run directory (``--out``)::

    cohort.csv, planted.json                       synth
    fused/{train,test}.jsonl, fused/efficacy.jsonl,
    fused/dropped_codes.json                       fuse
    vocab.txt, teacher/model.{ckdf,cfg},
    teacher/soft_labels.jsonl                      train-teacher
    student/model.{ckdf,cfg}                       distill
    eval/<model>/{report.json,report.txt,confusion.csv}   eval (manifest eval-<model>.json)
    sweep/sweep.csv                                sweep-alpha
    bench/bench.json                               bench
    ablation/{ablation.csv,input_hashes.json}      ablate (reads cohort.csv and fused/)

and records ``manifests/<command>.json`` with the resolved configuration,
input and output hashes and library versions. ``replay MANIFEST`` re-runs a
stage from its manifest in a scratch directory and diffs the outputs.

Exit codes: 0 success, 1 replay mismatch, 2 bad input or configuration,
3 missing upstream artifact, 4 numerical divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import shutil
import sys
import tempfile
import time

import numpy as np
import scipy

from . import __version__
from . import pipeline as P
from .config import ConfigFileError, RunConfig, load_config, parse_config_text
from .distill.data import Dataset
from .distill.soft_labels import MissingSplitError, read_soft_labels, write_soft_labels
from .ehr import (DuplicateVisitError, RowError, SchemaError, TemplateError, default_registry,
                  generate_synthetic_cohort, load_registry, read_samples, read_visit_table,
                  write_samples, write_visit_table)
from .ehr.registry import RegistryError
from .ehr.synth import SynthConfigError, default_planted_efficacy, read_planted_sidecar, write_planted_sidecar
from .evaluation.ablation import ablation_run
from .evaluation.bench import bench_inference, bench_report
from .models import EncoderModel, Vocabulary
from .models.encoder import ConfigError, ContractError
from .optim import DivergenceError
from .tensor import NonFiniteError

log = logging.getLogger("ckdehr")

EXIT_OK, EXIT_MISMATCH, EXIT_INPUT, EXIT_MISSING, EXIT_DIVERGED = 0, 1, 2, 3, 4

INPUT_ERRORS = (SchemaError, RowError, DuplicateVisitError, TemplateError, RegistryError, SynthConfigError,
                ConfigFileError, ConfigError, ContractError, MissingSplitError, ValueError)


class MissingArtifact(Exception):
    def __init__(self, path: str):
        super().__init__(f"missing upstream artifact: {path}")
        self.path = path


class Run:
    """Run-directory bookkeeping for one command: inputs read, outputs written."""

    def __init__(self, command: str, cfg: RunConfig, argv: list[str], model: str | None = None):
        self.command = command
        self.model = model
        self.cfg = cfg
        self.argv = argv
        self.root = os.path.abspath(cfg.out)
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.timing: list[str] = []
        os.makedirs(self.root, exist_ok=True)

    def path(self, rel: str) -> str:
        return os.path.join(self.root, rel)

    def need(self, rel_or_abs: str) -> str:
        """Resolve an input (run-relative unless absolute), hash it, or raise MissingArtifact."""
        full = rel_or_abs if os.path.isabs(rel_or_abs) else self.path(rel_or_abs)
        if not os.path.exists(full):
            raise MissingArtifact(full)
        files = [full] if os.path.isfile(full) else sorted(
            os.path.join(d, f) for d, _, fs in os.walk(full) for f in fs)
        for f in files:
            self.inputs[self._key(f)] = sha256_file(f)
        return full

    def out(self, rel: str, timing: bool = False) -> str:
        full = self.path(rel)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        (self.timing if timing else self.outputs).append(rel)
        return full

    def _key(self, full: str) -> str:
        rel = os.path.relpath(full, self.root)
        return full if rel.startswith("..") else rel

    def write_manifest(self, seconds: float) -> str:
        manifest = {
            "command": self.command,
            "model": self.model,
            "argv": self.argv,
            "config": self.cfg.to_text(),
            "config_sha256": self.cfg.digest(),
            "seed": self.cfg.seed,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": {rel: sha256_file(self.path(rel)) for rel in sorted(set(self.outputs))},
            "timing_outputs": sorted(set(self.timing)),
            "versions": {"ckdehr": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "python": platform.python_version()},
            "wall_clock_s": seconds,
        }
        name = self.command if self.model is None else f"{self.command}-{self.model}"
        path = self.path(os.path.join("manifests", f"{name}.json"))
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_json(path: str, obj) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _registry(run: Run):
    return load_registry(run.need(run.cfg.registry)) if run.cfg.registry else default_registry()


def _template(run: Run, key: str) -> str | None:
    path = getattr(run.cfg, key)
    if not path:
        return None
    with open(run.need(path), encoding="utf-8") as fh:
        return fh.read()


def _load_split(run: Run, split: str, vocab: Vocabulary) -> Dataset:
    samples = read_samples(run.need(f"fused/{split}.jsonl"))
    return Dataset.from_samples(samples, vocab, run.cfg.max_seq_len)


def _load_model(run: Run, which: str) -> EncoderModel:
    d = run.need(which)
    run.need(os.path.join(which, "model.ckdf"))
    return EncoderModel.load(d)


def _train_log(path: str, history) -> None:
    _write_text(path, "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in history.epochs))


# --- commands ---------------------------------------------------------------

def cmd_synth(run: Run) -> None:
    cfg = run.cfg
    registry = _registry(run)
    planted = read_planted_sidecar(run.need(cfg.planted)) if cfg.planted else default_planted_efficacy(registry)
    records = generate_synthetic_cohort(cfg.seed, cfg.n_patients, (cfg.visits_min, cfg.visits_max),
                                        planted, registry)
    write_visit_table(records, run.out("cohort.csv"))
    write_planted_sidecar(planted, run.out("planted.json"))
    log.info("synth: %d visits for %d patients", len(records), cfg.n_patients)


def cmd_fuse(run: Run) -> None:
    cfg = run.cfg
    registry = _registry(run)
    allowed = set(registry.names)
    corpus_path = run.need(cfg.corpus or "cohort.csv")
    table = read_visit_table(corpus_path, lenient=cfg.lenient, allowed_diagnoses=None)
    unknown = sorted({d for r in table.records for d in r.diagnoses} - allowed)
    if unknown:
        log.warning("fuse: %d diagnosis codes outside the registry are kept as text only: %s",
                    len(unknown), unknown[:5])
    corpus = P.fuse(table.records, cfg, registry, fused=True, template=_template(run, "template"))
    if not corpus.train and not corpus.test:
        log.warning("fuse: no visit pairs (every patient has a single visit); writing empty sample files")
    write_samples(corpus.train, run.out("fused/train.jsonl"))
    write_samples(corpus.test, run.out("fused/test.jsonl"))
    corpus.table.dump(run.out("fused/efficacy.jsonl"))
    _write_json(run.out("fused/dropped_codes.json"),
                {"dropped_label_codes": dict(sorted(corpus.dropped_codes.items())),
                 "malformed_rows": table.malformed, "row_errors": table.errors,
                 "pairs": len(corpus.train) + len(corpus.test)})
    log.info("fuse: %d train / %d test samples, %d efficacy entries", len(corpus.train), len(corpus.test),
             len(corpus.table))


def cmd_train_teacher(run: Run) -> None:
    cfg = run.cfg
    registry = _registry(run)
    train_samples = read_samples(run.need("fused/train.jsonl"))
    vocab = P.build_vocab(train_samples, registry)
    vocab.save(run.out("vocab.txt"))
    train = Dataset.from_samples(train_samples, vocab, cfg.max_seq_len)
    result = P.train_teacher(train, vocab, cfg)
    result.model.save(os.path.dirname(run.out("teacher/model.ckdf")))
    run.outputs.append("teacher/model.cfg")
    soft = P.extract_soft_labels(result.model, train, vocab, cfg, registry)
    write_soft_labels(run.out("teacher/soft_labels.jsonl"), train.sample_ids, soft)
    _train_log(run.out("teacher/pretrain_log.jsonl", timing=True), result.pretrain)
    _train_log(run.out("teacher/train_log.jsonl", timing=True), result.finetune)


def _student_inputs(run: Run, alpha: float):
    vocab = Vocabulary.load(run.need("vocab.txt"))
    train = _load_split(run, "train", vocab)
    soft = None
    if alpha < 1.0:
        soft = read_soft_labels(run.need("teacher/soft_labels.jsonl"), train.sample_ids)
    return vocab, train, soft


def cmd_distill(run: Run) -> None:
    cfg = run.cfg
    vocab, train, soft = _student_inputs(run, cfg.alpha)
    student, history = P.train_student(train, soft, len(vocab), cfg)
    student.save(os.path.dirname(run.out("student/model.ckdf")))
    run.outputs.append("student/model.cfg")
    _train_log(run.out("student/train_log.jsonl", timing=True), history)


def cmd_eval(run: Run, which: str) -> None:
    registry = _registry(run)
    vocab = Vocabulary.load(run.need("vocab.txt"))
    model = _load_model(run, which)
    test = _load_split(run, "test", vocab)
    report = P.evaluate_model(model, test, registry)
    _write_text(run.out(f"eval/{which}/report.json"), report.to_json() + "\n")
    _write_text(run.out(f"eval/{which}/report.txt"), report.to_table())
    _write_text(run.out(f"eval/{which}/confusion.csv"), report.confusion_csv())
    log.info("eval %s: %s", which, report.headline())


def cmd_sweep_alpha(run: Run) -> None:
    cfg = run.cfg
    vocab, train, soft = _student_inputs(run, min(cfg.sweep_alphas, default=1.0))
    test = _load_split(run, "test", vocab)
    rows = P.alpha_sweep(train, test, soft, len(vocab), cfg, registry=_registry(run))
    _write_text(run.out("sweep/sweep.csv"), P.sweep_table(rows))


def cmd_bench(run: Run) -> None:
    cfg = run.cfg
    vocab = Vocabulary.load(run.need("vocab.txt"))
    test = _load_split(run, "test", vocab)
    teacher = _load_model(run, "teacher")
    student = _load_model(run, "student")
    ref = bench_inference(teacher, test, cfg.bench_repeats, cfg.bench_warmup, name="teacher")
    sub = bench_inference(student, test, cfg.bench_repeats, cfg.bench_warmup, name="student", reference=ref)
    _write_text(run.out("bench/bench.json", timing=True), bench_report([ref, sub]) + "\n")
    log.info("bench: student %.2fx faster, %.2fx fewer parameters", sub.speedup,
             ref.parameter_count / sub.parameter_count)


def cmd_ablate(run: Run) -> None:
    cfg = run.cfg
    registry = _registry(run)
    records = read_visit_table(run.need(cfg.corpus or "cohort.csv"), lenient=cfg.lenient).records
    fused = (read_samples(run.need("fused/train.jsonl")), read_samples(run.need("fused/test.jsonl")))
    result = ablation_run(records, cfg, registry=registry, fused_samples=fused)
    _write_text(run.out("ablation/ablation.csv"), result.table())
    _write_json(run.out("ablation/input_hashes.json"), result.text_hashes)


COMMANDS = {
    "synth": (cmd_synth, "generate a synthetic cohort with planted treatment efficacy"),
    "fuse": (cmd_fuse, "pair visits, rank treatment efficacy and render fused samples"),
    "train-teacher": (cmd_train_teacher, "fine-tune the teacher and cache its soft labels"),
    "distill": (cmd_distill, "train the student on hard and soft labels"),
    "eval": (cmd_eval, "score a trained model on the held-out split"),
    "sweep-alpha": (cmd_sweep_alpha, "train one student per alpha against the cached soft labels"),
    "bench": (cmd_bench, "time single-sample inference of teacher and student"),
    "ablate": (cmd_ablate, "run the four fusion x distillation combinations"),
}


# --- argument handling -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ckdehr", description="Efficacy-aware EHR fusion and distillation pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="run directory")
        p.add_argument("--alpha", type=float)
        p.add_argument("--rank", type=int)
        p.add_argument("--strategy", choices=("mlaph", "avg-prob", "single-cls-prob"))
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override any configuration key (repeatable)")
        if name == "eval":
            p.add_argument("--model", default="student", choices=("student", "teacher"))
    rp = sub.add_parser("replay", help="re-run a stage from its manifest and compare outputs")
    rp.add_argument("manifest")
    rp.add_argument("--into", help="scratch run directory (default: a temporary directory)")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    for item in args.set:
        if "=" not in item:
            raise ConfigFileError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value)
    for key in ("seed", "out", "alpha", "rank", "strategy"):
        value = getattr(args, key)
        if value is not None:
            setattr(cfg, key, value)
    return cfg.validate()


def configure_logging() -> None:
    level = os.environ.get("CKD_LOG", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.INFO), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)


def execute(command: str, cfg: RunConfig, argv: list[str], model: str = "student") -> Run:
    run = Run(command, cfg, argv, model if command == "eval" else None)
    fn = COMMANDS[command][0]
    t0 = time.perf_counter()
    if command == "eval":
        fn(run, model)
    else:
        fn(run)
    path = run.write_manifest(time.perf_counter() - t0)
    log.info("%s: wrote %d outputs, manifest %s", command, len(run.outputs), path)
    return run


def replay(manifest_path: str, into: str | None = None) -> tuple[bool, list[str]]:
    """Re-execute a recorded stage and compare data outputs by hash.

    Run-relative inputs are copied from the original run directory into the
    scratch directory after their hashes are checked; absolute inputs are
    read in place.
    """
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    source_root = os.path.dirname(os.path.dirname(os.path.abspath(manifest_path)))
    scratch = into or tempfile.mkdtemp(prefix="ckdehr-replay-")
    for rel, digest in manifest["inputs"].items():
        src = rel if os.path.isabs(rel) else os.path.join(source_root, rel)
        if not os.path.exists(src):
            raise MissingArtifact(src)
        if sha256_file(src) != digest:
            raise ConfigFileError(f"input {rel} changed since the manifest was written")
        if not os.path.isabs(rel):
            dst = os.path.join(scratch, rel)
            os.makedirs(os.path.dirname(dst), exist_ok=True)
            shutil.copyfile(src, dst)
    cfg = parse_config_text(manifest["config"])
    cfg.out = scratch
    model = manifest.get("model") or "student"
    execute(manifest["command"], cfg.validate(), ["replay", manifest_path], model)
    diffs = []
    for rel, digest in manifest["outputs"].items():
        path = os.path.join(scratch, rel)
        if not os.path.exists(path):
            diffs.append(f"{rel}: not produced")
        elif sha256_file(path) != digest:
            diffs.append(f"{rel}: content differs")
    return not diffs, diffs


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            ok, diffs = replay(args.manifest, args.into)
            for d in diffs:
                log.error("replay mismatch: %s", d)
            if ok:
                log.info("replay: all outputs byte-identical")
            return EXIT_OK if ok else EXIT_MISMATCH
        execute(args.command, resolve_config(args), argv, getattr(args, "model", "student"))
        return EXIT_OK
    except MissingArtifact as exc:
        log.error("%s", exc)
        return EXIT_MISSING
    except (DivergenceError, NonFiniteError) as exc:
        log.error("numerical divergence: %s", exc)
        return EXIT_DIVERGED
    except SchemaError as exc:
        log.error("schema error (column %s): %s", exc.column, exc)
        return EXIT_INPUT
    except INPUT_ERRORS as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        log.error("missing file: %s", exc.filename)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
