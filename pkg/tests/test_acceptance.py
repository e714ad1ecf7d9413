"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Every test checks its numerical tolerance and its wall-clock budget. The
oracles are the same brute-force helpers the unit tests use.
"""

import csv
import hashlib
import json
import statistics
import time

import numpy as np
import pytest

from ckdehr import pipeline as P
from ckdehr import tensor as T
from ckdehr.cli import main, replay
from ckdehr.config import ModelSpec, RunConfig
from ckdehr.distill.data import Dataset
from ckdehr.distill.losses import LossConfig, bce_naive, bce_with_logits, total_loss
from ckdehr.distill.training import TrainConfig, finetune_teacher
from ckdehr.ehr import (build_visit_pairs, default_registry, generate_synthetic_cohort, rank_efficacy,
                        read_samples, top_k_treatments)
from ckdehr.evaluation.bench import bench_inference
from ckdehr.evaluation.metrics import (PredictionSet, aupr_single, auroc_single, confusion_per_label)
from ckdehr.models import EncoderConfig, EncoderModel
from ckdehr.models.encoder import lora_trainable_count, walk_lora_parameters
from gradcheck import check, max_rel_error, numeric_grad
from test_ehr import brute_efficacy, brute_top_k
from test_metrics import enumerated_aupr, fixture, pairwise_auroc

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(capsys):
    """Print ``[PASS]``/``[FAIL]`` for a criterion, then assert it."""
    def emit(n, title, ok, detail, elapsed, budget):
        ok = bool(ok) and elapsed < budget
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n} ({title}): {detail}; "
                  f"{elapsed:.1f}s of {budget:.0f}s budget")
        assert ok, f"criterion {n} failed: {detail}"
    return emit


# --- 1. gradient fidelity -------------------------------------------------

def _op_checks(r):
    x, y = r.normal(size=(3, 4)), r.uniform(0.5, 2.0, size=(3, 4))
    x3, w3 = r.normal(size=(2, 3, 4)), T.Tensor(r.normal(size=(2, 3, 4)))
    m, b4 = r.normal(size=(4, 5)), r.normal(size=4)
    mask = np.array([[1, 1, 1, 0], [1, 0, 1, 1], [1, 1, 1, 1]], dtype=bool)
    t = r.random((3, 4))
    return {
        "add/sub/neg": (lambda a, c: T.tsum(T.tanh(a + c - (-a))), [x, b4]),
        "mul/div": (lambda a, c: T.tsum(T.div(a * c, c + 1.0)), [x, y]),
        "exp/log": (lambda a, c: T.mean(T.exp(a * 0.3) + T.log(c) * a), [x, y]),
        "tanh": (lambda a: T.tsum(T.tanh(a) * a), [x]),
        "relu": (lambda a: T.tsum(T.relu(a) * a), [x + 0.05 * np.sign(x)]),
        "gelu": (lambda a: T.tsum(T.gelu(a) * a), [x]),
        "sigmoid": (lambda a: T.tsum(T.sigmoid(a) * a), [x]),
        "sum/mean": (lambda a: T.tsum(T.mean(a, axis=1) * T.tsum(a, axis=1)), [x]),
        "reshape/transpose": (lambda a: T.tsum(T.reshape(T.transpose(a, (2, 0, 1)), (4, 6)) *
                                               T.Tensor(np.arange(24.0).reshape(4, 6))), [x3]),
        "swap_last": (lambda a: T.tsum(T.swap_last(a) * T.swap_last(w3)), [x3]),
        "take_rows": (lambda a: T.tsum(T.tanh(T.take_rows(a, np.array([[0, 2], [2, 3]])))), [m]),
        "select_positions": (lambda a: T.tsum(T.sigmoid(T.select_positions(a, [2, 0]))), [x3]),
        "matmul 2-D": (lambda a, c: T.tsum(T.tanh(a @ c)), [x, m]),
        "matmul batched": (lambda a, c: T.tsum(T.tanh(a @ T.swap_last(c))), [x3, r.normal(size=(2, 5, 4))]),
        "matmul shared weight": (lambda a, c: T.tsum(T.tanh(a @ c)), [x3, m]),
        "softmax (masked)": (lambda a: T.tsum(T.softmax_rows(a, mask) * T.Tensor(t)), [x]),
        "log_softmax": (lambda a: T.tsum(T.log_softmax(a) * T.Tensor(t)), [x]),
        "layer_norm": (lambda a, g, bb: T.tsum(T.layer_norm(a, g, bb) * T.Tensor(t)), [x, b4, r.normal(size=4)]),
        "bce_with_logits": (lambda a: T.bce_with_logits(a * 3.0, t), [x]),
        "cross_entropy": (lambda a: T.cross_entropy(a, [0, 3, 1]), [x]),
    }


def _end_to_end_error(pooling, activation, seed):
    cfg = EncoderConfig(layers=1, heads=2, d_model=4, d_ff=6, max_seq_len=4, vocab_size=9,
                        activation=activation, pooling=pooling)
    model = EncoderModel(cfg, seed=seed)
    model.attach_lora(2, seed=seed + 1)
    r = np.random.default_rng(seed)
    for ad in model.adapters():
        ad.B.data = r.normal(0, 0.3, size=ad.B.shape)
    ids = np.array([[2, 5, 7, 3], [4, 8, 0, 0]])
    mask = ids != 0
    hard = (r.random((2, 25)) < 0.3).astype(float)
    soft = r.random((2, 25))
    lc = LossConfig(alpha=0.9)
    params = list(model.parameters())
    for p in params:
        p.requires_grad = True

    def loss():
        z = model.label_logits(ids, mask)
        return total_loss(bce_with_logits(z, hard), bce_with_logits(z, soft), lc)

    with T.Tape() as tape:
        tape.backward(loss())
    analytic = [p.grad.copy() for p in params]

    def f(*arrays):
        saved = [p.data for p in params]
        for p, a in zip(params, arrays):
            p.data = a
        try:
            return loss().item()
        finally:
            for p, a in zip(params, saved):
                p.data = a

    numeric = numeric_grad(f, [p.data.copy() for p in params])
    return max(max_rel_error(n, a) for n, a in zip(numeric, analytic))


def test_criterion_1_gradient_fidelity(verdict):
    t0 = time.perf_counter()
    worst = {}
    for seed in range(3):
        for name, (build, arrays) in _op_checks(np.random.default_rng(seed)).items():
            worst[name] = max(worst.get(name, 0.0), check(build, arrays))
    for pooling, act in (("mean", "gelu"), ("last", "relu")):
        worst[f"end-to-end ({pooling}, {act})"] = _end_to_end_error(pooling, act, seed=7)
    name, err = max(worst.items(), key=lambda kv: kv[1])
    verdict(1, "gradient fidelity", err < 1e-4,
            f"{len(worst)} graphs, max relative error {err:.2e} ({name}) < 1e-4",
            time.perf_counter() - t0, 60)


# --- 2. LoRA contract -----------------------------------------------------

def test_criterion_2_lora_contract(verdict):
    t0 = time.perf_counter()
    ok, notes = True, []
    cfg = EncoderConfig(layers=2, heads=2, d_model=16, d_ff=32, max_seq_len=12, vocab_size=30)
    ids = np.random.default_rng(0).integers(3, 30, size=(4, 12))
    mask = np.ones_like(ids, dtype=bool)
    mask[1, 6:] = False
    ids[~mask] = 0

    base = EncoderModel(cfg, seed=1)
    adapted = base.copy()
    adapted.attach_lora(4, seed=2)
    same = np.array_equal(base.label_logits(ids, mask).data, adapted.label_logits(ids, mask).data)
    ok &= same
    notes.append(f"zero-init outputs identical={same}")

    before = {n: p.data.tobytes() for n, p in adapted.named_parameters() if "lora_" not in n and not n.startswith("head.")}
    labels = (np.random.default_rng(3).random((4, 25)) < 0.3).astype(float)
    data = Dataset(ids, mask, labels, [f"s{i}" for i in range(4)])
    finetune_teacher(adapted, data, TrainConfig(3, 2, 1e-2, 0))
    after = {n: p.data.tobytes() for n, p in adapted.named_parameters() if n in before}
    frozen = before == after
    moved = any(np.any(ad.B.data != 0) for ad in adapted.adapters())
    ok &= frozen and moved
    notes.append(f"base byte-identical after fine-tune={frozen}, adapters moved={moved}")

    counts = []
    for layers, d, r in ((1, 8, 1), (2, 16, 4), (3, 12, 2), (4, 32, 8)):
        c = EncoderConfig(layers=layers, heads=2, d_model=d, d_ff=8, max_seq_len=6, vocab_size=10)
        m = EncoderModel(c, seed=0)
        m.attach_lora(r)
        expected = layers * 3 * r * (d + d)
        counts.append(walk_lora_parameters(m) == lora_trainable_count(c, r) == expected)
    ok &= all(counts)
    notes.append(f"trainable count = layers*3*r*(d+k) in {sum(counts)}/{len(counts)} configs")
    verdict(2, "LoRA contract", ok, "; ".join(notes), time.perf_counter() - t0, 30)


# --- 3. loss algebra ------------------------------------------------------

def test_criterion_3_loss_algebra(verdict):
    t0 = time.perf_counter()
    r = np.random.default_rng(0)
    x = np.concatenate([r.uniform(-20, 20, size=(40, 25)), np.linspace(-20, 20, 25)[None]])
    t = r.random(x.shape)
    gap = abs(bce_with_logits(T.Tensor(x), t).item() - bce_naive(x, t))
    extreme = bce_with_logits(T.Tensor([1e4, -1e4, 1e4, -1e4]), [0.0, 1.0, 1.0, 0.0]).item()

    hard, soft = T.Tensor(1.25), T.Tensor(0.5)
    exact = (total_loss(hard, soft, LossConfig(alpha=1.0)).item() == 1.25
             and total_loss(hard, soft, LossConfig(alpha=0.0)).item() == 0.5)

    xs = r.uniform(-8, 8, size=(3, 25))
    ts = r.random((3, 25))
    xt = T.Tensor(xs, requires_grad=True)
    with T.Tape() as tape:
        tape.backward(bce_with_logits(xt, ts))
    closed = (1 / (1 + np.exp(-xs)) - ts) / xs.size
    (num,) = numeric_grad(lambda a: bce_with_logits(T.Tensor(a), ts).item(), [xs])
    grad_err = max(max_rel_error(closed, xt.grad), max_rel_error(num, xt.grad))

    ok = gap < 1e-10 and np.isfinite(extreme) and exact and grad_err < 1e-4
    verdict(3, "loss algebra", ok,
            f"|stable-naive| {gap:.1e} < 1e-10 on |x|<=20, loss at |x|=1e4 finite ({extreme:g}), "
            f"alpha in {{0,1}} exact={exact}, sigma(x)-t gradient error {grad_err:.1e}",
            time.perf_counter() - t0, 10)


# --- 4. efficacy-aware fusion oracle --------------------------------------

def test_criterion_4_efficacy_oracle(verdict):
    t0 = time.perf_counter()
    matches = 0
    for seed in range(10):
        pairs = build_visit_pairs(generate_synthetic_cohort(seed, 60, noise_treatment_rate=0.5))[:200]
        table = rank_efficacy(pairs)
        oracle = brute_efficacy(pairs)
        same = {k: (e.exposed, e.resolved) for k, e in table.entries.items()} == oracle
        for d in sorted({d for d, _, _ in oracle}):
            for k in (1, 3, 50):
                same &= top_k_treatments(table, d, k) == brute_top_k(oracle, d, k)
        matches += same

    disease = default_registry().names[0]
    planted = {(disease, "M01"): 0.9, (disease, "M02"): 0.1}
    recovered = 0
    for seed in range(20):
        recs = generate_synthetic_cohort(seed, 500, planted_efficacy=planted)
        table = rank_efficacy(build_visit_pairs(recs))
        recovered += top_k_treatments(table, disease, 1)[0][0] == "M01"
    ok = matches == 10 and recovered >= 19
    verdict(4, "efficacy oracle", ok,
            f"brute-force recount/sort exact on {matches}/10 cohorts (<=200 pairs); "
            f"planted treatment ranked first in {recovered}/20 seeds (need >=19)",
            time.perf_counter() - t0, 120)


# --- 5. metric oracles ----------------------------------------------------

def test_criterion_5_metric_oracles(verdict):
    t0 = time.perf_counter()
    worst, labels, partitions = 0.0, 0, True
    for seed, n, ties in ((0, 40, False), (1, 40, True), (2, 200, False), (3, 200, True), (4, 17, True)):
        p = fixture(seed, n=n, ties=ties)
        for j in range(25):
            s, y = p.scores[:, j], p.truths[:, j]
            if 0 < y.sum() < n:
                worst = max(worst, abs(auroc_single(s, y) - pairwise_auroc(s, y)),
                            abs(aupr_single(s, y) - enumerated_aupr(s, y)))
                labels += 1
        partitions &= bool(np.all(confusion_per_label(p).sum(axis=1) == n))
    ok = worst < 1e-12 and partitions
    verdict(5, "metric oracles", ok,
            f"max |fast-brute| {worst:.1e} < 1e-12 over {labels} labels; confusion rows partition n={partitions}",
            time.perf_counter() - t0, 30)


# --- 6. distillation benefit ----------------------------------------------

DISTILL_CFG = RunConfig(n_patients=400, top_k=2, max_seq_len=96, batch_size=16,
                        teacher=ModelSpec(2, 2, 64, 128), student=ModelSpec(1, 2, 16, 32),
                        rank=8, pretrain_epochs=2, teacher_epochs=20, teacher_lr=5e-3,
                        epochs=15, lr=5e-3)


def test_criterion_6_distillation_benefit(verdict):
    t0 = time.perf_counter()
    cfg = DISTILL_CFG
    corpus = P.fuse(generate_synthetic_cohort(cfg.seed, cfg.n_patients), cfg)
    vocab = P.build_vocab(corpus.train)
    train = Dataset.from_samples(corpus.train, vocab, cfg.max_seq_len)
    test = Dataset.from_samples(corpus.test, vocab, cfg.max_seq_len)
    teacher = P.train_teacher(train, vocab, cfg).model
    teacher_f1 = P.evaluate_model(teacher, test).macro_f1
    soft = P.extract_soft_labels(teacher, train, vocab, cfg)
    f1 = {0.9: [], 1.0: []}
    for seed in range(5):
        for alpha in f1:
            student, _ = P.train_student(train, soft, len(vocab), cfg, alpha=alpha, seed=seed)
            f1[alpha].append(P.evaluate_model(student, test).macro_f1)
    diffs = [a - b for a, b in zip(f1[0.9], f1[1.0])]
    med = statistics.median(diffs)
    detail = (f"teacher F1 {teacher_f1:.3f}; student F1 alpha=0.9 {[round(v, 3) for v in f1[0.9]]} "
              f"(median {statistics.median(f1[0.9]):.3f}) vs alpha=1.0 {[round(v, 3) for v in f1[1.0]]} "
              f"(median {statistics.median(f1[1.0]):.3f}); median paired difference {med:+.3f} >= 0")
    verdict(6, "distillation benefit", med >= 0, detail, time.perf_counter() - t0, 600)


# --- 7. efficiency --------------------------------------------------------

def test_criterion_7_efficiency(verdict):
    t0 = time.perf_counter()
    cfg = RunConfig()
    corpus = P.fuse(generate_synthetic_cohort(cfg.seed, 60), cfg)
    vocab = P.build_vocab(corpus.train)
    data = Dataset.from_samples(corpus.train[:40], vocab, cfg.max_seq_len)
    teacher = EncoderModel(P.model_config(cfg, "teacher", len(vocab)), seed=0)
    teacher.attach_lora(cfg.rank, seed=1)
    student = EncoderModel(P.model_config(cfg, "student", len(vocab)), seed=2)
    ref = bench_inference(teacher, data, cfg.bench_repeats, cfg.bench_warmup, name="teacher")
    sub = bench_inference(student, data, cfg.bench_repeats, cfg.bench_warmup, name="student", reference=ref)
    shrink = ref.parameter_count / sub.parameter_count
    ok = sub.speedup >= 3 and shrink >= 4
    verdict(7, "efficiency", ok,
            f"student {sub.speedup:.1f}x faster (>=3) at {sub.mean_latency_s * 1e3:.2f} ms vs "
            f"{ref.mean_latency_s * 1e3:.2f} ms; {shrink:.1f}x fewer parameters (>=4) "
            f"({sub.parameter_count} vs {ref.parameter_count})",
            time.perf_counter() - t0, 120)


# --- 8/9. CLI stages ------------------------------------------------------

SMALL_RUN = """\
n_patients = 120
top_k = 2
max_seq_len = 64
batch_size = 16
teacher.layers = 1
teacher.heads = 2
teacher.d_model = 16
teacher.d_ff = 32
student.layers = 1
student.heads = 2
student.d_model = 8
student.d_ff = 16
rank = 2
pretrain_epochs = 1
teacher_epochs = 2
epochs = 2
"""


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _text_hash(samples):
    h = hashlib.sha256()
    for s in samples:
        h.update(s.text.encode())
        h.update(b"\0")
    return h.hexdigest()


def test_criterion_8_ablation(tmp_path, verdict):
    t0 = time.perf_counter()
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL_RUN)
    out = tmp_path / "run"
    codes = [main([c, "--config", str(cfg), "--out", str(out)]) for c in ("synth", "fuse", "ablate")]
    with open(out / "ablation" / "ablation.csv") as fh:
        rows = list(csv.DictReader(fh))
    manifest = json.loads((out / "manifests" / "ablate.json").read_text())
    fused = out / "fused"
    fused_hash = _text_hash(read_samples(fused / "train.jsonl") + read_samples(fused / "test.jsonl"))
    files_hashed = all(manifest["inputs"].get(f"fused/{s}.jsonl") == _sha(fused / f"{s}.jsonl")
                       for s in ("train", "test"))
    combos = sorted((r["eadf"], r["lorckd"]) for r in rows)
    eadf_ok = all(r["input_hash"] == fused_hash for r in rows if r["eadf"] == "1")
    raw_differs = all(r["input_hash"] != fused_hash for r in rows if r["eadf"] == "0")
    ok = (codes == [0, 0, 0] and combos == [("0", "0"), ("0", "1"), ("1", "0"), ("1", "1")]
          and eadf_ok and raw_differs and files_hashed)
    verdict(8, "ablation harness", ok,
            f"{len(rows)} combinations; eadf rows consume fused text (hash match={eadf_ok}, "
            f"manifest file hashes={files_hashed}); raw rows differ={raw_differs}",
            time.perf_counter() - t0, 600)


def test_criterion_9_reproducibility(tmp_path, verdict):
    t0 = time.perf_counter()
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL_RUN)
    out = tmp_path / "run"
    for c in ("synth", "fuse", "train-teacher", "distill", "eval"):
        assert main([c, "--config", str(cfg), "--out", str(out)]) == 0
    results = {}
    for c in ("fuse", "train-teacher", "distill", "eval-student"):
        ok, diffs = replay(str(out / "manifests" / f"{c}.json"), str(tmp_path / f"replay-{c}"))
        results[c] = (ok, diffs)
    ok = all(r[0] for r in results.values())
    detail = ", ".join(f"{c}={'identical' if r[0] else r[1]}" for c, r in results.items())
    verdict(9, "reproducibility", ok, f"replayed {len(results)} commands: {detail}",
            time.perf_counter() - t0, 600)
