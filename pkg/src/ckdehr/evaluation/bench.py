"""Single-sample inference latency and model size."""

from __future__ import annotations

import json
import os
import platform
import statistics
import time
from dataclasses import asdict, dataclass

from threadpoolctl import threadpool_limits

from .. import checkpoint
from ..distill.data import Dataset
from ..models.encoder import EncoderModel


@dataclass
class BenchResult:
    name: str
    mean_latency_s: float
    std_latency_s: float
    repeats: int
    parameter_count: int
    model_bytes: int
    reference: str | None = None
    speedup: float | None = None

    def against(self, reference: "BenchResult") -> "BenchResult":
        """Copy with ``speedup = reference latency / own latency``."""
        return BenchResult(self.name, self.mean_latency_s, self.std_latency_s, self.repeats,
                           self.parameter_count, self.model_bytes, reference.name,
                           reference.mean_latency_s / self.mean_latency_s)


def cpu_model() -> str:
    try:
        with open("/proc/cpuinfo", encoding="utf-8") as fh:
            for line in fh:
                if line.startswith("model name"):
                    return line.split(":", 1)[1].strip()
    except OSError:
        pass
    return platform.processor() or platform.machine()


def environment() -> dict:
    return {"cpu_model": cpu_model(), "cpu_count": os.cpu_count(), "python": platform.python_version(),
            "platform": platform.platform()}


def bench_inference(model: EncoderModel, samples: Dataset, repeats: int = 30, warmup: int = 5,
                    name: str = "model", reference: BenchResult | None = None) -> BenchResult:
    """Time batch-size-1 label-logit forwards on one BLAS thread.

    Sample ``i % len(samples)`` is used for repeat ``i``; warm-up calls are
    not timed.
    """
    if repeats < 30:
        raise ValueError("repeats must be at least 30")
    if len(samples) == 0:
        raise ValueError("no samples to benchmark")
    times = []
    with threadpool_limits(limits=1):
        for i in range(warmup + repeats):
            ids, mask = samples.batch([i % len(samples)])
            t0 = time.perf_counter()
            model.label_logits(ids, mask)
            dt = time.perf_counter() - t0
            if i >= warmup:
                times.append(dt)
    result = BenchResult(name, statistics.fmean(times), statistics.stdev(times), repeats,
                         model.parameter_count(), len(checkpoint.dumps(model.state_dict())))
    return result.against(reference) if reference is not None else result


def bench_report(results: list[BenchResult]) -> str:
    return json.dumps({"environment": environment(), "results": [asdict(r) for r in results]},
                      indent=2, sort_keys=True)
