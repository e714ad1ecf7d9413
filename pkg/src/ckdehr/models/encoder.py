"""Post-LN transformer encoder with LoRA-capable attention projections and a
multi-label projection head."""

from __future__ import annotations

import copy
import math
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from .. import checkpoint
from .. import tensor as T
from ..rng import derive, make_rng
from ..tensor import Tensor

NUM_LABELS = 25


class ConfigError(ValueError):
    pass


class ContractError(ValueError):
    pass


@dataclass
class EncoderConfig:
    layers: int = 2
    heads: int = 2
    d_model: int = 64
    d_ff: int = 256
    max_seq_len: int = 160
    vocab_size: int = 512
    num_labels: int = NUM_LABELS
    lora_rank: int = 0
    pooling: str = "mean"
    causal: bool = False
    activation: str = "relu"

    def __post_init__(self):
        for name in ("layers", "heads", "d_model", "d_ff", "max_seq_len", "vocab_size", "num_labels"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.d_model % self.heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        if self.lora_rank < 0:
            raise ConfigError("lora_rank must be >= 0")
        if self.lora_rank and self.lora_rank >= self.d_model:
            raise ConfigError(f"LoRA rank {self.lora_rank} >= min(d, k) = {self.d_model}")
        if self.pooling not in ("last", "mean"):
            raise ConfigError(f"unknown pooling mode {self.pooling!r}")
        if self.activation not in ("relu", "gelu"):
            raise ConfigError(f"unknown activation {self.activation!r}")

    def to_text(self) -> str:
        return "".join(f"{k} = {str(v).lower() if isinstance(v, bool) else v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str) -> "EncoderConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in types:
                raise ConfigError(f"unknown model config key {k!r}")
            kind = types[k]
            if kind in ("bool", bool):
                kw[k] = v.lower() in ("1", "true", "yes")
            elif kind in ("int", int):
                kw[k] = int(v)
            else:
                kw[k] = v
        return cls(**kw)


TEACHER_DEFAULT = dict(layers=4, heads=4, d_model=128, d_ff=512)
STUDENT_DEFAULT = dict(layers=2, heads=2, d_model=64, d_ff=128)


class LoraAdapter:
    """Rank-r update ``B @ A`` on a frozen ``d x k`` projection (B starts at zero)."""

    def __init__(self, base: Tensor, rank: int, rng: np.random.Generator, target: str = ""):
        d, k = base.shape
        if rank < 1 or rank >= min(d, k):
            raise ConfigError(f"LoRA rank {rank} must satisfy 1 <= r < min(d, k) = {min(d, k)}")
        self.base = base
        self.rank = rank
        self.target = target
        bound = 1.0 / math.sqrt(k)
        self.A = Tensor(rng.uniform(-bound, bound, size=(rank, k)), requires_grad=True)
        self.B = Tensor(np.zeros((d, rank)), requires_grad=True)

    @property
    def trainable_count(self) -> int:
        return self.A.size + self.B.size

    def merged_weight(self) -> np.ndarray:
        return self.base.data + self.B.data @ self.A.data


def apply_lora(adapter: LoraAdapter, x: Tensor) -> Tensor:
    """``x @ (W + B A)^T`` computed as ``x W^T + (x A^T) B^T``."""
    base = T.matmul(x, T.swap_last(adapter.base))
    delta = T.matmul(T.matmul(x, T.swap_last(adapter.A)), T.swap_last(adapter.B))
    return base + delta


# Initialisation scales. Token embeddings start larger than position
# embeddings so token identity dominates the first residual stream; dense
# weights use fan-in scaling so activations keep unit scale into each norm.
TOKEN_EMB_STD = 0.5
POSITION_EMB_STD = 0.1


class Linear:
    def __init__(self, d_out: int, d_in: int, rng: np.random.Generator, std: float | None = None):
        std = 1.0 / math.sqrt(d_in) if std is None else std
        self.weight = Tensor(rng.normal(0.0, std, size=(d_out, d_in)), requires_grad=True)
        self.bias = Tensor(np.zeros(d_out), requires_grad=True)
        self.lora: LoraAdapter | None = None

    def __call__(self, x: Tensor) -> Tensor:
        out = apply_lora(self.lora, x) if self.lora is not None else T.matmul(x, T.swap_last(self.weight))
        return out + self.bias


class Mlaph:
    """Pool the hidden states, then map affinely to one logit per label."""

    def __init__(self, d_model: int, num_labels: int, rng: np.random.Generator, pooling: str = "mean"):
        if pooling not in ("last", "mean"):
            raise ConfigError(f"unknown pooling mode {pooling!r}")
        self.pooling = pooling
        self.weight = Tensor(rng.normal(0.0, 1.0 / math.sqrt(d_model), size=(d_model, num_labels)),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(num_labels), requires_grad=True)

    @property
    def num_labels(self) -> int:
        return self.weight.shape[1]

    def pool(self, H: Tensor, mask: np.ndarray) -> Tensor:
        mask = np.asarray(mask, dtype=bool)
        counts = mask.sum(axis=1)
        if np.any(counts == 0):
            raise ContractError(f"rows {np.flatnonzero(counts == 0).tolist()} have no unmasked position to pool")
        if self.pooling == "last":
            last = mask.shape[1] - 1 - np.argmax(mask[:, ::-1], axis=1)
            return T.select_positions(H, last)
        w = mask / counts[:, None]
        return T.tsum(H * w[:, :, None], axis=1)

    def __call__(self, H: Tensor, mask: np.ndarray) -> Tensor:
        return mlaph_forward(self, H, mask)


def mlaph_forward(head: Mlaph, H: Tensor, mask: np.ndarray) -> Tensor:
    if H.shape[-1] != head.weight.shape[0]:
        raise ContractError(f"hidden size {H.shape[-1]} != head input {head.weight.shape[0]}")
    return T.matmul(head.pool(H, mask), head.weight) + head.bias


class EncoderLayer:
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        d = cfg.d_model
        self.heads = cfg.heads
        self.act = T.relu if cfg.activation == "relu" else T.gelu
        self.q = Linear(d, d, rng)
        self.k = Linear(d, d, rng)
        self.v = Linear(d, d, rng)
        self.o = Linear(d, d, rng)
        self.ln1_g = Tensor(np.ones(d), requires_grad=True)
        self.ln1_b = Tensor(np.zeros(d), requires_grad=True)
        self.ff1 = Linear(cfg.d_ff, d, rng)
        self.ff2 = Linear(d, cfg.d_ff, rng)
        self.ln2_g = Tensor(np.ones(d), requires_grad=True)
        self.ln2_b = Tensor(np.zeros(d), requires_grad=True)

    def named(self, prefix: str):
        for name in ("q", "k", "v", "o", "ff1", "ff2"):
            lin = getattr(self, name)
            yield f"{prefix}.{name}.weight", lin.weight
            yield f"{prefix}.{name}.bias", lin.bias
            if lin.lora is not None:
                yield f"{prefix}.{name}.lora_A", lin.lora.A
                yield f"{prefix}.{name}.lora_B", lin.lora.B
        for name in ("ln1_g", "ln1_b", "ln2_g", "ln2_b"):
            yield f"{prefix}.{name}", getattr(self, name)

    def __call__(self, x: Tensor, attn_mask: np.ndarray) -> Tensor:
        b, s, d = x.shape
        h, dh = self.heads, d // self.heads

        def split(t):
            return T.transpose(T.reshape(t, (b, s, h, dh)), (0, 2, 1, 3))

        q, k, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        scores = T.matmul(q, T.swap_last(k)) * (1.0 / math.sqrt(dh))
        probs = T.softmax_rows(scores, attn_mask)
        ctx = T.reshape(T.transpose(T.matmul(probs, v), (0, 2, 1, 3)), (b, s, d))
        x = T.layer_norm(x + self.o(ctx), self.ln1_g, self.ln1_b)
        ff = self.ff2(self.act(self.ff1(x)))
        return T.layer_norm(x + ff, self.ln2_g, self.ln2_b)


class EncoderModel:
    """Token + position embeddings, a stack of encoder layers, and a label head.

    The vocabulary projection is tied to the token embedding.
    """

    def __init__(self, cfg: EncoderConfig, seed: int = 0):
        self.config = cfg
        rng = make_rng(derive(seed, "encoder-init"))
        self.tok_emb = Tensor(rng.normal(0.0, TOKEN_EMB_STD, size=(cfg.vocab_size, cfg.d_model)), requires_grad=True)
        self.pos_emb = Tensor(rng.normal(0.0, POSITION_EMB_STD, size=(cfg.max_seq_len, cfg.d_model)),
                              requires_grad=True)
        self.layers = [EncoderLayer(cfg, rng) for _ in range(cfg.layers)]
        self.head = Mlaph(cfg.d_model, cfg.num_labels, rng, cfg.pooling)
        if cfg.lora_rank:
            self.attach_lora(cfg.lora_rank, seed)

    # parameter bookkeeping

    def named_parameters(self):
        yield "tok_emb", self.tok_emb
        yield "pos_emb", self.pos_emb
        for i, layer in enumerate(self.layers):
            yield from layer.named(f"layers.{i}")
        yield "head.weight", self.head.weight
        yield "head.bias", self.head.bias

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def trainable_parameters(self) -> list[Tensor]:
        return [p for p in self.parameters() if p.requires_grad]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def adapters(self) -> list[LoraAdapter]:
        return [lin.lora for layer in self.layers for lin in (layer.q, layer.k, layer.v) if lin.lora is not None]

    def attach_lora(self, rank: int, seed: int = 0) -> None:
        """Put rank-``rank`` adapters on every Q/K/V projection and freeze the rest of the encoder.

        The label head stays trainable.
        """
        rng = make_rng(derive(seed, "lora-init"))
        for layer in self.layers:
            for name in ("q", "k", "v"):
                lin = getattr(layer, name)
                lin.lora = LoraAdapter(lin.weight, rank, rng, target=name.upper())
        self.config.lora_rank = rank
        for name, p in self.named_parameters():
            p.requires_grad = "lora_" in name or name.startswith("head.")

    def replace_head(self, num_labels: int, seed: int = 0) -> None:
        rng = make_rng(derive(seed, f"head-{num_labels}"))
        self.head = Mlaph(self.config.d_model, num_labels, rng, self.config.pooling)
        self.config.num_labels = num_labels

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        if missing:
            raise ContractError(f"checkpoint is missing tensors: {sorted(missing)[:5]}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise ContractError(f"{name}: checkpoint shape {state[name].shape} != {p.shape}")
            p.data = np.array(state[name], dtype=np.float64)

    def copy(self) -> "EncoderModel":
        return copy.deepcopy(self)

    # forward passes

    def _check_ids(self, ids: np.ndarray) -> None:
        if ids.size and (ids.min() < 0 or ids.max() >= self.config.vocab_size):
            raise IndexError(f"token id out of range [0, {self.config.vocab_size})")
        if ids.shape[1] > self.config.max_seq_len:
            raise ContractError(f"sequence length {ids.shape[1]} exceeds max_seq_len {self.config.max_seq_len}")

    def encode(self, ids, mask) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != ids.shape:
            raise ContractError(f"mask shape {mask.shape} != ids shape {ids.shape}")
        self._check_ids(ids)
        b, s = ids.shape
        x = T.take_rows(self.tok_emb, ids) + T.take_rows(self.pos_emb, np.arange(s))
        attn = mask[:, None, None, :]
        if self.config.causal:
            attn = attn & np.tril(np.ones((s, s), dtype=bool))[None, None]
            # a row whose only visible keys are PAD would be empty
            attn = attn | np.eye(s, dtype=bool)[None, None]
        for layer in self.layers:
            x = layer(x, attn)
        return x

    def label_logits(self, ids, mask) -> Tensor:
        return mlaph_forward(self.head, self.encode(ids, mask), mask)

    def vocab_logits(self, ids, mask) -> Tensor:
        H = self.encode(ids, mask)
        return T.matmul(H, T.swap_last(self.tok_emb))

    # persistence

    def save(self, directory: str | os.PathLike) -> None:
        os.makedirs(directory, exist_ok=True)
        checkpoint.save(os.path.join(directory, "model.ckdf"), self.state_dict())
        with open(os.path.join(directory, "model.cfg"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.config.to_text())

    @classmethod
    def load(cls, directory: str | os.PathLike) -> "EncoderModel":
        with open(os.path.join(directory, "model.cfg"), encoding="utf-8") as fh:
            cfg = EncoderConfig.from_text(fh.read())
        model = cls(cfg)
        model.load_state_dict(checkpoint.load(os.path.join(directory, "model.ckdf")))
        return model


def forward_encoder(model: EncoderModel, ids, mask) -> Tensor:
    return model.encode(ids, mask)


def vocab_logits(model: EncoderModel, ids, mask) -> Tensor:
    return model.vocab_logits(ids, mask)


def lora_trainable_count(cfg: EncoderConfig, r: int) -> int:
    """Adapter parameters for Q, K, V in every layer: layers * 3 * r * (d + k)."""
    if r == 0:
        return 0
    return cfg.layers * 3 * r * (cfg.d_model + cfg.d_model)


def walk_lora_parameters(model: EncoderModel) -> int:
    return sum(p.size for name, p in model.named_parameters() if "lora_" in name and p.requires_grad)
