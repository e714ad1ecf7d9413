"""Tokenizer, transformer encoders, LoRA adapters and the label projection head."""

from .encoder import (STUDENT_DEFAULT, TEACHER_DEFAULT, ConfigError, ContractError, EncoderConfig,
                      EncoderModel, LoraAdapter, Mlaph, apply_lora, forward_encoder, lora_trainable_count,
                      mlaph_forward, vocab_logits, walk_lora_parameters)
from .tokenizer import Vocabulary, encode_batch, fit_vocabulary, split_words, tokenize

__all__ = [
    "STUDENT_DEFAULT", "TEACHER_DEFAULT", "ConfigError", "ContractError", "EncoderConfig",
    "EncoderModel", "LoraAdapter", "Mlaph", "Vocabulary", "apply_lora", "encode_batch",
    "fit_vocabulary", "forward_encoder", "lora_trainable_count", "mlaph_forward", "split_words",
    "tokenize", "vocab_logits", "walk_lora_parameters",
]
