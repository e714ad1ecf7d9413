"""Clinical knowledge distillation over fused EHR visit text."""

__version__ = "0.1.0"
