"""Distills step-hint generation into a compact causal LM via low-rank adapters."""

from .config import TrainerConfig
from .data import HintInstance, load_instances, serialize_instance, serialize_prompt, split_by_problem
from .lora import LoraLinear, inject_adapters, load_adapter, save_adapter
from .serve import generate_hint, load_model_with_adapter, serve_check
from .train import TrainResult, batch_loss, collate, encode_instance, train

__version__ = "0.1.0"

__all__ = [
    "TrainerConfig",
    "HintInstance", "load_instances", "serialize_instance", "serialize_prompt",
    "split_by_problem",
    "LoraLinear", "inject_adapters", "load_adapter", "save_adapter",
    "generate_hint", "load_model_with_adapter", "serve_check",
    "TrainResult", "train", "collate", "encode_instance", "batch_loss",
]
