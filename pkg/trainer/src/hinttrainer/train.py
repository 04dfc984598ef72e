"""Supervised distillation of step-hint generation.

The causal LM objective covers only the hint tokens: every prompt position
is masked out of the loss, so gradients flow exclusively from predicting
the hint given (problem, reasoning state, hint prefix). Training follows
the configured recipe (cosine schedule with warmup, gradient accumulation,
step-based evaluation with early stopping on validation loss) and emits
the adapter weights, a run manifest recording what actually ran, and a
loss curve CSV.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch
from torch import nn
from torch.optim.lr_scheduler import LambdaLR

from .config import TrainerConfig
from .data import HintInstance, load_instances, serialize_instance, split_by_problem
from .lora import inject_adapters, load_adapter_state, adapter_state_dict, save_adapter, trainable_parameters

logger = logging.getLogger(__name__)

IGNORE_INDEX = -100


class TrainError(RuntimeError):
    pass


@dataclass
class TrainResult:
    steps: int
    train_losses: list[float]
    eval_steps: list[int]
    val_losses: list[float]
    best_val_loss: float | None
    stopped_early: bool
    adapter_dir: Path
    manifest_path: Path
    loss_curve_path: Path


def encode_instance(instance: HintInstance, tokenizer, max_seq_len: int,
                    mask_prompt: bool = True) -> dict:
    """Token ids and labels for one (prompt, hint) pair.

    With ``mask_prompt`` the prompt positions carry IGNORE_INDEX so the loss
    is computed over hint tokens only; without it every position is
    supervised (useful only for verifying that the mask matters).
    """
    prompt, target = serialize_instance(instance)
    prompt_ids = tokenizer(prompt, add_special_tokens=False)["input_ids"]
    target_ids = tokenizer(target, add_special_tokens=False)["input_ids"]
    if tokenizer.eos_token_id is not None:
        target_ids = target_ids + [tokenizer.eos_token_id]
    input_ids = (prompt_ids + target_ids)[:max_seq_len]
    n_prompt = min(len(prompt_ids), len(input_ids))
    if mask_prompt:
        labels = [IGNORE_INDEX] * n_prompt + list(input_ids[n_prompt:])
    else:
        labels = list(input_ids)
    if all(l == IGNORE_INDEX for l in labels):
        raise TrainError(
            f"instance {instance.problem_id}/{instance.step_index}: prompt fills "
            f"the whole {max_seq_len}-token window, no hint tokens left to learn from"
        )
    return {"input_ids": input_ids, "labels": labels}


def collate(encoded: Sequence[dict], pad_token_id: int) -> dict[str, torch.Tensor]:
    width = max(len(e["input_ids"]) for e in encoded)
    input_ids, labels, attention = [], [], []
    for e in encoded:
        pad = width - len(e["input_ids"])
        input_ids.append(list(e["input_ids"]) + [pad_token_id] * pad)
        labels.append(list(e["labels"]) + [IGNORE_INDEX] * pad)
        attention.append([1] * len(e["input_ids"]) + [0] * pad)
    return {
        "input_ids": torch.tensor(input_ids, dtype=torch.long),
        "labels": torch.tensor(labels, dtype=torch.long),
        "attention_mask": torch.tensor(attention, dtype=torch.long),
    }


def batch_loss(model: nn.Module, batch: dict[str, torch.Tensor]) -> torch.Tensor:
    out = model(input_ids=batch["input_ids"], attention_mask=batch["attention_mask"],
                labels=batch["labels"])
    return out.loss


def _load_base(config: TrainerConfig):
    from transformers import AutoModelForCausalLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(config.base_model_id)
    if tokenizer.pad_token_id is None:
        tokenizer.pad_token = tokenizer.eos_token
    quantization = "none"
    load_kwargs: dict = {}
    if config.quantization == "4bit_if_available" and torch.cuda.is_available():
        try:
            from transformers import BitsAndBytesConfig

            load_kwargs["quantization_config"] = BitsAndBytesConfig(load_in_4bit=True)
            quantization = "4bit_nf4"
        except Exception:  # noqa: BLE001  bitsandbytes missing: run unquantized
            quantization = "none (bitsandbytes unavailable)"
    model = AutoModelForCausalLM.from_pretrained(config.base_model_id, **load_kwargs)
    return model, tokenizer, quantization


def _cosine_with_warmup(optimizer, total_steps: int, warmup_ratio: float) -> LambdaLR:
    warmup = max(1, math.ceil(total_steps * warmup_ratio))

    def factor(step: int) -> float:
        if step < warmup:
            return (step + 1) / warmup
        progress = (step - warmup) / max(1, total_steps - warmup)
        return 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))

    return LambdaLR(optimizer, factor)


def _evaluate(model, encoded_val, pad_token_id, per_device_batch) -> float:
    model.eval()
    losses = []
    with torch.no_grad():
        for start in range(0, len(encoded_val), per_device_batch):
            batch = collate(encoded_val[start: start + per_device_batch], pad_token_id)
            losses.append(float(batch_loss(model, batch)))
    model.train()
    return sum(losses) / len(losses)


def train(config: TrainerConfig, training_jsonl: str | Path, out_dir: str | Path,
          device: str = "cpu") -> TrainResult:
    """Run the fine-tune and emit adapter, manifest and loss curve."""
    if not config.base_model_id:
        raise TrainError("config.base_model_id is required")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(config.seed)

    instances = load_instances(training_jsonl)
    train_set, val_set = split_by_problem(instances, config.validation_split, config.seed)
    logger.info("loaded %d instances (%d train / %d val problems-wise)",
                len(instances), len(train_set), len(val_set))

    model, tokenizer, quantization = _load_base(config)
    model.to(device)
    wrapped = inject_adapters(model, config.target_modules, config.lora_rank,
                              config.lora_alpha, config.lora_dropout)
    checkpointing = False
    if config.gradient_checkpointing and hasattr(model, "gradient_checkpointing_enable"):
        try:
            model.gradient_checkpointing_enable()
            checkpointing = True
        except Exception:  # noqa: BLE001  tiny test models may not support it
            checkpointing = False
    model.train()

    encoded_train = [encode_instance(i, tokenizer, config.max_seq_len) for i in train_set]
    encoded_val = [encode_instance(i, tokenizer, config.max_seq_len) for i in val_set]
    pad_id = tokenizer.pad_token_id

    params = trainable_parameters(model)
    optimizer_name = "adamw_torch"
    if quantization.startswith("4bit"):
        # the 8-bit paged optimizer rides along with the quantized path
        try:
            import bitsandbytes as bnb

            optimizer = bnb.optim.PagedAdamW8bit(params, lr=config.learning_rate)
            optimizer_name = "paged_adamw_8bit"
        except Exception:  # noqa: BLE001
            optimizer = torch.optim.AdamW(params, lr=config.learning_rate)
    else:
        optimizer = torch.optim.AdamW(params, lr=config.learning_rate)

    steps_per_epoch = max(1, math.ceil(len(encoded_train) /
                                       (config.per_device_batch * config.grad_accum)))
    total_steps = steps_per_epoch * config.epochs
    if config.max_steps is not None:
        total_steps = min(total_steps, config.max_steps)
    scheduler = _cosine_with_warmup(optimizer, total_steps, config.warmup_ratio)

    train_losses: list[float] = []
    eval_steps: list[int] = []
    val_losses: list[float] = []
    best_val = None
    best_state = None
    evals_since_best = 0
    stopped_early = False

    step = 0
    micro_cursor = 0
    while step < total_steps:
        optimizer.zero_grad()
        accumulated = 0.0
        for _ in range(config.grad_accum):
            batch_items = []
            for _ in range(config.per_device_batch):
                batch_items.append(encoded_train[micro_cursor % len(encoded_train)])
                micro_cursor += 1
            batch = collate(batch_items, pad_id)
            loss = batch_loss(model, batch) / config.grad_accum
            loss.backward()
            accumulated += float(loss.detach()) * config.grad_accum
        optimizer.step()
        scheduler.step()
        step += 1
        step_loss = accumulated / config.grad_accum
        train_losses.append(step_loss)
        logger.info("step %d/%d loss %.4f", step, total_steps, step_loss)

        if encoded_val and step % config.eval_every_steps == 0:
            val = _evaluate(model, encoded_val, pad_id, config.per_device_batch)
            eval_steps.append(step)
            val_losses.append(val)
            if best_val is None or val < best_val:
                best_val = val
                best_state = adapter_state_dict(model)
                evals_since_best = 0
            else:
                evals_since_best += 1
                if evals_since_best >= config.early_stop_patience:
                    logger.info("early stop at step %d (no val improvement in %d evals)",
                                step, evals_since_best)
                    stopped_early = True
                    break

    if best_state is not None:
        load_adapter_state(model, best_state)

    if len(train_losses) >= 2 and train_losses[-1] >= train_losses[0]:
        logger.warning("training loss did not decrease (%.4f -> %.4f); "
                       "check the learning rate and data",
                       train_losses[0], train_losses[-1])

    adapter_dir = save_adapter(model, out_dir / "adapter", {
        "base_model_id": config.base_model_id,
        "lora_rank": config.lora_rank,
        "lora_alpha": config.lora_alpha,
        "lora_dropout": config.lora_dropout,
        "target_modules": list(config.target_modules),
        "wrapped_modules": wrapped,
    })

    manifest = {
        "config": config.to_manifest(),
        "ran": {
            "optimizer": optimizer_name,
            "optimizer_defaults": {"weight_decay": optimizer.defaults.get("weight_decay"),
                                   "betas": list(optimizer.defaults.get("betas", ()))},
            "quantization": quantization,
            "gradient_checkpointing": checkpointing,
            "device": device,
            "total_steps": step,
            "steps_planned": total_steps,
            "stopped_early": stopped_early,
            "wrapped_modules": wrapped,
            "n_instances": len(instances),
            "n_train": len(train_set),
            "n_val": len(val_set),
            "best_val_loss": best_val,
        },
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    loss_curve_path = out_dir / "loss_curve.csv"
    with loss_curve_path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("step", "train_loss", "val_loss"))
        val_at = dict(zip(eval_steps, val_losses))
        for i, loss_value in enumerate(train_losses, 1):
            writer.writerow((i, f"{loss_value:.6f}",
                             f"{val_at[i]:.6f}" if i in val_at else ""))

    return TrainResult(
        steps=step,
        train_losses=train_losses,
        eval_steps=eval_steps,
        val_losses=val_losses,
        best_val_loss=best_val,
        stopped_early=stopped_early,
        adapter_dir=adapter_dir,
        manifest_path=manifest_path,
        loss_curve_path=loss_curve_path,
    )
