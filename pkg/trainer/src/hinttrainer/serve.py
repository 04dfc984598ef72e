"""Load a trained adapter and generate hints with it.

``generate_hint`` is the smoke-level serving check: greedy decoding from
the exact training-time prompt serialization, so two calls at temperature
zero produce identical text. For real deployment, mount the adapter behind
any OpenAI-compatible server (see README) and point the solving pipeline's
``backends.hinter`` at it; the pipeline itself needs no change.
"""

from __future__ import annotations

from pathlib import Path

import torch

from .data import serialize_prompt
from .lora import load_adapter


class ServeError(RuntimeError):
    pass


def load_model_with_adapter(adapter_dir: str | Path, base_model_id: str | None = None):
    from transformers import AutoModelForCausalLM, AutoTokenizer

    adapter_dir = Path(adapter_dir)
    if not adapter_dir.exists():
        raise ServeError(f"adapter directory not found: {adapter_dir}")
    import json

    blob = json.loads((adapter_dir / "adapter_config.json").read_text("utf-8"))
    base_id = base_model_id or blob.get("base_model_id")
    if not base_id:
        raise ServeError("no base model id in adapter config; pass base_model_id")
    tokenizer = AutoTokenizer.from_pretrained(base_id)
    if tokenizer.pad_token_id is None:
        tokenizer.pad_token = tokenizer.eos_token
    model = AutoModelForCausalLM.from_pretrained(base_id)
    load_adapter(model, adapter_dir)
    model.eval()
    return model, tokenizer


def generate_hint(model, tokenizer, statement: str, reasoning_state: str,
                  max_new_tokens: int = 64) -> str:
    """Greedy (deterministic) hint generation from (problem, work so far)."""
    prompt = serialize_prompt(statement, reasoning_state)
    inputs = tokenizer(prompt, return_tensors="pt", add_special_tokens=False)
    with torch.no_grad():
        output = model.generate(
            **inputs,
            max_new_tokens=max_new_tokens,
            do_sample=False,
            pad_token_id=tokenizer.pad_token_id,
        )
    completion = output[0][inputs["input_ids"].shape[1]:]
    text = tokenizer.decode(completion, skip_special_tokens=True).strip()
    if not text:
        raise ServeError("adapter generated empty text")
    return text


def serve_check(adapter_dir: str | Path, base_model_id: str | None,
                statement: str, reasoning_state: str) -> str:
    model, tokenizer = load_model_with_adapter(adapter_dir, base_model_id)
    return generate_hint(model, tokenizer, statement, reasoning_state)
