"""Low-rank adapters for linear projection layers.

The base weight stays frozen; a rank-r bypass (B @ A, B zero-initialized so
the wrapped model starts out identical to the base) is the only trainable
part. Injection targets modules by name suffix, which on Llama-family
models covers the attention projections (q/k/v/o) and the feed-forward
projections (gate/up/down).
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import torch
from torch import nn


class LoraError(RuntimeError):
    pass


class LoraLinear(nn.Module):
    def __init__(self, base: nn.Linear, rank: int, alpha: int, dropout: float):
        super().__init__()
        self.base = base
        self.lora_a = nn.Linear(base.in_features, rank, bias=False)
        self.lora_b = nn.Linear(rank, base.out_features, bias=False)
        self.scaling = alpha / rank
        self.dropout = nn.Dropout(dropout)
        nn.init.kaiming_uniform_(self.lora_a.weight, a=math.sqrt(5))
        nn.init.zeros_(self.lora_b.weight)
        for param in self.base.parameters():
            param.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.lora_b(self.lora_a(self.dropout(x))) * self.scaling


def inject_adapters(model: nn.Module, target_suffixes, rank: int, alpha: int,
                    dropout: float) -> list[str]:
    """Replace every matching nn.Linear with a LoraLinear; freeze the rest.

    Returns the qualified names of the wrapped modules.
    """
    for param in model.parameters():
        param.requires_grad_(False)
    wrapped: list[str] = []
    targets = tuple(target_suffixes)
    for name, module in list(model.named_modules()):
        leaf = name.rsplit(".", 1)[-1]
        if leaf not in targets or not isinstance(module, nn.Linear):
            continue
        parent = model.get_submodule(name.rsplit(".", 1)[0]) if "." in name else model
        setattr(parent, leaf, LoraLinear(module, rank, alpha, dropout))
        wrapped.append(name)
    if not wrapped:
        raise LoraError(
            f"no linear modules matched target suffixes {list(targets)}; "
            "check the model family's projection names"
        )
    return wrapped


def trainable_parameters(model: nn.Module):
    return [p for p in model.parameters() if p.requires_grad]


def adapter_state_dict(model: nn.Module) -> dict[str, torch.Tensor]:
    state = {}
    for name, module in model.named_modules():
        if isinstance(module, LoraLinear):
            state[f"{name}.lora_a.weight"] = module.lora_a.weight.detach().clone()
            state[f"{name}.lora_b.weight"] = module.lora_b.weight.detach().clone()
    return state


def load_adapter_state(model: nn.Module, state: dict[str, torch.Tensor]) -> None:
    own = dict(model.named_modules())
    for key, tensor in state.items():
        module_name, which, _ = key.rsplit(".", 2)
        module = own.get(module_name)
        if not isinstance(module, LoraLinear):
            raise LoraError(f"adapter weight {key!r} has no LoraLinear to land in")
        target = module.lora_a if which == "lora_a" else module.lora_b
        with torch.no_grad():
            target.weight.copy_(tensor)


def save_adapter(model: nn.Module, out_dir: str | Path, config_blob: dict) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.save(adapter_state_dict(model), out_dir / "lora_weights.pt")
    (out_dir / "adapter_config.json").write_text(
        json.dumps(config_blob, indent=2) + "\n", encoding="utf-8"
    )
    return out_dir


def load_adapter(model: nn.Module, adapter_dir: str | Path) -> dict:
    adapter_dir = Path(adapter_dir)
    blob = json.loads((adapter_dir / "adapter_config.json").read_text("utf-8"))
    inject_adapters(model, blob["target_modules"], blob["lora_rank"],
                    blob["lora_alpha"], blob["lora_dropout"])
    state = torch.load(adapter_dir / "lora_weights.pt", map_location="cpu",
                       weights_only=True)
    load_adapter_state(model, state)
    return blob
