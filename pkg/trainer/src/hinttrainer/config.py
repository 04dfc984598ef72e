"""Fine-tuning configuration.

Defaults are the published recipe: rank-16 low-rank adapters (alpha 32,
dropout 0.1) on the attention and feed-forward projections of a frozen
4-bit base model, 8-bit paged AdamW at 1e-4 under a cosine schedule with
3% warmup, two epochs at an effective batch of 8 (per-device 1 x grad
accumulation 8), sequences capped at 1536 tokens, step-based evaluation
every 10 steps with early stopping after 3 non-improving evaluations on
validation loss.

Environment fallbacks (no CUDA: plain AdamW, no quantization) never change
these values silently — whatever actually ran is recorded in the emitted
manifest.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field


class ConfigError(ValueError):
    pass


DEFAULT_TARGET_MODULES = (
    # attention projections
    "q_proj", "k_proj", "v_proj", "o_proj",
    # feed-forward projections
    "gate_proj", "up_proj", "down_proj",
)


@dataclass
class TrainerConfig:
    base_model_id: str = ""
    lora_rank: int = 16
    lora_alpha: int = 32
    lora_dropout: float = 0.1
    learning_rate: float = 1e-4
    scheduler: str = "cosine"
    warmup_ratio: float = 0.03
    epochs: int = 2
    max_seq_len: int = 1536
    per_device_batch: int = 1
    grad_accum: int = 8
    eval_every_steps: int = 10
    early_stop_patience: int = 3
    selection_metric: str = "validation_loss"
    gradient_checkpointing: bool = True
    target_modules: tuple[str, ...] = field(default=DEFAULT_TARGET_MODULES)
    quantization: str = "4bit_if_available"
    seed: int = 0
    validation_split: float = 0.1
    max_steps: int | None = None  # optional cap, mainly for smoke runs

    def __post_init__(self) -> None:
        positive = {
            "lora_rank": self.lora_rank,
            "lora_alpha": self.lora_alpha,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "max_seq_len": self.max_seq_len,
            "per_device_batch": self.per_device_batch,
            "grad_accum": self.grad_accum,
            "eval_every_steps": self.eval_every_steps,
            "early_stop_patience": self.early_stop_patience,
        }
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if not (0.0 <= self.lora_dropout < 1.0):
            raise ConfigError("lora_dropout must be in [0, 1)")
        if not (0.0 <= self.warmup_ratio < 1.0):
            raise ConfigError("warmup_ratio must be in [0, 1)")
        if not (0.0 <= self.validation_split < 1.0):
            raise ConfigError("validation_split must be in [0, 1)")

    @property
    def effective_batch(self) -> int:
        return self.per_device_batch * self.grad_accum

    def to_manifest(self) -> dict:
        manifest = asdict(self)
        manifest["target_modules"] = list(self.target_modules)
        manifest["effective_batch"] = self.effective_batch
        return manifest
