"""Hint-guided step-wise math solving pipeline."""

from .backend import (
    CallUsage,
    ChatTranscript,
    DecodingParams,
    EndpointConfig,
    HttpBackend,
    MockBackend,
    ScriptEntry,
    ScriptedMockBackend,
)
from .dataset import (
    Hint,
    HintSequence,
    Problem,
    RunRecord,
    TrainingInstance,
    load_dataset,
    save_dataset,
)
from .hinter import (
    check_leakage,
    export_training_instances,
    generate_oracle_hints,
    generate_step_hint,
)
from .metrics import EvalReport, accuracy, efficiency_summary, stability, token_reduction
from .normalize import normalize_answer
from .solver import (
    ReasoningState,
    majority_vote,
    solve_hinted,
    solve_no_hint,
    solve_self_consistency,
)
from .verify import Verdict, apply_human_override, verify_exact, verify_with_judge

__version__ = "0.1.0"

__all__ = [
    "CallUsage", "ChatTranscript", "DecodingParams", "EndpointConfig",
    "HttpBackend", "MockBackend", "ScriptEntry", "ScriptedMockBackend",
    "Problem", "Hint", "HintSequence", "TrainingInstance", "RunRecord",
    "load_dataset", "save_dataset",
    "check_leakage", "generate_oracle_hints", "generate_step_hint",
    "export_training_instances",
    "ReasoningState", "solve_hinted", "solve_no_hint", "solve_self_consistency",
    "majority_vote",
    "normalize_answer", "Verdict", "verify_exact", "verify_with_judge",
    "apply_human_override",
    "EvalReport", "accuracy", "stability", "token_reduction", "efficiency_summary",
]
