import pytest

from hinttrainer.cli import main as cli_main
from hinttrainer.data import load_instances
from hinttrainer.serve import generate_hint, load_model_with_adapter, serve_check
from hinttrainer.train import train

from conftest import SMOKE_TRAINING_JSONL
from test_train import smoke_config


@pytest.fixture(scope="module")
def trained_adapter(tiny_base_model, tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    result = train(smoke_config(tiny_base_model), SMOKE_TRAINING_JSONL, out)
    return str(result.adapter_dir)


def test_serve_check_generates_non_empty_text(trained_adapter, tiny_base_model):
    instance = load_instances(SMOKE_TRAINING_JSONL)[0]
    text = serve_check(trained_adapter, tiny_base_model,
                       instance.problem_statement, instance.reasoning_state)
    assert isinstance(text, str) and text


def test_greedy_generation_is_deterministic(trained_adapter, tiny_base_model):
    model, tokenizer = load_model_with_adapter(trained_adapter, tiny_base_model)
    instance = load_instances(SMOKE_TRAINING_JSONL)[1]
    first = generate_hint(model, tokenizer, instance.problem_statement,
                          instance.reasoning_state)
    second = generate_hint(model, tokenizer, instance.problem_statement,
                           instance.reasoning_state)
    assert first == second


def test_base_model_id_comes_from_adapter_config(trained_adapter):
    # config records the base id used at training time
    model, tokenizer = load_model_with_adapter(trained_adapter, base_model_id=None)
    assert model is not None and tokenizer is not None


def test_cli_train_and_generate(tiny_base_model, tmp_path, capsys):
    out = tmp_path / "cli_run"
    code = cli_main([
        "train", "--data", str(SMOKE_TRAINING_JSONL), "--base-model", tiny_base_model,
        "--out", str(out), "--lr", "5e-3", "--epochs", "5", "--batch", "2",
        "--accum", "1", "--val-split", "0", "--max-seq-len", "512",
    ])
    assert code == 0
    assert (out / "adapter" / "lora_weights.pt").exists()
    capsys.readouterr()

    code = cli_main([
        "generate", "--adapter", str(out / "adapter"), "--base-model", tiny_base_model,
        "--statement", "Solve x^2 - 5x + 6 = 0 for x.", "--state", "",
    ])
    assert code == 0
    assert capsys.readouterr().out.strip()
