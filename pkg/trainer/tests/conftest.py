from pathlib import Path

import pytest
import torch

from hinttrainer.data import load_instances, serialize_instance

# serialization fixture emitted by the upstream export pipeline
PIPELINE_FIXTURE = Path(__file__).resolve().parents[2] / "tests" / "fixtures" / "step_prompt_fixture"
SMOKE_TRAINING_JSONL = PIPELINE_FIXTURE / "training.jsonl"


def build_tiny_base_model(out_dir: Path, extra_texts=()) -> Path:
    """A from-scratch word-level tokenizer plus a random 2-layer Llama.

    Everything is constructed locally, so the tests never touch a model hub.
    """
    from tokenizers import Tokenizer, models, pre_tokenizers
    from transformers import LlamaConfig, LlamaForCausalLM, PreTrainedTokenizerFast

    texts = list(extra_texts)
    for instance in load_instances(SMOKE_TRAINING_JSONL):
        prompt, target = serialize_instance(instance)
        texts.extend([prompt, target])
    words = sorted({w for t in texts for w in t.split()})
    specials = ["<pad>", "<unk>", "</s>"]
    vocab = {token: i for i, token in enumerate(specials + words)}

    tok = Tokenizer(models.WordLevel(vocab=vocab, unk_token="<unk>"))
    tok.pre_tokenizer = pre_tokenizers.WhitespaceSplit()
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok, unk_token="<unk>", pad_token="<pad>", eos_token="</s>",
    )
    fast.save_pretrained(out_dir)

    torch.manual_seed(7)
    config = LlamaConfig(
        vocab_size=len(vocab),
        hidden_size=64,
        intermediate_size=128,
        num_hidden_layers=2,
        num_attention_heads=4,
        num_key_value_heads=2,
        max_position_embeddings=512,
        pad_token_id=vocab["<pad>"],
        eos_token_id=vocab["</s>"],
    )
    model = LlamaForCausalLM(config)
    model.save_pretrained(out_dir)
    return out_dir


@pytest.fixture(scope="session")
def tiny_base_model(tmp_path_factory):
    return str(build_tiny_base_model(tmp_path_factory.mktemp("tiny_base")))
