#!/usr/bin/env python3
# SPDX-License-Identifier: MIT OR Apache-2.0
"""Regenerates the reference fixtures under crates/core/tests/fixtures.

Reference values come from the upstream `transformers` implementations:
tiny randomly initialised GPT-2 and GPT-NeoX models, and the slow GPT-2
tokenizer loaded from the vendored vocabulary.
"""

import hashlib
import json
import random
from pathlib import Path

import torch
from transformers import (
    GPT2Config,
    GPT2LMHeadModel,
    GPT2Tokenizer,
    GPTNeoXConfig,
    GPTNeoXForCausalLM,
)

ROOT = Path(__file__).resolve().parents[1]
OUT = ROOT / "crates" / "core" / "tests" / "fixtures"
ASSETS = ROOT / "assets" / "gpt2"
VOCAB = 97
SEQ_LEN = 10


def randomise(model, seed):
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in model.named_parameters():
            noise = torch.randn(p.shape, generator=gen)
            if "ln" in name or "layernorm" in name or "layer_norm" in name:
                p.copy_((1.0 if name.endswith("weight") else 0.0) + 0.1 * noise)
            elif name.endswith("bias"):
                p.copy_(0.05 * noise)
            else:
                p.copy_(0.2 * noise)


def reference(model, seqs):
    cases = []
    with torch.no_grad():
        for ids in seqs:
            out = model(
                torch.tensor([ids]),
                output_hidden_states=True,
                output_attentions=True,
            )
            n_layers = len(out.attentions)
            # the last entry of hidden_states has the final norm applied
            hidden = [h[0].tolist() for h in out.hidden_states[:n_layers]]
            cases.append(
                {
                    "ids": ids,
                    "hidden": hidden,
                    "attention_last_layer": out.attentions[-1][0].tolist(),
                    "final_logits": out.logits[0, -1].tolist(),
                }
            )
    return cases


def write_model(name, model, seqs, half=False):
    d = OUT / name
    d.mkdir(parents=True, exist_ok=True)
    if half:
        model = model.half()
        model.save_pretrained(d, safe_serialization=True)
        model = model.float()
    else:
        model.save_pretrained(d, safe_serialization=True)
    (d / "generation_config.json").unlink(missing_ok=True)
    (d / "reference.json").write_text(json.dumps({"cases": reference(model, seqs)}))


def models():
    rng = random.Random(7)
    seqs = [[rng.randrange(VOCAB) for _ in range(SEQ_LEN)] for _ in range(3)]

    torch.manual_seed(0)
    gpt2 = GPT2LMHeadModel(
        GPT2Config(
            vocab_size=VOCAB,
            n_positions=64,
            n_embd=32,
            n_layer=3,
            n_head=4,
            attn_implementation="eager",
        )
    ).eval()
    randomise(gpt2, 1)
    write_model("hf_gpt2", gpt2, seqs)
    write_model("hf_gpt2_f16", gpt2, seqs, half=True)

    for name, parallel, seed in [("hf_neox", True, 2), ("hf_neox_seq", False, 3)]:
        torch.manual_seed(seed)
        neox = GPTNeoXForCausalLM(
            GPTNeoXConfig(
                vocab_size=VOCAB,
                hidden_size=32,
                num_hidden_layers=3,
                num_attention_heads=4,
                intermediate_size=64,
                max_position_embeddings=64,
                rotary_pct=0.5,
                use_parallel_residual=parallel,
                tie_word_embeddings=False,
                attn_implementation="eager",
            )
        ).eval()
        randomise(neox, seed + 10)
        write_model(name, neox, seqs)


WORDS = [
    "mother", "father", "son", "daughter", "brother", "sister", "wife",
    "husband", "uncle", "aunt", "nephew", "niece", "grandfather",
    "grandmother", "grandson", "granddaughter",
]


def prompt(rng):
    k = rng.randrange(2, 16)
    people = list(range(1, k + 2))
    rng.shuffle(people)
    lines = []
    for j in range(k):
        subj, obj, rel = people[j], people[j + 1], rng.choice(WORDS)
        art = "an" if rel in ("uncle", "aunt") else "a"
        form = rng.randrange(3)
        if form == 0:
            lines.append(f"Person{obj} is Person{subj}'s {rel}.")
        elif form == 1:
            lines.append(f"Person{subj} has {art} {rel} called Person{obj}.")
        else:
            lines.append(f"Person{obj} is {art} {rel} of Person{subj}.")
    lines.append(f"Therefore, Person{people[-1]} is Person{people[0]}'s")
    return "\n".join(lines)


MISC = [
    "", " ", "  leading", "trailing  ", "tabs\tand\nnewlines\n\n",
    "It's we'll they're I'm you've she'd", "numbers 12345 and 3.14159",
    "granddaughter-in-law", " granddaughter-in-law", "naïve café 東京 🙂",
    "ALLCAPS MixedCase lower", "a  b   c    d", "$%^&*()[]{}<>?!",
    "<|endoftext|>", "Person10's Person100's",
]


def tokenizer_cases():
    tok = GPT2Tokenizer(str(ASSETS / "vocab.json"), str(ASSETS / "merges.txt"))
    rng = random.Random(11)
    texts = [prompt(rng) for _ in range(600)] + MISC
    for _ in range(200):
        n = rng.randrange(1, 30)
        texts.append("".join(chr(rng.choice([rng.randrange(32, 127), rng.randrange(160, 0x3000)])) for _ in range(n)))
    with (OUT / "tokenizer_cases.jsonl").open("w") as f:
        for text in texts:
            # split_special_tokens keeps "<|endoftext|>" as plain text, as in the crate
            ids = tok.encode(text, split_special_tokens=True)
            f.write(json.dumps({"text": text, "ids": ids}) + "\n")


def sha256(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def reference_bundle(top_k=50):
    """Tiny random GPT-2 over the full vocabulary plus a reference bundle."""
    tok = GPT2Tokenizer(str(ASSETS / "vocab.json"), str(ASSETS / "merges.txt"))
    torch.manual_seed(5)
    model = GPT2LMHeadModel(
        GPT2Config(
            vocab_size=50257,
            n_positions=256,
            n_embd=16,
            n_layer=2,
            n_head=4,
            attn_implementation="eager",
        )
    ).eval()
    randomise(model, 6)
    d = OUT / "hf_gpt2_vocab"
    d.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(d, safe_serialization=True)
    (d / "generation_config.json").unlink(missing_ok=True)

    rng = random.Random(13)
    prompts = [prompt(rng) for _ in range(20)]
    ids, tops = [], []
    with torch.no_grad():
        for text in prompts:
            seq = tok.encode(text, split_special_tokens=True)
            logits = model(torch.tensor([seq])).logits[0, -1].float()
            values, idx = torch.topk(logits, top_k)
            ids.append(seq)
            tops.append([[int(i), float(v)] for i, v in zip(idx, values)])
    bundle = {
        "model": "hf_gpt2_vocab",
        "prompts": prompts,
        "ids": ids,
        "top_k": tops,
        "checksums": {
            "model.safetensors": sha256(d / "model.safetensors"),
            "vocab.json": sha256(ASSETS / "vocab.json"),
            "merges.txt": sha256(ASSETS / "merges.txt"),
        },
    }
    (d / "bundle.json").write_text(json.dumps(bundle))


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    models()
    tokenizer_cases()
    reference_bundle()
