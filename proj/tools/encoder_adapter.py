#!/usr/bin/env python3
"""Text-encoder adapter speaking the line-JSON protocol on stdin/stdout.

Announces {"id", "dim", "pooling"} once, then answers {"text": ...} requests
with {"vector": [...]}. Model weights come from the local cache (HF_HOME is
set by the parent process when TEXTMANIA_MODEL_CACHE is configured); nothing
is downloaded unless the environment allows it.

Usage: encoder_adapter.py {clip|bert|gpt2}
"""

import json
import sys


SPECS = {
    "clip": {"id": "clip-vit-b32-text", "dim": 512, "pooling": "native_sentence",
             "hf": "openai/clip-vit-base-patch32"},
    "bert": {"id": "bert-base", "dim": 768, "pooling": "mean_tokens",
             "hf": "bert-base-uncased"},
    "gpt2": {"id": "gpt2", "dim": 768, "pooling": "mean_tokens",
             "hf": "gpt2"},
}


def load(kind):
    import torch
    from transformers import AutoModel, AutoTokenizer, CLIPTextModelWithProjection

    spec = SPECS[kind]
    tokenizer = AutoTokenizer.from_pretrained(spec["hf"])
    if kind == "clip":
        model = CLIPTextModelWithProjection.from_pretrained(spec["hf"])
    else:
        model = AutoModel.from_pretrained(spec["hf"])
    model.eval()

    def embed(text):
        if kind == "gpt2":
            tokens = tokenizer(text, return_tensors="pt")
        else:
            tokens = tokenizer(text, return_tensors="pt", truncation=True)
        with torch.no_grad():
            if kind == "clip":
                out = model(**tokens).text_embeds[0]
            else:
                hidden = model(**tokens).last_hidden_state[0]
                out = hidden.mean(dim=0)
        return [float(x) for x in out.tolist()]

    return spec, embed


def main():
    if len(sys.argv) != 2 or sys.argv[1] not in SPECS:
        print(json.dumps({"error": "usage: encoder_adapter.py {clip|bert|gpt2}"}),
              flush=True)
        return 2

    spec, embed = load(sys.argv[1])
    print(json.dumps({"id": spec["id"], "dim": spec["dim"],
                      "pooling": spec["pooling"]}), flush=True)

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            text = json.loads(line)["text"]
            print(json.dumps({"vector": embed(text)}), flush=True)
        except Exception as e:  # report, keep serving
            print(json.dumps({"error": str(e)}), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
