"""Reference integration: the dual-branch loop around a host model.

The host framework owns generation. Mapping to a mainstream API
(transformers-style), `model_logits(context)` is
`model(input_ids=torch.tensor([context])).logits[0, -1]` with each
branch keeping its own KV cache; everything else transfers unchanged.

Run as a script: decodes a tiny stub model with and without expert
guidance and prints both generations.
"""
from __future__ import annotations

import numpy as np

from ccd_shim import StepAdjustRequest, adjusted_logits

# --- host-side stand-ins ------------------------------------------------------

VOCAB = ["<eos>", "the", "scan", "shows", "edema", "opacity", "clear", "lungs"]
EOS_ID = 0
TOKEN_MAP = {"edema": [4], "opacity": [5]}


def model_logits(context: list[int]) -> np.ndarray:
    """Stub next-token scorer; a real integration calls the framework here."""
    rng = np.random.default_rng(len(context) * 7919 + sum(context))
    z = rng.normal(size=len(VOCAB)) * 1.5
    z[EOS_ID] += 0.4 * max(0, len(context) - 6)  # prefer stopping eventually
    return z


def encode_anchor(labels: dict[str, float], tau: float = 0.5) -> list[int]:
    """Host-side anchor construction: token ids of the above-threshold labels.

    A real integration tokenizes the anchor instruction text; the stub
    vocabulary only contains the label words themselves.
    """
    names = sorted((n for n, p in labels.items() if p > tau),
                   key=lambda n: (-labels[n], n))
    return [TOKEN_MAP[n][0] for n in names]


# --- the two-branch loop ------------------------------------------------------

def generate_with_guidance(prompt: list[int], label_probs: dict[str, float],
                           max_tokens: int = 12, alpha: float = 0.5,
                           beta: float = 0.5, gamma: float | None = 10.0) -> list[int]:
    ctx_original = list(prompt)
    ctx_anchored = list(prompt) + encode_anchor(label_probs)
    generated: list[int] = []
    for _ in range(max_tokens):
        fused = adjusted_logits(StepAdjustRequest(
            original_logits=model_logits(ctx_original),
            anchored_logits=model_logits(ctx_anchored),
            label_probs=label_probs,
            token_map=TOKEN_MAP,
            alpha=alpha, beta=beta, gamma=gamma,
            history=generated, generated_len=len(generated),
            processors={"repetition_penalty": 1.6, "min_length": 3, "eos_token_id": EOS_ID},
        ))
        token = int(np.argmax(fused))  # the host owns sampling
        generated.append(token)
        ctx_original.append(token)   # lockstep: same token to both branches
        ctx_anchored.append(token)
        if token == EOS_ID:
            break
    return generated


def main():
    prompt = [1, 2, 3]  # "the scan shows"
    expert = {"edema": 0.94, "opacity": 0.08}
    plain = generate_with_guidance(prompt, expert, alpha=0.0, beta=0.0)
    guided = generate_with_guidance(prompt, expert)
    print("plain :", " ".join(VOCAB[t] for t in plain))
    print("guided:", " ".join(VOCAB[t] for t in guided))


if __name__ == "__main__":
    main()
