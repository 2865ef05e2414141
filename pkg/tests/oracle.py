"""Independent straight-line recomputation of the decode pipeline.

Pure-Python floats and math only: no numpy, no imports from the package
under test. Used to cross-check the engine's per-step fusion and the
processor stack from raw inputs.
"""
from __future__ import annotations

import math

NEG_INF = float("-inf")
PROB_EPS = 1e-6
TOP_P_SLACK = 1e-12


def o_log_softmax(z):
    finite = [x for x in z if x != NEG_INF]
    m = max(finite)
    lse = m + math.log(sum(math.exp(x - m) for x in finite))
    return [x - lse if x != NEG_INF else NEG_INF for x in z]


def o_softmax(z):
    return [math.exp(x) if x != NEG_INF else 0.0 for x in o_log_softmax(z)]


def o_interpolate(a, b, w):
    if w == 0.0:
        return list(a)
    if w == 1.0:
        return list(b)
    return [(1.0 - w) * x + w * y for x, y in zip(a, b)]


def o_repetition_penalty(z, history, rho):
    out = list(z)
    for t in set(history):
        out[t] = out[t] / rho if out[t] > 0 else out[t] * rho
    return out


def o_min_length(z, generated_len, min_length, eos_id):
    out = list(z)
    if generated_len < min_length:
        out[eos_id] = NEG_INF
    return out


def o_top_k(z, k):
    finite_ids = [i for i, x in enumerate(z) if x != NEG_INF]
    if k == 0 or k >= len(finite_ids):
        return list(z)
    ranked = sorted(finite_ids, key=lambda i: (-z[i], i))
    keep = set(ranked[:k])
    return [z[i] if i in keep else NEG_INF for i in range(len(z))]


def o_top_p(z, p):
    if p == 1.0:
        return list(z)
    probs = o_softmax(z)
    order = sorted(range(len(z)), key=lambda i: (-probs[i], i))
    keep = set()
    cum = 0.0
    for i in order:
        keep.add(i)
        cum += probs[i]
        if cum >= p - TOP_P_SLACK:
            break
    return [z[i] if i in keep else NEG_INF for i in range(len(z))]


def o_run_stack(z, history, generated_len, *, temperature=1.0, top_k=0,
                top_p=1.0, repetition_penalty=1.0, min_length=0, eos_id=0):
    z = o_repetition_penalty(z, history, repetition_penalty)
    z = o_min_length(z, generated_len, min_length, eos_id)
    if temperature != 1.0:
        z = [x / temperature for x in z]
    z = o_top_k(z, top_k)
    return o_top_p(z, top_p)


def o_label_bias(s):
    s = min(max(s, PROB_EPS), 1.0 - PROB_EPS)
    return math.log(s / (1.0 - s))


def o_clip_bias(b, gamma):
    if gamma is None:
        return b
    m = math.log(gamma)
    return min(max(b, -m), m)


def o_bias_vector(labels, token_map, gamma, vocab_size):
    """labels: ordered (name, prob) pairs."""
    bias = [0.0] * vocab_size
    for name, prob in labels:
        b = o_clip_bias(o_label_bias(prob), gamma)
        for tid in token_map[name]:
            bias[tid] += b
    return bias


def o_ccd_step(z_o, z_c, labels, token_map, vocab_size, *, alpha, beta, gamma,
               tau=0.5, bias_scope="all", history=(), generated_len=0,
               **proc):
    """One-shot composition: log-softmax both branches, blend, process,
    add expert bias to the unprocessed blend, blend again."""
    if bias_scope == "selected":
        labels = [(n, p) for n, p in labels if p > tau]
    scd = o_interpolate(o_log_softmax(z_o), o_log_softmax(z_c), alpha)
    processed = o_run_stack(scd, history, generated_len, **proc)
    bias = o_bias_vector(labels, token_map, gamma, vocab_size)
    ecd = [x + b for x, b in zip(scd, bias)]
    return o_interpolate(processed, ecd, beta)
