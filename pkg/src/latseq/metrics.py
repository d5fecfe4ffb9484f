"""Evaluation metrics: position-aligned token accuracy and corpus BLEU."""
from __future__ import annotations

import math
from collections import Counter


def token_accuracy(hypotheses: list[list[str]], references: list[list[str]]) -> float:
    """Matches at aligned positions divided by total reference length."""
    if len(hypotheses) != len(references):
        raise ValueError("hypothesis/reference count mismatch")
    total = sum(len(r) for r in references)
    if total == 0:
        return 0.0
    correct = 0
    for hyp, ref in zip(hypotheses, references):
        correct += sum(1 for h, r in zip(hyp, ref) if h == r)
    return correct / total


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses: list[list[str]], references: list[list[str]],
                max_n: int = 4) -> float:
    """Standard corpus-level BLEU on a 0-100 scale.

    Clipped n-gram precisions up to max_n, geometric mean, multiplicative
    brevity penalty; any zero precision (or empty hypotheses) gives 0.
    """
    if len(hypotheses) != len(references):
        raise ValueError("hypothesis/reference count mismatch")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            hg = _ngrams(hyp, n)
            rg = _ngrams(ref, n)
            totals[n - 1] += max(len(hyp) - n + 1, 0)
            matches[n - 1] += sum(min(c, rg[g]) for g, c in hg.items())
    if hyp_len == 0:
        return 0.0
    if any(t == 0 or m == 0 for m, t in zip(matches, totals)):
        return 0.0
    log_prec = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_n
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_prec)
