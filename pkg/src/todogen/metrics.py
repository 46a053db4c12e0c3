"""Evaluation metrics: BLEU-4, ROUGE-1/2/L F1, perplexity / token accuracy,
and Cohen's kappa.

All token-level metrics operate on token lists produced by
:func:`todogen.text.tokenize`, so reported numbers are deterministic.
BLEU uses corpus-level clipped modified n-gram precisions with a fixed
smoothing rule: when a higher-order (n >= 2) match count is zero, 1 is added
to both its numerator and denominator.  Unigram precision is never smoothed,
so zero-overlap candidates score exactly 0.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass


@dataclass
class MetricReport:
    bleu4: float
    rouge1_f1: float
    rouge2_f1: float
    rougeL_f1: float
    n_instances: int

    def to_dict(self) -> dict:
        return {
            "bleu4": self.bleu4,
            "rouge1_f1": self.rouge1_f1,
            "rouge2_f1": self.rouge2_f1,
            "rougeL_f1": self.rougeL_f1,
            "n_instances": self.n_instances,
        }


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidates: list[list[str]],
          references: list[list[list[str]]]) -> float:
    """Corpus-level BLEU-4 over parallel candidate / reference-set lists."""
    if len(candidates) != len(references):
        raise ValueError(f"bleu4: {len(candidates)} candidates vs "
                         f"{len(references)} reference sets")
    if not candidates:
        raise ValueError("bleu4: empty input")
    matches = [0] * 4
    totals = [0] * 4
    cand_len = 0
    ref_len = 0
    for cand, refs in zip(candidates, references):
        if not refs:
            raise ValueError("bleu4: empty reference set")
        cand_len += len(cand)
        # closest reference length; ties resolved toward the shorter one
        ref_len += min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
        for n in range(1, 5):
            cand_counts = _ngrams(cand, n)
            if not cand_counts:
                continue
            max_ref = Counter()
            for ref in refs:
                for gram, count in _ngrams(ref, n).items():
                    if count > max_ref[gram]:
                        max_ref[gram] = count
            clipped = 0
            for gram, count in cand_counts.items():
                clipped += min(count, max_ref[gram])
            matches[n - 1] += clipped
            totals[n - 1] += sum(cand_counts.values())

    log_sum = 0.0
    for n in range(1, 5):
        m, t = matches[n - 1], totals[n - 1]
        if n >= 2 and m == 0:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_sum += math.log(m / t)
    geo_mean = math.exp(log_sum / 4.0)
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / max(cand_len, 1))
    if cand_len == 0:
        return 0.0
    return bp * geo_mean


def sentence_bleu4(candidate: list[str], references: list[list[str]]) -> float:
    """BLEU-4 of a single candidate against its reference set."""
    return bleu4([candidate], [references])


def rouge_n(candidate: list[str], reference: list[str], n: int) -> float:
    """ROUGE-N F1 (clipped n-gram overlap, beta = 1)."""
    if n not in (1, 2):
        raise ValueError(f"rouge_n: n must be 1 or 2, got {n}")
    cand_counts = _ngrams(candidate, n)
    ref_counts = _ngrams(reference, n)
    if not cand_counts or not ref_counts:
        return 0.0
    overlap = 0
    for gram, count in cand_counts.items():
        overlap += min(count, ref_counts[gram])
    precision = overlap / sum(cand_counts.values())
    recall = overlap / sum(ref_counts.values())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _lcs_length(a: list[str], b: list[str]) -> int:
    # one-row DP over the shorter sequence
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        ai = a[i - 1]
        for j in range(1, len(b) + 1):
            if ai == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def rouge_l(candidate: list[str], reference: list[str]) -> float:
    """ROUGE-L F1 from the longest common subsequence."""
    if not candidate or not reference:
        return 0.0
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    return 2.0 * precision * recall / (precision + recall)


def rouge_n_max(candidate: list[str], references: list[list[str]], n: int) -> float:
    return max(rouge_n(candidate, ref, n) for ref in references)


def rouge_l_max(candidate: list[str], references: list[list[str]]) -> float:
    return max(rouge_l(candidate, ref) for ref in references)


def perplexity_and_token_accuracy(model, instances) -> tuple[float, float]:
    """Teacher-forced perplexity and next-token accuracy over a dataset.

    ``model`` must provide ``iter_token_predictions(instances)`` yielding one
    ``(target_probability, argmax_matches_target)`` pair per scored target
    token (padding excluded, end-of-sequence included).
    """
    total_nll = 0.0
    total = 0
    correct = 0
    for prob, match in model.iter_token_predictions(instances):
        if prob <= 0.0:
            raise ValueError("perplexity: target probability must be positive")
        total_nll += -math.log(prob)
        total += 1
        if match:
            correct += 1
    if total == 0:
        raise ValueError("perplexity: no target tokens in dataset")
    return math.exp(total_nll / total), correct / total


def cohen_kappa(labels_a: list, labels_b: list) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e).

    Marginal label frequencies give the expected agreement.  When both raters
    are constant and identical, agreement is perfect by definition: 1.0.
    """
    if len(labels_a) != len(labels_b):
        raise ValueError(f"cohen_kappa: length mismatch "
                         f"({len(labels_a)} vs {len(labels_b)})")
    if not labels_a:
        raise ValueError("cohen_kappa: empty label lists")
    n = len(labels_a)
    p_o = sum(1 for a, b in zip(labels_a, labels_b) if a == b) / n
    counts_a = Counter(labels_a)
    counts_b = Counter(labels_b)
    p_e = 0.0
    for label in set(counts_a) | set(counts_b):
        p_e += (counts_a[label] / n) * (counts_b[label] / n)
    if abs(1.0 - p_e) < 1e-12:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)
