"""Distributional word vectors trained with skip-gram + negative sampling.

Training operates on whatever token streams the caller provides (the
selection stage feeds lemmatized, stopword-filtered sentences).  Runs are
deterministic under the seed.  An optional character n-gram bucket flag
folds subword information into each word's vector.
"""

from __future__ import annotations

import numpy as np


class WordVectorTable:
    """Vocabulary-aligned embedding matrix with text-format persistence.

    File format: header line ``<count> <dim>``, then one ``token v1 .. vdim``
    line per token.
    """

    def __init__(self, tokens: list[str], matrix: np.ndarray):
        if matrix.shape[0] != len(tokens):
            raise ValueError(f"WordVectorTable: {len(tokens)} tokens vs "
                             f"{matrix.shape[0]} rows")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("WordVectorTable: non-finite entries")
        self.tokens = list(tokens)
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        self.index = {t: i for i, t in enumerate(self.tokens)}

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def vector(self, token: str) -> np.ndarray | None:
        i = self.index.get(token)
        return self.matrix[i] if i is not None else None

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self.tokens)} {self.dim}\n")
            for token, row in zip(self.tokens, self.matrix):
                fh.write(token + " " + " ".join(repr(v) for v in row) + "\n")

    @classmethod
    def load(cls, path) -> "WordVectorTable":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise ValueError(f"{path}: bad word-vector header")
            count, dim = int(header[0]), int(header[1])
            tokens = []
            matrix = np.empty((count, dim), dtype=np.float64)
            for i in range(count):
                parts = fh.readline().rstrip("\n").split(" ")
                if len(parts) != dim + 1:
                    raise ValueError(f"{path}: line {i + 2}: expected {dim} values")
                tokens.append(parts[0])
                matrix[i] = [float(x) for x in parts[1:]]
        return cls(tokens, matrix)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def _char_ngram_ids(token: str, n_buckets: int) -> list[int]:
    # polynomial rolling hash; stable across runs and platforms
    ids = []
    padded = "<" + token + ">"
    for n in (3, 4, 5):
        for i in range(len(padded) - n + 1):
            h = 2166136261
            for ch in padded[i:i + n]:
                h = ((h ^ ord(ch)) * 16777619) & 0xFFFFFFFF
            ids.append(h % n_buckets)
    return ids


def train_word_vectors(sentences: list[list[str]],
                       dim: int = 300,
                       window: int = 5,
                       epochs: int = 5,
                       seed: int = 0,
                       negatives: int = 5,
                       learning_rate: float = 0.05,
                       min_count: int = 1,
                       subword_buckets: int = 0) -> WordVectorTable:
    """Skip-gram with negative sampling over the given token streams.

    Returns the input-side vectors (with subword bucket vectors folded in
    when ``subword_buckets`` > 0).
    """
    if window < 1:
        raise ValueError("train_word_vectors: window must be >= 1")
    counts: dict[str, int] = {}
    for sent in sentences:
        for tok in sent:
            counts[tok] = counts.get(tok, 0) + 1
    vocab = [t for t, c in sorted(counts.items(), key=lambda tc: (-tc[1], tc[0]))
             if c >= min_count]
    if len(vocab) < 2:
        raise ValueError("train_word_vectors: corpus too small "
                         f"({len(vocab)} usable tokens)")
    tok_to_id = {t: i for i, t in enumerate(vocab)}
    encoded = [[tok_to_id[t] for t in sent if t in tok_to_id] for sent in sentences]
    encoded = [s for s in encoded if len(s) >= 2]
    if not encoded:
        raise ValueError("train_word_vectors: no sentence longer than the window unit")

    rng = np.random.default_rng(seed)
    V = len(vocab)
    w_in = (rng.random((V, dim)) - 0.5) / dim
    w_out = np.zeros((V, dim), dtype=np.float64)
    buckets = None
    grams: list[list[int]] = []
    if subword_buckets > 0:
        buckets = (rng.random((subword_buckets, dim)) - 0.5) / dim
        grams = [_char_ngram_ids(t, subword_buckets) for t in vocab]

    freq = np.array([counts[t] for t in vocab], dtype=np.float64) ** 0.75
    neg_cdf = np.cumsum(freq / freq.sum())

    def input_vec(w):
        if buckets is None or not grams[w]:
            return w_in[w]
        return (w_in[w] + buckets[grams[w]].sum(axis=0)) / (1 + len(grams[w]))

    for _ in range(epochs):
        for sent in encoded:
            L = len(sent)
            for pos, center in enumerate(sent):
                span = int(rng.integers(1, window + 1))
                ctx = [sent[j] for j in range(max(0, pos - span),
                                              min(L, pos + span + 1)) if j != pos]
                if not ctx:
                    continue
                ctx = np.asarray(ctx, dtype=np.int64)
                neg = np.searchsorted(neg_cdf, rng.random((len(ctx), negatives)))
                v_in = input_vec(center)
                targets = np.concatenate([ctx[:, None], neg], axis=1)  # (m, 1+K)
                labels = np.zeros(targets.shape, dtype=np.float64)
                labels[:, 0] = 1.0
                flat = targets.reshape(-1)
                outs = w_out[flat]                                      # (m*(1+K), dim)
                scores = outs @ v_in
                sig = 1.0 / (1.0 + np.exp(-np.clip(scores, -30, 30)))
                err = (labels.reshape(-1) - sig) * learning_rate        # (m*(1+K),)
                grad_in = err @ outs
                np.add.at(w_out, flat, err[:, None] * v_in)
                if buckets is None or not grams[center]:
                    w_in[center] += grad_in
                else:
                    share = grad_in / (1 + len(grams[center]))
                    w_in[center] += share
                    np.add.at(buckets, grams[center], share)

    if buckets is None:
        matrix = w_in
    else:
        matrix = np.stack([input_vec(w) for w in range(V)])
    return WordVectorTable(vocab, matrix)
