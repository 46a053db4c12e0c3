"""Unsupervised helpful-sentence selection.

Builds an enriched query context (commitment sentence + subject + top-tau
frequent lemmas), scores every other thread sentence by the inner product of
provider embeddings, and keeps the top K.  Also the at-least-one-helpful@K
evaluation over labeled instances.

Preprocessing convention, pinned by fixtures: term-frequency vectors, word
vector training, and word vector pooling all operate on lemmatized,
stopword-filtered tokens, the same normalization the enriched context uses.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import text
from .corpus import TodoInstance
from .wordvec import WordVectorTable, train_word_vectors  # noqa: F401 (re-export)

log = logging.getLogger(__name__)

PROVIDER_NAMES = ("tf", "wv-mean", "wv-max", "file")

DEFAULT_TAU = 10
DEFAULT_K = 2


@dataclass
class EnrichedContext:
    """Query context E: commitment tokens, subject tokens, then top lemmas."""
    query_tokens: list[str]
    subject_tokens: list[str]
    top_tokens: list[str]

    @property
    def tokens(self) -> list[str]:
        return self.query_tokens + self.subject_tokens + self.top_tokens


@dataclass
class SentenceRef:
    """A thread sentence addressable for selection and file-backed vectors."""
    instance_id: str
    index: int          # position in TodoInstance.all_sentences()
    sentence: str
    tokens: list[str]

    @property
    def key(self) -> str:
        return f"{self.instance_id}:{self.index}"


@dataclass
class ScoredSentence:
    ref: SentenceRef
    score: float


def context_key(instance_id: str) -> str:
    """File-vector key for the enriched context of an instance."""
    return f"{instance_id}:query"


def top_tokens(token_lists: list[list[str]], tau: int = DEFAULT_TAU) -> list[str]:
    """Top-tau most frequent content lemmas across the given token lists.

    Ties break toward earlier first occurrence, then lexicographically.
    """
    if tau < 0:
        raise ValueError("top_tokens: tau must be >= 0")
    counts: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    pos = 0
    for tokens in token_lists:
        for lemma in text.content_lemmas(tokens):
            counts[lemma] = counts.get(lemma, 0) + 1
            first_seen.setdefault(lemma, pos)
            pos += 1
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t], t))
    return ranked[:tau]


def build_enriched_context(query_tokens: list[str],
                           subject_tokens: list[str],
                           top: list[str]) -> EnrichedContext:
    """Concatenate H, subject, and top tokens (duplicates preserved)."""
    if not query_tokens:
        raise ValueError("build_enriched_context: empty query sentence")
    return EnrichedContext(list(query_tokens), list(subject_tokens), list(top))


def enriched_context_for_instance(instance: TodoInstance,
                                  tau: int = DEFAULT_TAU) -> EnrichedContext:
    query = text.tokenize(instance.commitment_sentence())
    subject = text.tokenize(instance.thread.candidate.subject)
    lists = [text.tokenize(s) for s in instance.all_sentences()] + [subject]
    return build_enriched_context(query, subject, top_tokens(lists, tau))


def candidates_for_instance(instance: TodoInstance) -> list[SentenceRef]:
    """Every thread sentence except the commitment sentence itself."""
    refs = []
    for idx, sentence in enumerate(instance.all_sentences()):
        if idx == instance.commitment_sentence_index:
            continue
        refs.append(SentenceRef(instance.id, idx, sentence, text.tokenize(sentence)))
    return refs


# --------------------------------------------------------------------------
# Embedding providers
# --------------------------------------------------------------------------

class TfBinaryProvider:
    """Binarized term-frequency vectors over a fixed type inventory.

    The inventory is the combined content-lemma types of one instance's
    candidate sentences plus its enriched context, so the inner product is
    exactly the shared-type count.
    """

    name = "tf"

    def __init__(self, inventory: list[str]):
        self.inventory = list(inventory)
        self._slot = {t: i for i, t in enumerate(self.inventory)}
        self.dimension = len(self.inventory)

    @classmethod
    def from_token_lists(cls, token_lists: list[list[str]]) -> "TfBinaryProvider":
        inventory: list[str] = []
        seen = set()
        for tokens in token_lists:
            for lemma in text.content_lemmas(tokens):
                if lemma not in seen:
                    seen.add(lemma)
                    inventory.append(lemma)
        return cls(inventory)

    def embed(self, tokens: list[str], key: str | None = None) -> np.ndarray:
        vec = np.zeros(max(self.dimension, 1), dtype=np.float64)
        for lemma in text.content_lemmas(tokens):
            slot = self._slot.get(lemma)
            if slot is not None:
                vec[slot] = 1.0
        return vec[:self.dimension] if self.dimension else vec[:0]


class WordVecPoolProvider:
    """Mean- or max-pooled trained word vectors of a sentence's content lemmas."""

    def __init__(self, table: WordVectorTable, mode: str):
        if mode not in ("mean", "max"):
            raise ValueError(f"WordVecPoolProvider: unknown mode '{mode}'")
        self.table = table
        self.mode = mode
        self.name = f"wv-{mode}"
        self.dimension = table.dim

    def embed(self, tokens: list[str], key: str | None = None) -> np.ndarray:
        rows = [self.table.vector(lem) for lem in text.content_lemmas(tokens)]
        rows = [r for r in rows if r is not None]
        if not rows:
            return np.zeros(self.dimension, dtype=np.float64)
        stacked = np.stack(rows)
        return stacked.max(axis=0) if self.mode == "max" else stacked.mean(axis=0)


class FileVectorProvider:
    """Externally computed per-sentence vectors, loaded by key.

    File format: one ``key v1 .. vdim`` line per vector.  Sentence keys are
    ``<instance-id>:<sentence-index>``; the enriched context of an instance
    uses ``<instance-id>:query``.
    """

    name = "file"

    def __init__(self, vectors: dict[str, np.ndarray]):
        if not vectors:
            raise ValueError("FileVectorProvider: no vectors")
        dims = {v.shape[0] for v in vectors.values()}
        if len(dims) != 1:
            raise ValueError(f"FileVectorProvider: inconsistent dimensions {sorted(dims)}")
        self.vectors = vectors
        self.dimension = dims.pop()

    @classmethod
    def load(cls, path) -> "FileVectorProvider":
        vectors: dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) < 2:
                    raise ValueError(f"{path}: line {line_no}: need key plus values")
                vectors[parts[0]] = np.array([float(x) for x in parts[1:]],
                                             dtype=np.float64)
        return cls(vectors)

    def embed(self, tokens: list[str], key: str | None = None) -> np.ndarray:
        if key is None:
            raise ValueError("FileVectorProvider: sentence key required")
        vec = self.vectors.get(key)
        if vec is None:
            raise KeyError(f"FileVectorProvider: no vector for key '{key}'")
        return vec


class ProviderFactory:
    """Binds a provider name to per-instance providers.

    ``tf`` builds its type inventory per instance; the others are shared.
    """

    def __init__(self, name: str, table: WordVectorTable | None = None,
                 file_provider: FileVectorProvider | None = None):
        if name not in PROVIDER_NAMES:
            raise ValueError(f"unknown provider '{name}' (choose from {PROVIDER_NAMES})")
        if name in ("wv-mean", "wv-max") and table is None:
            raise ValueError(f"provider '{name}' needs a word-vector table")
        if name == "file" and file_provider is None:
            raise ValueError("provider 'file' needs a loaded vector file")
        self.name = name
        self.table = table
        self.file_provider = file_provider

    def bind(self, candidates: list[SentenceRef], context: EnrichedContext):
        if self.name == "tf":
            return TfBinaryProvider.from_token_lists(
                [c.tokens for c in candidates] + [context.tokens])
        if self.name == "wv-mean":
            return WordVecPoolProvider(self.table, "mean")
        if self.name == "wv-max":
            return WordVecPoolProvider(self.table, "max")
        return self.file_provider


# --------------------------------------------------------------------------
# Scoring and selection
# --------------------------------------------------------------------------

def relevance(sentence_tokens: list[str], context: EnrichedContext, provider,
              sentence_key: str | None = None,
              context_key_: str | None = None) -> float:
    """Relevance = inner product of the two embeddings (no normalization)."""
    s_vec = provider.embed(sentence_tokens, key=sentence_key)
    e_vec = provider.embed(context.tokens, key=context_key_)
    if s_vec.shape != e_vec.shape:
        raise ValueError(f"relevance: dimension mismatch {s_vec.shape} vs {e_vec.shape}")
    return float(np.dot(s_vec, e_vec))


def select_top_k(candidates: list[SentenceRef], context: EnrichedContext,
                 provider, k: int) -> list[ScoredSentence]:
    """K highest-scoring candidates, score desc, ties in document order."""
    if k < 1:
        raise ValueError("select_top_k: k must be >= 1")
    if not candidates:
        return []
    e_vec = provider.embed(context.tokens,
                           key=context_key(candidates[0].instance_id))
    scored = []
    for ref in candidates:
        s_vec = provider.embed(ref.tokens, key=ref.key)
        if s_vec.shape != e_vec.shape:
            raise ValueError(f"select_top_k: dimension mismatch "
                             f"{s_vec.shape} vs {e_vec.shape}")
        scored.append(ScoredSentence(ref, float(np.dot(s_vec, e_vec))))
    scored.sort(key=lambda s: (-s.score, s.ref.index))
    return scored[:k]


def select_for_instance(instance: TodoInstance, factory: ProviderFactory,
                        k: int = DEFAULT_K,
                        tau: int = DEFAULT_TAU) -> list[ScoredSentence]:
    context = enriched_context_for_instance(instance, tau)
    candidates = candidates_for_instance(instance)
    provider = factory.bind(candidates, context)
    return select_top_k(candidates, context, provider, k)


def at_least_one_helpful(instances: list[TodoInstance], factory: ProviderFactory,
                         k: int, tau: int = DEFAULT_TAU) -> float:
    """Fraction of labeled instances whose top-K selection hits a labeled
    helpful sentence.  Instances without labels are skipped with a warning."""
    hits = 0
    total = 0
    for inst in instances:
        if inst.helpful_labels is None:
            log.warning("at_least_one_helpful: instance %s has no labels; skipped",
                        inst.id)
            continue
        total += 1
        selected = select_for_instance(inst, factory, k, tau)
        if any(inst.helpful_labels[s.ref.index] for s in selected):
            hits += 1
    if total == 0:
        raise ValueError("at_least_one_helpful: no labeled instances")
    return hits / total


def word_vector_training_corpus(instances: list[TodoInstance]) -> list[list[str]]:
    """Lemmatized, stopword-filtered token streams for vector training: every
    thread sentence plus the subject line of each instance."""
    streams = []
    for inst in instances:
        for sentence in inst.all_sentences():
            lemmas = text.content_lemmas(text.tokenize(sentence))
            if lemmas:
                streams.append(lemmas)
        subject = text.content_lemmas(text.tokenize(inst.thread.candidate.subject))
        if subject:
            streams.append(subject)
    return streams
