"""Binary commitment-sentence classifier: LSTM over the focal sentence plus
its email context, additive self-attention pooling, sigmoid output.

The input convention is [sentence ; <sep> ; remaining email tokens], with the
context truncated to ``max_context_tokens``; an empty context falls back to
sentence-only encoding.  Candidate extraction keeps every sentence whose
score clears the confidence threshold.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import numeric as nm
from . import text
from .corpus import EmailMessage, TodoInstance
from .numeric.checkpoint import load_params, save_params

log = logging.getLogger(__name__)

SEP = "<sep>"
CLASSIFIER_SPECIALS = text.DEFAULT_SPECIALS + (SEP,)

DEFAULT_THRESHOLD = 0.9


@dataclass
class ClassifierConfig:
    embed_dim: int = 100
    hidden_dim: int = 128
    attn_dim: int = 64
    max_context_tokens: int = 256
    seed: int = 0


@dataclass
class LabeledSentence:
    sentence_tokens: list[str]
    context_tokens: list[str]
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"LabeledSentence: label must be 0/1, got {self.label}")


@dataclass
class ClassifierTrainConfig:
    batch_size: int = 32
    learning_rate: float = 0.15
    accumulator_init: float = 0.1
    max_grad_norm: float = 2.0
    max_epochs: int = 40
    patience: int = 5
    validation_fraction: float = 0.15
    seed: int = 0


@dataclass
class ClassifierEpoch:
    epoch: int
    train_loss: float
    val_accuracy: float
    patience_left: int


class CommitmentClassifier:
    """Scores sentences with P(commitment); immutable once trained."""

    def __init__(self, vocab: text.Vocabulary, config: ClassifierConfig,
                 params: dict[str, np.ndarray] | None = None):
        self.vocab = vocab
        self.config = config
        E, H, A = config.embed_dim, config.hidden_dim, config.attn_dim
        V = len(vocab)
        if params is None:
            rng = np.random.default_rng(config.seed)
            def u(*shape):
                return rng.uniform(-0.1, 0.1, size=shape)
            params = {
                "embedding": u(V, E),
                "lstm_wx": u(E, 4 * H),
                "lstm_wh": u(H, 4 * H),
                "lstm_b": np.zeros((1, 4 * H)),
                "attn_w": u(H, A),
                "attn_b": np.zeros((1, A)),
                "attn_v": u(A, 1),
                # zero output projection: a fresh classifier scores 0.5
                "out_w": np.zeros((H, 1)),
                "out_b": np.zeros((1, 1)),
            }
        self.params = {name: nm.parameter(arr) for name, arr in params.items()}
        self._check_shapes()

    def _check_shapes(self):
        E, H, A = self.config.embed_dim, self.config.hidden_dim, self.config.attn_dim
        expected = {
            "embedding": (len(self.vocab), E),
            "lstm_wx": (E, 4 * H), "lstm_wh": (H, 4 * H), "lstm_b": (1, 4 * H),
            "attn_w": (H, A), "attn_b": (1, A), "attn_v": (A, 1),
            "out_w": (H, 1), "out_b": (1, 1),
        }
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ValueError(f"classifier parameter '{name}' has shape "
                                 f"{self.params[name].shape}, expected {shape}")

    # ---------------------------------------------------------------- input

    def input_ids(self, sentence_tokens: list[str],
                  context_tokens: list[str]) -> list[int]:
        ctx = context_tokens[:self.config.max_context_tokens]
        tokens = list(sentence_tokens) + ([SEP] + ctx if ctx else [])
        return [self.vocab.id_of(t) for t in tokens]

    # -------------------------------------------------------------- forward

    def logits(self, ids_batch: np.ndarray, mask: np.ndarray) -> nm.Tensor:
        """Batched forward to pre-sigmoid logits; (B, T) ids and 0/1 mask."""
        p = self.params
        B, T = ids_batch.shape
        H = self.config.hidden_dim
        h = nm.constant(np.zeros((B, H)))
        c = nm.constant(np.zeros((B, H)))
        states = []
        full = mask.all(axis=0)
        for t in range(T):
            x = nm.embedding_lookup(p["embedding"], ids_batch[:, t])
            pre = nm.add(nm.add(nm.matmul(x, p["lstm_wx"]),
                                nm.matmul(h, p["lstm_wh"])), p["lstm_b"])
            h_new, c_new = nm.lstm_cell(pre, c)
            if full[t]:
                h, c = h_new, c_new
            else:
                m = nm.constant(mask[:, t:t + 1])
                km = nm.constant(1.0 - mask[:, t:t + 1])
                h = nm.add(nm.mul(h_new, m), nm.mul(h, km))
                c = nm.add(nm.mul(c_new, m), nm.mul(c, km))
            states.append(h)
        stacked = nm.stack(states, axis=1)                      # (B, T, H)
        flat = nm.reshape(stacked, (B * T, H))
        scores = nm.matmul(nm.tanh(nm.add(nm.matmul(flat, p["attn_w"]),
                                          p["attn_b"])), p["attn_v"])
        scores = nm.reshape(scores, (B, T))
        scores = nm.add(scores, nm.constant((mask - 1.0) * 1e9))
        alpha = nm.softmax(scores, axis=1)
        pooled = nm.reshape(nm.matmul(nm.reshape(alpha, (B, 1, T)), stacked), (B, H))
        return nm.add(nm.matmul(pooled, p["out_w"]), p["out_b"])  # (B, 1)

    def attention_weights(self, sentence_tokens, context_tokens) -> np.ndarray:
        """Eval-mode self-attention pooling weights (sums to 1)."""
        ids = np.array([self.input_ids(sentence_tokens, context_tokens)], dtype=np.int64)
        mask = np.ones_like(ids, dtype=np.float64)
        p = self.params
        B, T = ids.shape
        H = self.config.hidden_dim
        h = nm.constant(np.zeros((B, H)))
        c = nm.constant(np.zeros((B, H)))
        states = []
        for t in range(T):
            x = nm.embedding_lookup(p["embedding"], ids[:, t])
            pre = nm.add(nm.add(nm.matmul(x, p["lstm_wx"]),
                                nm.matmul(h, p["lstm_wh"])), p["lstm_b"])
            h, c = nm.lstm_cell(pre, c)
            states.append(h)
        stacked = nm.stack(states, axis=1)
        flat = nm.reshape(stacked, (B * T, H))
        scores = nm.matmul(nm.tanh(nm.add(nm.matmul(flat, p["attn_w"]),
                                          p["attn_b"])), p["attn_v"])
        alpha = nm.softmax(nm.reshape(scores, (B, T)), axis=1)
        return alpha.data[0]

    def score_batch(self, items: list[tuple[list[str], list[str]]]) -> np.ndarray:
        """Scores for (sentence_tokens, context_tokens) pairs, eval mode."""
        id_lists = [self.input_ids(s, ctx) for s, ctx in items]
        if any(not ids for ids in id_lists):
            raise ValueError("score: empty sentence")
        T = max(len(ids) for ids in id_lists)
        pad = self.vocab.pad_id
        ids = np.full((len(id_lists), T), pad, dtype=np.int64)
        mask = np.zeros((len(id_lists), T), dtype=np.float64)
        for i, lst in enumerate(id_lists):
            ids[i, :len(lst)] = lst
            mask[i, :len(lst)] = 1.0
        z = self.logits(ids, mask).data[:, 0]
        return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)),
                        np.exp(z) / (1.0 + np.exp(z)))

    def score(self, sentence_tokens: list[str],
              context_tokens: list[str] | None = None) -> float:
        """P(commitment) for one sentence within its email context."""
        return float(self.score_batch([(sentence_tokens, context_tokens or [])])[0])

    # ----------------------------------------------------------- persistence

    def save(self, ckpt_path, vocab_path) -> None:
        self.vocab.save(vocab_path)
        with open(vocab_path, "rb") as fh:
            vocab_hash = hashlib.sha256(fh.read()).hexdigest()
        meta = {
            "kind": "commitment-classifier",
            "config": {
                "embed_dim": self.config.embed_dim,
                "hidden_dim": self.config.hidden_dim,
                "attn_dim": self.config.attn_dim,
                "max_context_tokens": self.config.max_context_tokens,
                "seed": self.config.seed,
            },
            "init": "uniform(-0.1, 0.1)",
            "vocab_file": str(vocab_path),
            "vocab_sha256": vocab_hash,
        }
        save_params(ckpt_path, self.params, meta)

    @classmethod
    def load(cls, ckpt_path, vocab_path=None) -> "CommitmentClassifier":
        params, meta = load_params(ckpt_path)
        if meta.get("kind") != "commitment-classifier":
            raise ValueError(f"{ckpt_path}: not a classifier checkpoint")
        vp = vocab_path or meta["vocab_file"]
        with open(vp, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        if digest != meta["vocab_sha256"]:
            raise ValueError(f"{vp}: vocabulary hash does not match checkpoint")
        vocab = text.Vocabulary.load(vp, specials=CLASSIFIER_SPECIALS)
        config = ClassifierConfig(**{k: meta["config"][k] for k in
                                     ("embed_dim", "hidden_dim", "attn_dim",
                                      "max_context_tokens", "seed")})
        return cls(vocab, config, params)


# --------------------------------------------------------------------------
# Training data helpers
# --------------------------------------------------------------------------

def labeled_sentences_from_instances(instances: list[TodoInstance]) -> list[LabeledSentence]:
    """One labeled example per candidate-email sentence; the context is the
    rest of that email's tokens."""
    out = []
    for inst in instances:
        sentences = inst.candidate_sentences()
        token_lists = [text.tokenize(s) for s in sentences]
        for i, toks in enumerate(token_lists):
            if not toks:
                continue
            context = [t for j, lst in enumerate(token_lists) if j != i for t in lst]
            out.append(LabeledSentence(toks, context,
                                       int(i == inst.commitment_sentence_index)))
    return out


def balance_classes(data: list[LabeledSentence], seed: int = 0) -> list[LabeledSentence]:
    """Downsample the majority class to the minority count (seeded)."""
    pos = [d for d in data if d.label == 1]
    neg = [d for d in data if d.label == 0]
    rng = np.random.default_rng(seed)
    if len(pos) > len(neg):
        keep = rng.choice(len(pos), size=len(neg), replace=False)
        pos = [pos[i] for i in sorted(keep)]
    elif len(neg) > len(pos):
        keep = rng.choice(len(neg), size=len(pos), replace=False)
        neg = [neg[i] for i in sorted(keep)]
    merged = pos + neg
    order = rng.permutation(len(merged))
    return [merged[i] for i in order]


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------

def _batch_arrays(data: list[LabeledSentence], clf: CommitmentClassifier):
    id_lists = [clf.input_ids(d.sentence_tokens, d.context_tokens) for d in data]
    T = max(len(ids) for ids in id_lists)
    pad = clf.vocab.pad_id
    ids = np.full((len(data), T), pad, dtype=np.int64)
    mask = np.zeros((len(data), T), dtype=np.float64)
    for i, lst in enumerate(id_lists):
        ids[i, :len(lst)] = lst
        mask[i, :len(lst)] = 1.0
    labels = np.array([[d.label] for d in data], dtype=np.float64)
    return ids, mask, labels


def train_classifier(data: list[LabeledSentence],
                     config: ClassifierConfig | None = None,
                     train_config: ClassifierTrainConfig | None = None,
                     min_count: int = 2) -> tuple[CommitmentClassifier, list[ClassifierEpoch]]:
    """Balance classes, then minimize binary cross-entropy with Adagrad and
    gradient clipping; early stop on validation accuracy."""
    config = config or ClassifierConfig()
    tc = train_config or ClassifierTrainConfig()
    n_pos = sum(1 for d in data if d.label == 1)
    n_neg = len(data) - n_pos
    if n_pos < 2 or n_neg < 2:
        raise ValueError(f"train_classifier: need >= 2 examples per class "
                         f"(got {n_pos} positive / {n_neg} negative)")
    balanced = balance_classes(data, seed=tc.seed)
    n_val = max(2, int(len(balanced) * tc.validation_fraction))
    val, train_data = balanced[:n_val], balanced[n_val:]

    vocab = text.build_vocabulary(
        ([*d.sentence_tokens, *d.context_tokens] for d in train_data),
        min_count=min_count, specials=CLASSIFIER_SPECIALS)
    clf = CommitmentClassifier(vocab, config)
    state = nm.AdagradState(clf.params, tc.learning_rate, tc.accumulator_init)
    rng = np.random.default_rng(tc.seed + 1)

    def val_accuracy() -> float:
        scores = clf.score_batch([(d.sentence_tokens, d.context_tokens) for d in val])
        pred = (scores >= 0.5).astype(int)
        return float(np.mean(pred == np.array([d.label for d in val])))

    best_acc = -1.0
    best_params = None
    patience_left = tc.patience
    history: list[ClassifierEpoch] = []
    for epoch in range(1, tc.max_epochs + 1):
        order = rng.permutation(len(train_data))
        total_loss = 0.0
        n_seen = 0
        for start in range(0, len(order), tc.batch_size):
            chunk = [train_data[i] for i in order[start:start + tc.batch_size]]
            ids, mask, labels = _batch_arrays(chunk, clf)
            with nm.Tape() as tape:
                z = clf.logits(ids, mask)
                loss = nm.mean(nm.bce_with_logits(z, labels))
                tape.backward(loss)
            nm.clip_grad_norm(clf.params, tc.max_grad_norm)
            nm.adagrad_step(clf.params, state)
            total_loss += float(loss.data) * len(chunk)
            n_seen += len(chunk)
        acc = val_accuracy()
        if acc > best_acc:
            best_acc = acc
            best_params = {k: v.data.copy() for k, v in clf.params.items()}
            patience_left = tc.patience
        else:
            patience_left -= 1
        history.append(ClassifierEpoch(epoch, total_loss / max(n_seen, 1),
                                       acc, patience_left))
        if patience_left == 0:
            break
    if best_params is not None:
        for k, v in clf.params.items():
            v.data = best_params[k]
            v.grad = None
    return clf, history


# --------------------------------------------------------------------------
# Candidate extraction
# --------------------------------------------------------------------------

@dataclass
class Candidate:
    email: EmailMessage
    sentence_index: int
    score: float
    sentence: str = field(default="")


def extract_candidates(classifier: CommitmentClassifier,
                       emails: list[EmailMessage],
                       threshold: float = DEFAULT_THRESHOLD) -> list[Candidate]:
    """All sentences scoring >= threshold, ordered by score desc then
    document order."""
    found = []
    for pos, email in enumerate(emails):
        sentences = text.split_sentences(email.body)
        token_lists = [text.tokenize(s) for s in sentences]
        items = []
        kept = []
        for i, toks in enumerate(token_lists):
            if not toks:
                continue
            context = [t for j, lst in enumerate(token_lists) if j != i for t in lst]
            items.append((toks, context))
            kept.append(i)
        if not items:
            continue
        scores = classifier.score_batch(items)
        for i, s in zip(kept, scores):
            if s >= threshold:
                found.append((pos, i, float(s), email, sentences[i]))
    found.sort(key=lambda t: (-t[2], t[0], t[1]))
    return [Candidate(email=e, sentence_index=i, score=s, sentence=sent)
            for pos, i, s, e, sent in found]
