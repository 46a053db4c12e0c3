"""Encoder input serialization and the extended copy vocabulary.

The serialized layout is fixed::

    <to> recipient.. <sub> subject.. <query> commitment.. <sent> selected.. <eos>

All markers are always present (an empty field leaves two markers adjacent).
Inputs longer than the token budget drop trailing selected-sentence material
first.  The extended vocabulary V' adds one slot per source token missing
from the target vocabulary, which is what lets the decoder copy it.
"""

from __future__ import annotations

from dataclasses import dataclass

from .. import text
from ..corpus import TodoInstance
from ..text import MARK_END, MARK_QUERY, MARK_SENT, MARK_SUBJECT, MARK_TO

DEFAULT_MAX_INPUT_TOKENS = 400


@dataclass
class EncoderInput:
    """Serialized source token sequence plus the span holding the commitment
    (query) tokens, used by the dual-encoder variant."""
    tokens: list[str]
    query_span: tuple[int, int]

    @property
    def query_tokens(self) -> list[str]:
        return self.tokens[self.query_span[0]:self.query_span[1]]

    @property
    def rest_tokens(self) -> list[str]:
        return self.tokens[:self.query_span[0]] + self.tokens[self.query_span[1]:]


def serialize_input(instance: TodoInstance,
                    selected_sentences: list[str],
                    max_tokens: int = DEFAULT_MAX_INPUT_TOKENS) -> EncoderInput:
    """Serialize one instance with its selected sentences (score order)."""
    query = text.tokenize(instance.commitment_sentence())
    if not query:
        raise ValueError(f"serialize_input: instance {instance.id} has an "
                         "empty commitment sentence")
    recipients = instance.thread.candidate.recipients
    recipient = text.tokenize(recipients[0]) if recipients else []
    subject = text.tokenize(instance.thread.candidate.subject)
    selected: list[str] = []
    for sentence in selected_sentences:
        selected.extend(text.tokenize(sentence))

    head = [MARK_TO, *recipient, MARK_SUBJECT, *subject, MARK_QUERY, *query]
    query_start = len(head) - len(query)
    budget = max_tokens - len(head) - 2          # <sent> ... <eos>
    if budget < 0:
        head = head[:max_tokens - 2]
        budget = 0
        query_start = min(query_start, len(head))
    tokens = head + [MARK_SENT] + selected[:max(budget, 0)] + [MARK_END]
    return EncoderInput(tokens=tokens,
                        query_span=(query_start, min(query_start + len(query), len(head))))


def concatenate_baseline(instance: TodoInstance) -> str:
    """Model-free baseline: recipient + subject + commitment tokens joined."""
    recipients = instance.thread.candidate.recipients
    parts = text.tokenize(recipients[0]) if recipients else []
    parts = parts + text.tokenize(instance.thread.candidate.subject)
    parts = parts + text.tokenize(instance.commitment_sentence())
    return " ".join(parts)


class ExtendedVocab:
    """Per-instance V' = target vocabulary plus this source's unknown tokens.

    ``src_ext_ids[t]`` is the extended id of source position t (a target
    vocabulary id when the token is in-vocabulary, otherwise a slot past the
    end, ordered by first occurrence).
    """

    def __init__(self, tgt_vocab: text.Vocabulary, src_tokens: list[str]):
        self.tgt_vocab = tgt_vocab
        self.oov_tokens: list[str] = []
        oov_slot: dict[str, int] = {}
        self.src_ext_ids: list[int] = []
        base = len(tgt_vocab)
        for token in src_tokens:
            if token in tgt_vocab:
                self.src_ext_ids.append(tgt_vocab.token_to_id[token])
            else:
                if token not in oov_slot:
                    oov_slot[token] = base + len(self.oov_tokens)
                    self.oov_tokens.append(token)
                self.src_ext_ids.append(oov_slot[token])
        self._oov_slot = oov_slot

    @property
    def size(self) -> int:
        return len(self.tgt_vocab) + len(self.oov_tokens)

    def encode_target(self, tokens: list[str]) -> list[int]:
        """Target tokens in extended space: vocabulary id, else the source
        OOV slot, else UNK."""
        ids = []
        for token in tokens:
            if token in self.tgt_vocab:
                ids.append(self.tgt_vocab.token_to_id[token])
            elif token in self._oov_slot:
                ids.append(self._oov_slot[token])
            else:
                ids.append(self.tgt_vocab.unk_id)
        return ids

    def surface(self, ext_id: int) -> str:
        """Token string for an extended id."""
        if 0 <= ext_id < len(self.tgt_vocab):
            return self.tgt_vocab.id_to_token[ext_id]
        slot = ext_id - len(self.tgt_vocab)
        if 0 <= slot < len(self.oov_tokens):
            return self.oov_tokens[slot]
        raise ValueError(f"extended id {ext_id} out of range (size {self.size})")
