"""Tokenization, sentence splitting, lemmatization, and vocabularies.

Every stage of the pipeline shares these exact rules, so metric numbers and
selection scores are deterministic and reproducible.  The stopword list and
the irregular-lemma map are versioned constants: changing either changes
selection output.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

# Special markers. PAD/UNK/BOS/EOS frame model sequences; the remaining five
# delimit serialized email fields (the trailing "<eos>" is the input
# terminator and is distinct from the decoder stop symbol "</s>").
PAD = "<pad>"
UNK = "<unk>"
BOS = "<s>"
EOS = "</s>"
MARK_TO = "<to>"
MARK_SUBJECT = "<sub>"
MARK_QUERY = "<query>"
MARK_SENT = "<sent>"
MARK_END = "<eos>"

DEFAULT_SPECIALS = (PAD, UNK, BOS, EOS, MARK_TO, MARK_SUBJECT, MARK_QUERY,
                    MARK_SENT, MARK_END)

_TOKEN_RE = re.compile(r"n't|'(?:ll|re|ve|d|s|m)\b|\w+|[^\w\s]")
_NT_RE = re.compile(r"(?<=\w)n't\b")

_ABBREVIATIONS = frozenset({
    "e.g.", "i.e.", "etc.", "cf.", "vs.", "mr.", "mrs.", "ms.", "dr.",
    "prof.", "st.", "jr.", "sr.", "no.", "inc.", "dept.", "approx.",
    "a.m.", "p.m.", "u.s.",
})

# ~150 English function words (lowercased), including auxiliaries such as
# "will" and the contraction suffixes produced by tokenize().
STOPWORDS = frozenset("""
a about above after again against all am an and any are as at be because been
before being below between both but by can cannot could did do does doing down
during each either few for from further had has have having he her here hers
herself him himself his how i if in into is it its itself just may me might
more most must my myself neither no nor not now of off on once only onto or
other ought our ours ourselves out over own same shall she should so some such
than that the their theirs them themselves then there these they this those
through to too under until up upon very was we were what when where whether
which while who whom why will with within without would you your yours yourself
yourselves 'll 're 've 'd 's 'm n't
""".split())

_IRREGULAR_LEMMAS = {
    "am": "be", "are": "be", "been": "be", "being": "be", "is": "be",
    "was": "be", "were": "be",
    "has": "have", "had": "have", "does": "do", "did": "do", "done": "do",
    "went": "go", "gone": "go", "made": "make", "said": "say", "told": "tell",
    "sent": "send", "found": "find", "gave": "give", "given": "give",
    "got": "get", "gotten": "get", "took": "take", "taken": "take",
    "kept": "keep", "met": "meet", "left": "leave", "sat": "sit",
    "ran": "run", "came": "come", "saw": "see", "seen": "see",
    "wrote": "write", "written": "write", "held": "hold",
    "brought": "bring", "thought": "think", "built": "build",
    "spent": "spend", "meant": "mean", "felt": "feel", "heard": "hear",
    "paid": "pay", "lost": "lose", "put": "put", "let": "let",
    "men": "man", "women": "woman", "children": "child", "people": "person",
    "feet": "foot", "teeth": "tooth", "mice": "mouse",
}

_VOWELS = "aeiou"


def tokenize(text: str) -> list[str]:
    """Lowercased tokens; punctuation split off; contraction suffixes
    ('ll 're 've 'd 's 'm n't) kept as separate tokens."""
    lowered = _NT_RE.sub(" n't", text.lower())
    return _TOKEN_RE.findall(lowered)


def split_sentences(body: str) -> list[str]:
    """Split on sentence terminators (. ! ?) followed by whitespace or end,
    guarding a fixed abbreviation list; a blank line also splits."""
    sentences: list[str] = []
    buf: list[str] = []

    def flush() -> None:
        sent = "".join(buf).strip()
        if sent:
            sentences.append(sent)
        buf.clear()

    i = 0
    n = len(body)
    while i < n:
        ch = body[i]
        if ch == "\n" and i + 1 < n and body[i + 1] == "\n":
            flush()
            while i < n and body[i] == "\n":
                i += 1
            continue
        buf.append(ch)
        if ch in ".!?":
            while i + 1 < n and body[i + 1] in ".!?":
                i += 1
                buf.append(body[i])
            at_end = i + 1 >= n
            if at_end or body[i + 1].isspace():
                tail_parts = "".join(buf).rsplit(None, 1)
                tail = tail_parts[-1].lower() if tail_parts else ""
                if not (buf[-1] == "." and tail in _ABBREVIATIONS):
                    flush()
        i += 1
    flush()
    return sentences


def _restore_stem(stem: str) -> str:
    # running -> runn -> run; keep ll/ss/zz and doubled vowels
    if (len(stem) >= 3 and stem[-1] == stem[-2]
            and stem[-1] not in _VOWELS and stem[-1] not in "lsz"):
        return stem[:-1]
    # mak -> make, updat -> update (consonant-vowel-consonant tail)
    if (len(stem) >= 3 and stem[-1] not in _VOWELS and stem[-1] not in "wxy"
            and stem[-2] in _VOWELS and stem[-3] not in _VOWELS):
        return stem + "e"
    return stem


def lemmatize(token: str) -> str:
    """Rule-based lemma: irregular map, then plural / -ing / -ed stripping
    with doubling and e-restoration heuristics.  Idempotent."""
    t = token
    if t in _IRREGULAR_LEMMAS:
        return _IRREGULAR_LEMMAS[t]
    if not t.isalpha() or len(t) <= 3:
        return t
    if t.endswith("ies") and len(t) > 4:
        return t[:-3] + "y"
    if t.endswith("sses"):
        return t[:-2]
    if t.endswith(("xes", "ches", "shes", "zes", "oes")):
        return t[:-2]
    if t.endswith("s") and not t.endswith(("ss", "us", "is")):
        return t[:-1]
    if t.endswith("ing") and len(t) >= 6:
        return _restore_stem(t[:-3])
    if t.endswith("ed") and len(t) >= 5:
        return _restore_stem(t[:-2])
    return t


def is_stopword(token: str) -> bool:
    return token in STOPWORDS


def content_lemmas(tokens: list[str]) -> list[str]:
    """Lemmas of the non-stopword tokens, in order (duplicates kept)."""
    return [lemmatize(t) for t in tokens if not is_stopword(t)]


@dataclass
class TokenSequence:
    """Parallel token strings and vocabulary ids (unknowns UNK-mapped)."""
    tokens: list[str]
    ids: list[int]


class Vocabulary:
    """Token <-> id bijection with specials at the lowest ids.

    Non-special tokens are those that occurred at least ``min_count`` times
    in the build corpus, ordered by (count desc, token asc).
    """

    def __init__(self, id_to_token: list[str], specials: tuple[str, ...],
                 min_count: int):
        self.id_to_token = list(id_to_token)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        self.specials = tuple(specials)
        self.min_count = min_count
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("vocabulary contains duplicate tokens")
        if tuple(self.id_to_token[:len(specials)]) != self.specials:
            raise ValueError("specials must occupy the lowest ids in order")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK]

    @property
    def bos_id(self) -> int:
        return self.token_to_id[BOS]

    @property
    def eos_id(self) -> int:
        return self.token_to_id[EOS]

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, self.token_to_id[UNK])

    def encode(self, tokens: list[str]) -> TokenSequence:
        return TokenSequence(list(tokens), [self.id_of(t) for t in tokens])

    def decode(self, ids: list[int]) -> list[str]:
        out = []
        for i in ids:
            if not 0 <= i < len(self.id_to_token):
                raise ValueError(f"id {i} out of range for vocabulary of size {len(self)}")
            out.append(self.id_to_token[i])
        return out

    def save(self, path) -> None:
        """One token per line; line number = id; specials first."""
        with open(path, "w", encoding="utf-8") as fh:
            for token in self.id_to_token:
                if "\n" in token:
                    raise ValueError(f"token {token!r} contains a newline")
                fh.write(token + "\n")

    @classmethod
    def load(cls, path, specials: tuple[str, ...] = DEFAULT_SPECIALS,
             min_count: int = 2) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            id_to_token = [line.rstrip("\n") for line in fh]
        return cls(id_to_token, specials, min_count)


def build_vocabulary(sequences, min_count: int = 2,
                     specials: tuple[str, ...] = DEFAULT_SPECIALS) -> Vocabulary:
    """Count tokens across ``sequences`` (iterable of token lists) and keep
    those seen at least ``min_count`` times, after the specials."""
    counts: dict[str, int] = {}
    for seq in sequences:
        for token in seq:
            counts[token] = counts.get(token, 0) + 1
    special_set = set(specials)
    kept = [(t, c) for t, c in counts.items()
            if c >= min_count and t not in special_set]
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    return Vocabulary(list(specials) + [t for t, _ in kept], specials, min_count)
