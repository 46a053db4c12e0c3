"""Email/To-Do data model, line-delimited record IO, dataset splitting, and
a deterministic synthetic corpus generator.

Record schema (one JSON object per line, UTF-8, unknown fields ignored)::

    {"id": str,
     "candidate": {"from": str, "to": [str], "subject": str, "body": str,
                   "sent_time": int, "reply_to_id": str?},
     "previous": {...}?,          # same shape as candidate
     "commitment_index": int,     # into sentence-split candidate body
     "annotations": [str],        # 1-2 reference To-Do strings
     "helpful_labels": [bool]?}   # over candidate then previous sentences

The synthetic generator plants, per instance: one commitment sentence, one
helpful sentence sharing >= 2 content lemmas with the reference To-Do,
distractors sharing none, and a reference containing an entity token that is
used (almost) nowhere else in the corpus -- so any fixed generation
vocabulary must copy it from the source.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from . import text


class CorpusFormatError(ValueError):
    """A record violated the schema; the message names line and field."""


@dataclass(frozen=True)
class EmailMessage:
    id: str
    sender: str                    # JSON key "from"
    recipients: list[str]          # JSON key "to"
    subject: str
    body: str
    sent_time: int
    reply_to_id: str | None = None

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "from": self.sender,
            "to": list(self.recipients),
            "subject": self.subject,
            "body": self.body,
            "sent_time": self.sent_time,
        }
        if self.reply_to_id is not None:
            d["reply_to_id"] = self.reply_to_id
        return d

    def __eq__(self, other):
        if not isinstance(other, EmailMessage):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(self.id)


@dataclass(frozen=True)
class EmailThread:
    """The candidate email and, when it is a reply, the email it replies to."""
    candidate: EmailMessage
    previous: EmailMessage | None = None


@dataclass(frozen=True)
class TodoInstance:
    id: str
    thread: EmailThread
    commitment_sentence_index: int
    annotations: list[str]
    helpful_labels: list[bool] | None = None

    def candidate_sentences(self) -> list[str]:
        return text.split_sentences(self.thread.candidate.body)

    def previous_sentences(self) -> list[str]:
        if self.thread.previous is None:
            return []
        return text.split_sentences(self.thread.previous.body)

    def all_sentences(self) -> list[str]:
        """Candidate sentences first, then previous; helpful_labels align
        with this enumeration."""
        return self.candidate_sentences() + self.previous_sentences()

    def commitment_sentence(self) -> str:
        return self.candidate_sentences()[self.commitment_sentence_index]

    def to_dict(self) -> dict:
        d: dict = {"id": self.id, "candidate": self.thread.candidate.to_dict()}
        if self.thread.previous is not None:
            d["previous"] = self.thread.previous.to_dict()
        d["commitment_index"] = self.commitment_sentence_index
        d["annotations"] = list(self.annotations)
        if self.helpful_labels is not None:
            d["helpful_labels"] = list(self.helpful_labels)
        return d


@dataclass
class DatasetSplit:
    train: list[TodoInstance]
    validation: list[TodoInstance]
    test: list[TodoInstance]


# --------------------------------------------------------------------------
# Loading / saving
# --------------------------------------------------------------------------

def _parse_message(obj, line_no: int, which: str, default_id: str) -> EmailMessage:
    if not isinstance(obj, dict):
        raise CorpusFormatError(f"line {line_no}: {which}: expected an object")
    for key in ("from", "to", "subject", "body", "sent_time"):
        if key not in obj:
            raise CorpusFormatError(f"line {line_no}: {which}.{key}: missing field")
    if not isinstance(obj["to"], list):
        raise CorpusFormatError(f"line {line_no}: {which}.to: expected a list")
    return EmailMessage(
        id=str(obj.get("id", default_id)),
        sender=str(obj["from"]),
        recipients=[str(r) for r in obj["to"]],
        subject=str(obj["subject"]),
        body=str(obj["body"]),
        sent_time=int(obj["sent_time"]),
        reply_to_id=(str(obj["reply_to_id"]) if obj.get("reply_to_id") is not None else None),
    )


def _parse_record(obj: dict, line_no: int) -> TodoInstance:
    if "id" not in obj or not str(obj["id"]):
        raise CorpusFormatError(f"line {line_no}: id: missing or empty")
    rec_id = str(obj["id"])
    if "candidate" not in obj:
        raise CorpusFormatError(f"line {line_no}: candidate: missing field")
    candidate = _parse_message(obj["candidate"], line_no, "candidate", rec_id)

    previous = None
    if obj.get("previous") is not None:
        previous = _parse_message(obj["previous"], line_no, "previous",
                                  candidate.reply_to_id or rec_id + ":prev")
        if candidate.reply_to_id is None:
            candidate = EmailMessage(candidate.id, candidate.sender,
                                     candidate.recipients, candidate.subject,
                                     candidate.body, candidate.sent_time,
                                     reply_to_id=previous.id)
        elif candidate.reply_to_id != previous.id:
            raise CorpusFormatError(
                f"line {line_no}: candidate.reply_to_id: does not match previous.id")
        if previous.sent_time >= candidate.sent_time:
            raise CorpusFormatError(
                f"line {line_no}: previous.sent_time: not earlier than candidate")

    if "commitment_index" not in obj:
        raise CorpusFormatError(f"line {line_no}: commitment_index: missing field")
    idx = int(obj["commitment_index"])
    n_sents = len(text.split_sentences(candidate.body))
    if not 0 <= idx < n_sents:
        raise CorpusFormatError(
            f"line {line_no}: commitment_index: {idx} out of range "
            f"(candidate has {n_sents} sentences)")

    annotations = obj.get("annotations")
    if (not isinstance(annotations, list) or not annotations
            or not any(str(a).strip() for a in annotations)):
        raise CorpusFormatError(
            f"line {line_no}: annotations: need at least one non-empty annotation")
    annotations = [str(a) for a in annotations]

    labels = None
    if obj.get("helpful_labels") is not None:
        labels = [bool(b) for b in obj["helpful_labels"]]
        thread_len = n_sents + (len(text.split_sentences(previous.body)) if previous else 0)
        if len(labels) != thread_len:
            raise CorpusFormatError(
                f"line {line_no}: helpful_labels: length {len(labels)} != "
                f"{thread_len} thread sentences")

    return TodoInstance(
        id=rec_id,
        thread=EmailThread(candidate=candidate, previous=previous),
        commitment_sentence_index=idx,
        annotations=annotations,
        helpful_labels=labels,
    )


def load_corpus(path, strict: bool = True,
                diagnostics: list[str] | None = None) -> list[TodoInstance]:
    """Parse a record file.  In strict mode the first malformed line raises;
    otherwise bad lines are skipped and described in ``diagnostics``."""
    instances: list[TodoInstance] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusFormatError(f"line {line_no}: record: invalid JSON ({exc.msg})")
                inst = _parse_record(obj, line_no)
                if inst.id in seen_ids:
                    raise CorpusFormatError(f"line {line_no}: id: duplicate '{inst.id}'")
            except CorpusFormatError as exc:
                if strict:
                    raise
                if diagnostics is not None:
                    diagnostics.append(str(exc))
                continue
            seen_ids.add(inst.id)
            instances.append(inst)
    return instances


def save_corpus(instances: list[TodoInstance], path) -> None:
    """Write records; byte-deterministic for a fixed instance list."""
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_dict(), ensure_ascii=False) + "\n")


def load_emails(path) -> list[EmailMessage]:
    """Parse a plain email file: one message object per line (same shape as
    the ``candidate`` sub-object, ``id`` required)."""
    emails = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {line_no}: record: invalid JSON ({exc.msg})")
            if not isinstance(obj, dict) or "id" not in obj:
                raise CorpusFormatError(f"line {line_no}: id: missing field")
            emails.append(_parse_message(obj, line_no, "email", str(obj["id"])))
    return emails


def save_emails(emails: list[EmailMessage], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for email in emails:
            fh.write(json.dumps(email.to_dict(), ensure_ascii=False) + "\n")


# --------------------------------------------------------------------------
# Splitting / reference choice
# --------------------------------------------------------------------------

def split_dataset(instances: list[TodoInstance],
                  ratios: tuple[float, float, float] = (7349 / 9349, 1000 / 9349, 1000 / 9349),
                  seed: int = 0) -> DatasetSplit:
    """Seeded Fisher-Yates shuffle, then floor-sized validation/test with the
    remainder going to train."""
    if len(instances) < 3:
        raise ValueError("split_dataset: need at least 3 instances")
    if any(r < 0 for r in ratios):
        raise ValueError("split_dataset: ratios must be non-negative")
    if abs(1.0 - (ratios[0] + ratios[1] + ratios[2])) > 1e-9:
        raise ValueError(f"split_dataset: ratios sum to {ratios[0] + ratios[1] + ratios[2]}, not 1")
    order = list(instances)
    rng = random.Random(seed)
    # Fisher-Yates, fixed so partitions are reproducible across platforms
    for i in range(len(order) - 1, 0, -1):
        j = rng.randrange(i + 1)
        order[i], order[j] = order[j], order[i]
    n = len(order)
    n_val = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_val - n_test
    return DatasetSplit(
        train=order[:n_train],
        validation=order[n_train:n_train + n_val],
        test=order[n_train + n_val:],
    )


def choose_reference(annotations: list[str]) -> str:
    """The annotation with the fewest tokens; ties keep the earliest."""
    if not annotations:
        raise ValueError("choose_reference: empty annotation list")
    best = annotations[0]
    best_len = len(text.tokenize(best))
    for ann in annotations[1:]:
        n = len(text.tokenize(ann))
        if n < best_len:
            best, best_len = ann, n
    return best


# --------------------------------------------------------------------------
# Synthetic corpus
# --------------------------------------------------------------------------

@dataclass
class SynthSpec:
    n_instances: int
    vocab_size: int | None = None
    entity_pool: list[str] | None = None
    seed: int = 0
    previous_email_rate: float = 0.5


_NAMES = ["alice", "bob", "carol", "david", "erin", "frank", "grace",
          "henry", "irene", "jack", "karen", "luis"]

_VERBS = ["send", "review", "update", "prepare", "forward", "test",
          "schedule", "fix", "share", "draft", "deploy", "merge",
          "confirm", "archive", "upload"]

_OBJECTS = ["report", "database", "presentation", "budget", "script",
            "proposal", "agenda", "invoice", "roadmap", "dashboard",
            "contract", "spreadsheet", "backlog", "manual", "survey"]

_MODIFIERS = ["quarterly", "weekly", "final", "sales", "annual", "marketing",
              "onboarding", "billing", "security", "staging", "legacy",
              "regional", "internal", "revised", "vendor"]

_DAYS = ["monday", "tuesday", "wednesday", "thursday", "friday"]

# Filler pools are disjoint (as lemmas) from every content pool above, so
# distractor sentences share zero content lemmas with any reference To-Do.
_FILLER_NOUNS = ["weather", "coffee", "lunch", "hallway", "garden", "window",
                 "traffic", "playlist", "weekend", "holiday", "stadium",
                 "museum", "recipe", "puppy", "novel", "guitar", "bicycle",
                 "ocean", "mountain", "kitchen", "blanket", "balcony",
                 "harbor", "lantern", "orchard"]

_FILLER_ADJS = ["quiet", "sunny", "crowded", "cozy", "noisy", "foggy",
                "bright", "chilly", "dusty", "mellow"]

_DISTRACTOR_TEMPLATES = [
    "The {n1} near the {n2} was {a} today.",
    "My {n1} felt {a} during the {n2}.",
    "That {a} {n1} reminded me of the {n2}.",
    "We heard a {a} {n1} by the {n2}.",
    "Everyone enjoyed the {a} {n1} at the {n2}.",
]

_HELPFUL_TEMPLATES = [
    "The {mod} {obj} for {entity} is almost ready.",
    "Our {mod} {obj} for {entity} still needs one more pass.",
    "Notes on the {mod} {obj} for {entity} are attached.",
]

_ENTITY_ONSETS = ["bral", "dorn", "fexa", "gilm", "harn", "jexo", "kovu",
                  "lund", "merr", "nolt", "pask", "quil", "ryza", "stel",
                  "tarn", "ulmo", "vexi", "wren", "yold", "zarn"]
_ENTITY_MIDS = ["ba", "ce", "di", "fo", "gu", "ka", "lo", "mi", "ne", "po"]
_ENTITY_ENDS = ["x", "r", "n", "th", "l", "s", "m", "d", "k", "t"]


def make_entity_pool(size: int) -> list[str]:
    """Deterministic pool of pronounceable single-token names (<= 2000)."""
    pool = []
    for onset in _ENTITY_ONSETS:
        for mid in _ENTITY_MIDS:
            for end in _ENTITY_ENDS:
                pool.append(onset + mid + end)
                if len(pool) == size:
                    return pool
    raise ValueError(f"make_entity_pool: at most {len(pool)} entities available")


def _cap(pool: list[str], vocab_size: int | None) -> list[str]:
    if vocab_size is None:
        return pool
    k = max(2, vocab_size // 8)
    return pool[:k] if k < len(pool) else pool


def synth_corpus(spec: SynthSpec) -> list[TodoInstance]:
    """Generate ``spec.n_instances`` planted-structure instances; fully
    deterministic under ``spec.seed``."""
    if spec.n_instances < 1:
        raise ValueError("synth_corpus: n_instances must be >= 1")
    entity_pool = spec.entity_pool
    if entity_pool is None:
        entity_pool = make_entity_pool(min(2000, max(512, spec.n_instances)))
    if not entity_pool:
        raise ValueError("synth_corpus: entity pool is empty")

    rng = random.Random(spec.seed)
    verbs = _cap(_VERBS, spec.vocab_size)
    objects = _cap(_OBJECTS, spec.vocab_size)
    modifiers = _cap(_MODIFIERS, spec.vocab_size)
    fillers = _cap(_FILLER_NOUNS, spec.vocab_size)
    adjs = _cap(_FILLER_ADJS, spec.vocab_size)

    entity_order = list(entity_pool)
    rng.shuffle(entity_order)

    instances = []
    base_time = 1_600_000_000
    for i in range(spec.n_instances):
        entity = entity_order[i % len(entity_order)]
        verb = rng.choice(verbs)
        obj = rng.choice(objects)
        mod = rng.choice(modifiers)
        day = rng.choice(_DAYS)
        sender, recipient = rng.sample(_NAMES, 2)

        subject = f"{mod} {obj}"
        commitment = f"I will {verb} the {mod} {obj} to {entity} by {day}."
        helpful = rng.choice(_HELPFUL_TEMPLATES).format(mod=mod, obj=obj,
                                                        entity=entity)

        def distractor(nouns, adj):
            tpl = rng.choice(_DISTRACTOR_TEMPLATES)
            return tpl.format(n1=nouns[0], n2=nouns[1], a=adj)

        if len(fillers) >= 6:
            filler_draw = rng.sample(fillers, 6)
        else:
            filler_draw = [rng.choice(fillers) for _ in range(6)]
        if len(adjs) >= 3:
            adj_draw = rng.sample(adjs, 3)
        else:
            adj_draw = [rng.choice(adjs) for _ in range(3)]

        core = [helpful, distractor(filler_draw[0:2], adj_draw[0])]
        if rng.random() < 0.7:
            core.append(distractor(filler_draw[2:4], adj_draw[1]))
        rng.shuffle(core)
        commit_pos = rng.randrange(len(core) + 1)
        body_sents = [f"Hi {recipient}."] + core[:commit_pos] + [commitment] + core[commit_pos:]
        commitment_index = 1 + commit_pos
        helpful_index = body_sents.index(helpful)

        candidate_id = f"synth-{i:05d}-c"
        previous = None
        prev_labels: list[bool] = []
        if rng.random() < spec.previous_email_rate:
            prev_sents = [f"Hi {sender}.",
                          distractor(filler_draw[4:6], adj_draw[2])]
            previous = EmailMessage(
                id=f"synth-{i:05d}-p",
                sender=recipient,
                recipients=[sender],
                subject=subject,
                body=" ".join(prev_sents),
                sent_time=base_time + i * 7200,
            )
            prev_labels = [False] * len(prev_sents)

        candidate = EmailMessage(
            id=candidate_id,
            sender=sender,
            recipients=[recipient],
            subject=subject,
            body=" ".join(body_sents),
            sent_time=base_time + i * 7200 + 3600,
            reply_to_id=previous.id if previous else None,
        )

        short = f"{verb} the {mod} {obj} to {entity}"
        long = f"{verb} the {mod} {obj} to {entity} by {day}"
        annotations = [short, long] if rng.random() < 0.5 else [long, short]
        labels = [idx == helpful_index for idx in range(len(body_sents))] + prev_labels

        instances.append(TodoInstance(
            id=f"synth-{i:05d}",
            thread=EmailThread(candidate=candidate, previous=previous),
            commitment_sentence_index=commitment_index,
            annotations=annotations,
            helpful_labels=labels,
        ))
    return instances
