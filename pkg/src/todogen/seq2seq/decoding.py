"""Greedy and beam-search decoding over a decode session.

Scores are length-normalized log-probabilities (normalized by the number of
emitted tokens, end-of-sequence included).  Probability ties break by the
candidate's surface form, identically in both decoders, so decoding is fully
deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Seq2SeqModel
from .serialize import EncoderInput


@dataclass
class DecodeResult:
    tokens: list[str]       # surface tokens, BOS/EOS stripped
    score: float            # length-normalized log-probability
    ext_ids: list[int]      # emitted extended ids including EOS when reached

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def _top_candidates(row: np.ndarray, k: int, session) -> list[tuple[float, str, int]]:
    """Top-k (prob, surface, ext_id) of one distribution row, ranked by
    (prob desc, surface asc).  All entries tied with the k-th probability are
    considered before truncation, so ties resolve independently of memory
    layout."""
    if k >= row.size:
        idx = np.flatnonzero(row > 0.0)
    else:
        part = np.argpartition(-row, k - 1)
        kth = row[part[k - 1]]
        idx = np.flatnonzero((row >= kth) & (row > 0.0))
    cands = [(float(row[j]), session.surface(int(j)), int(j)) for j in idx]
    cands.sort(key=lambda c: (-c[0], c[1]))
    return cands[:k]


def greedy_decode(model: Seq2SeqModel, enc_input: EncoderInput,
                  max_len: int = 30) -> DecodeResult:
    """Argmax decoding with the shared tie rule."""
    session = model.make_session(enc_input, n_rows=1)
    state = session.initial_state()
    prev = np.array([model.tgt_vocab.bos_id], dtype=np.int64)
    eos = model.tgt_vocab.eos_id
    logp = 0.0
    emitted: list[int] = []
    tokens: list[str] = []
    for _ in range(max_len):
        dist, state = session.step(state, prev)
        p, surface, ext_id = _top_candidates(dist[0], 1, session)[0]
        logp += math.log(p)
        emitted.append(ext_id)
        if ext_id == eos:
            break
        tokens.append(surface)
        prev = np.array([ext_id], dtype=np.int64)
    n = max(len(emitted), 1)
    return DecodeResult(tokens=tokens, score=logp / n, ext_ids=emitted)


@dataclass
class _Hyp:
    ext_ids: list[int]
    surfaces: list[str]
    logp: float

    def normalized(self) -> float:
        return self.logp / max(len(self.ext_ids), 1)

    def text(self) -> str:
        return " ".join(self.surfaces)


def beam_search(model: Seq2SeqModel, enc_input: EncoderInput,
                width: int = 5, max_len: int = 30) -> DecodeResult:
    """Length-normalized beam search; hypotheses end at EOS (or at the length
    cap) and copy tokens resolve to their source surface forms."""
    if width < 1:
        raise ValueError("beam_search: width must be >= 1")
    session = model.make_session(enc_input, n_rows=width)
    state = session.initial_state()
    bos = model.tgt_vocab.bos_id
    eos = model.tgt_vocab.eos_id

    beams: list[_Hyp] = [_Hyp([], [], 0.0)]
    beam_rows = [0]                      # session row carrying each beam's state
    finished: list[_Hyp] = []

    for _ in range(max_len):
        if not beams or len(finished) >= width:
            break
        prev = np.full(width, bos, dtype=np.int64)
        for i, hyp in enumerate(beams):
            if hyp.ext_ids:
                prev[beam_rows[i]] = hyp.ext_ids[-1]
        dist, state = session.step(state, prev)

        candidates = []                  # (cum_logp, full_surface, beam_idx, ext_id, surface)
        for i, hyp in enumerate(beams):
            for p, surface, ext_id in _top_candidates(dist[beam_rows[i]],
                                                      width + 1, session):
                candidates.append((hyp.logp + math.log(p),
                                   hyp.text() + " " + surface, i, ext_id, surface))
        candidates.sort(key=lambda c: (-c[0], c[1]))

        new_beams: list[_Hyp] = []
        parent_rows: list[int] = []
        for logp, _, i, ext_id, surface in candidates:
            parent = beams[i]
            if ext_id == eos:
                if len(finished) < 2 * width:
                    finished.append(_Hyp(parent.ext_ids + [ext_id],
                                         list(parent.surfaces), logp))
            elif len(new_beams) < width:
                new_beams.append(_Hyp(parent.ext_ids + [ext_id],
                                      parent.surfaces + [surface], logp))
                parent_rows.append(beam_rows[i])
            if len(new_beams) >= width:
                break

        if new_beams:
            # carry each surviving beam's recurrent state into its new row
            idx = np.zeros(width, dtype=np.int64)
            idx[:len(parent_rows)] = parent_rows
            state = session.reindex(state, idx)
        beams = new_beams
        beam_rows = list(range(len(new_beams)))

    pool = finished + beams              # length-capped hypotheses compete as-is
    pool = [h for h in pool if h.ext_ids]
    if not pool:
        return DecodeResult(tokens=[], score=-math.inf, ext_ids=[])
    best = min(pool, key=lambda h: (-h.normalized(), h.text()))
    return DecodeResult(tokens=best.surfaces, score=best.normalized(),
                        ext_ids=best.ext_ids)
