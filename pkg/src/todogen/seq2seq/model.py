"""Encoder/decoder with attention and the copy mechanism.

Three variants share one parameter set layout:

* ``vanilla``   -- attention, generation over the target vocabulary only
* ``copy``      -- adds a generation gate; output distribution is
                   p_gen * P_vocab + (1 - p_gen) * attention mass grouped by
                   source token identity, over the extended vocabulary V'
* ``bifocal``   -- two encoders (commitment query vs everything else), two
                   attention heads whose contexts are concatenated, and a
                   two-way source gate splitting the copy mass between them

Batched teacher-forced training and single-input decode sessions both run
through the same forward code; dropout only exists in train mode, so every
emitted distribution at decode time is exact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .. import numeric as nm
from .. import text
from ..corpus import TodoInstance, choose_reference
from ..numeric.checkpoint import load_params, save_params
from ..wordvec import WordVectorTable
from .serialize import (DEFAULT_MAX_INPUT_TOKENS, EncoderInput, ExtendedVocab,
                        serialize_input)

VARIANTS = ("vanilla", "copy", "bifocal")

PROB_FLOOR = 1e-10   # added before log so copy-losses stay finite
NEG_INF_MASK = 1e9


@dataclass
class ModelConfig:
    variant: str = "copy"
    embed_dim: int = 100
    hidden_dim: int = 256
    attn_dim: int | None = None
    dropout: float = 0.5
    attn_dropout: float = 0.5
    max_input_tokens: int = DEFAULT_MAX_INPUT_TOKENS
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant '{self.variant}' (choose from {VARIANTS})")
        if self.attn_dim is None:
            self.attn_dim = self.hidden_dim

    def to_dict(self) -> dict:
        return {
            "variant": self.variant, "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim, "attn_dim": self.attn_dim,
            "dropout": self.dropout, "attn_dropout": self.attn_dropout,
            "max_input_tokens": self.max_input_tokens, "seed": self.seed,
        }


@dataclass
class EncodedExample:
    """One instance, serialized and id-encoded for a fixed vocabulary pair."""
    instance_id: str
    enc_input: EncoderInput
    ext: ExtendedVocab
    src_ids: list[int]
    src_ext_ids: list[int]
    tgt_in: list[int]           # BOS + reference (vocab ids, OOV -> UNK)
    tgt_out_ext: list[int]      # reference + EOS in extended space
    tgt_out_vocab: list[int]    # reference + EOS in plain vocab space
    reference_tokens: list[str]
    query_src_ids: list[int] = field(default_factory=list)
    query_ext_ids: list[int] = field(default_factory=list)
    rest_src_ids: list[int] = field(default_factory=list)
    rest_ext_ids: list[int] = field(default_factory=list)


def encode_example(instance: TodoInstance, selected_sentences: list[str],
                   src_vocab: text.Vocabulary, tgt_vocab: text.Vocabulary,
                   max_tokens: int = DEFAULT_MAX_INPUT_TOKENS) -> EncodedExample:
    enc_input = serialize_input(instance, selected_sentences, max_tokens)
    ext = ExtendedVocab(tgt_vocab, enc_input.tokens)
    reference = text.tokenize(choose_reference(instance.annotations))
    tgt_ids = [tgt_vocab.id_of(t) for t in reference]
    qs, qe = enc_input.query_span

    def split_ext(lo, hi):
        return ext.src_ext_ids[lo:hi]

    return EncodedExample(
        instance_id=instance.id,
        enc_input=enc_input,
        ext=ext,
        src_ids=[src_vocab.id_of(t) for t in enc_input.tokens],
        src_ext_ids=list(ext.src_ext_ids),
        tgt_in=[tgt_vocab.bos_id] + tgt_ids,
        tgt_out_ext=ext.encode_target(reference) + [tgt_vocab.eos_id],
        tgt_out_vocab=tgt_ids + [tgt_vocab.eos_id],
        reference_tokens=reference,
        query_src_ids=[src_vocab.id_of(t) for t in enc_input.query_tokens],
        query_ext_ids=split_ext(qs, qe),
        rest_src_ids=[src_vocab.id_of(t) for t in enc_input.rest_tokens],
        rest_ext_ids=split_ext(0, qs) + split_ext(qe, len(enc_input.tokens)),
    )


@dataclass
class Batch:
    examples: list[EncodedExample]
    vext: int
    src_ids: np.ndarray
    src_mask: np.ndarray
    src_ext: np.ndarray
    dec_in: np.ndarray
    tgt_ext: np.ndarray
    tgt_vocab_ids: np.ndarray
    tgt_mask: np.ndarray
    query_ids: np.ndarray | None = None
    query_mask: np.ndarray | None = None
    query_ext: np.ndarray | None = None
    rest_ids: np.ndarray | None = None
    rest_mask: np.ndarray | None = None
    rest_ext: np.ndarray | None = None

    @property
    def n_target_tokens(self) -> int:
        return int(self.tgt_mask.sum())


def _pad_rows(rows: list[list[int]], pad: int) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(r) for r in rows)
    ids = np.full((len(rows), width), pad, dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=np.float64)
    for i, row in enumerate(rows):
        ids[i, :len(row)] = row
        mask[i, :len(row)] = 1.0
    return ids, mask


def make_batch(examples: list[EncodedExample], tgt_vocab: text.Vocabulary,
               bifocal: bool = False) -> Batch:
    pad = tgt_vocab.pad_id
    vext = len(tgt_vocab) + max(len(e.ext.oov_tokens) for e in examples)
    src_ids, src_mask = _pad_rows([e.src_ids for e in examples], pad)
    src_ext, _ = _pad_rows([e.src_ext_ids for e in examples], pad)
    dec_in, _ = _pad_rows([e.tgt_in for e in examples], pad)
    tgt_ext, tgt_mask = _pad_rows([e.tgt_out_ext for e in examples], pad)
    tgt_vocab_ids, _ = _pad_rows([e.tgt_out_vocab for e in examples], pad)
    batch = Batch(examples=examples, vext=vext, src_ids=src_ids,
                  src_mask=src_mask, src_ext=src_ext, dec_in=dec_in,
                  tgt_ext=tgt_ext, tgt_vocab_ids=tgt_vocab_ids,
                  tgt_mask=tgt_mask)
    if bifocal:
        batch.query_ids, batch.query_mask = _pad_rows(
            [e.query_src_ids for e in examples], pad)
        batch.query_ext, _ = _pad_rows([e.query_ext_ids for e in examples], pad)
        batch.rest_ids, batch.rest_mask = _pad_rows(
            [e.rest_src_ids for e in examples], pad)
        batch.rest_ext, _ = _pad_rows([e.rest_ext_ids for e in examples], pad)
    return batch


class Seq2SeqModel:
    """Parameters plus the forward passes for training and decoding."""

    def __init__(self, src_vocab: text.Vocabulary, tgt_vocab: text.Vocabulary,
                 config: ModelConfig,
                 params: dict[str, np.ndarray] | None = None,
                 embeddings: WordVectorTable | None = None):
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.config = config
        self.embedding_init = "uniform(-0.1, 0.1)"
        if params is None:
            params = self._init_params(embeddings)
        self.params = {k: nm.parameter(v) for k, v in params.items()}

    # ------------------------------------------------------------- building

    def _init_params(self, embeddings: WordVectorTable | None) -> dict[str, np.ndarray]:
        cfg = self.config
        E, H, A = cfg.embed_dim, cfg.hidden_dim, cfg.attn_dim
        rng = np.random.default_rng(cfg.seed)

        def u(*shape):
            return rng.uniform(-0.1, 0.1, size=shape)

        def emb(vocab):
            table = u(len(vocab), E)
            if embeddings is not None:
                if embeddings.dim != E:
                    raise ValueError(f"pretrained vectors have dim {embeddings.dim}, "
                                     f"model embed_dim is {E}")
                hits = 0
                for i, token in enumerate(vocab.id_to_token):
                    vec = embeddings.vector(token)
                    if vec is not None:
                        table[i] = vec
                        hits += 1
                self.embedding_init = f"file-backed ({hits}/{len(vocab)} rows)"
            return table

        ctx_width = 2 * H if cfg.variant == "bifocal" else H
        params = {
            "src_emb": emb(self.src_vocab),
            "tgt_emb": emb(self.tgt_vocab),
            "enc_wx": u(E, 4 * H), "enc_wh": u(H, 4 * H),
            "enc_b": np.zeros((1, 4 * H)),
            "dec_wx": u(E, 4 * H), "dec_wh": u(H, 4 * H),
            "dec_b": np.zeros((1, 4 * H)),
            "att_wh": u(H, A), "att_ws": u(H, A),
            "att_b": np.zeros((1, A)), "att_v": u(A, 1),
            "comb_w": u(H + ctx_width, H), "comb_b": np.zeros((1, H)),
            "out_w": u(H, len(self.tgt_vocab)),
            "out_b": np.zeros((1, len(self.tgt_vocab))),
        }
        if cfg.variant in ("copy", "bifocal"):
            params["gen_w"] = u(ctx_width + H + E, 1)
            params["gen_b"] = np.zeros((1, 1))
        if cfg.variant == "bifocal":
            params["enc2_wx"] = u(E, 4 * H)
            params["enc2_wh"] = u(H, 4 * H)
            params["enc2_b"] = np.zeros((1, 4 * H))
            params["att2_wh"] = u(H, A)
            params["att2_ws"] = u(H, A)
            params["att2_b"] = np.zeros((1, A))
            params["att2_v"] = u(A, 1)
            params["srcgate_w"] = u(2 * H + H, 1)
            params["srcgate_b"] = np.zeros((1, 1))
        return params

    # -------------------------------------------------------------- encoder

    def run_encoder(self, ids: np.ndarray, mask: np.ndarray, which: str = ""):
        """Unidirectional LSTM over embedded tokens.

        Returns (states (B,T,H) tensor, final h, final c).  With right-padded
        rows the per-step mask freezes finished rows, so the final state is
        each row's last real token's state.
        """
        p = self.params
        wx, wh, b = p[f"enc{which}_wx"], p[f"enc{which}_wh"], p[f"enc{which}_b"]
        B, T = ids.shape
        H = self.config.hidden_dim
        h = nm.constant(np.zeros((B, H)))
        c = nm.constant(np.zeros((B, H)))
        states = []
        full = mask.all(axis=0)
        for t in range(T):
            x = nm.embedding_lookup(p["src_emb"], ids[:, t])
            pre = nm.add(nm.add(nm.matmul(x, wx), nm.matmul(h, wh)), b)
            h_new, c_new = nm.lstm_cell(pre, c)
            if full[t]:
                h, c = h_new, c_new
            else:
                m = nm.constant(mask[:, t:t + 1])
                km = nm.constant(1.0 - mask[:, t:t + 1])
                h = nm.add(nm.mul(h_new, m), nm.mul(h, km))
                c = nm.add(nm.mul(c_new, m), nm.mul(c, km))
            states.append(h)
        return nm.stack(states, axis=1), h, c

    def _attn_static(self, enc_states: nm.Tensor, which: str = "") -> nm.Tensor:
        """Precompute W_h . h + b for every source position: (B,T,A)."""
        p = self.params
        B, T, H = enc_states.shape
        flat = nm.reshape(enc_states, (B * T, H))
        proj = nm.add(nm.matmul(flat, p[f"att{which}_wh"]), p[f"att{which}_b"])
        return nm.reshape(proj, (B, T, self.config.attn_dim))

    def attention_step(self, enc_states: nm.Tensor, proj: nm.Tensor,
                       neg_mask: np.ndarray, s: nm.Tensor, which: str = "",
                       train: bool = False, rng: np.random.Generator | None = None,
                       attn_dropout: float = 0.0):
        """Additive attention: weights over source positions plus context."""
        p = self.params
        B, T, H = enc_states.shape
        A = self.config.attn_dim
        dproj = nm.reshape(nm.matmul(s, p[f"att{which}_ws"]), (B, 1, A))
        act = nm.tanh(nm.add(proj, dproj))
        e = nm.reshape(nm.matmul(nm.reshape(act, (B * T, A)), p[f"att{which}_v"]),
                       (B, T))
        if neg_mask is not None:
            e = nm.add(e, nm.constant(neg_mask))
        a = nm.softmax(e, axis=1)
        if train and attn_dropout > 0.0:
            a = nm.dropout(a, attn_dropout, rng, train=True)
        ctx = nm.reshape(nm.matmul(nm.reshape(a, (B, 1, T)), enc_states), (B, H))
        return a, ctx

    # -------------------------------------------------------------- decoder

    def _decoder_lstm(self, y_ids: np.ndarray, h: nm.Tensor, c: nm.Tensor):
        p = self.params
        y_emb = nm.embedding_lookup(p["tgt_emb"], y_ids)
        pre = nm.add(nm.add(nm.matmul(y_emb, p["dec_wx"]),
                            nm.matmul(h, p["dec_wh"])), p["dec_b"])
        h_new, c_new = nm.lstm_cell(pre, c)
        return y_emb, h_new, c_new

    def _output_dist(self, s: nm.Tensor, ctx: nm.Tensor, y_emb: nm.Tensor,
                     copy_parts, vext: int, train: bool,
                     rng, dropout_rate: float, force_p_gen: float | None = None):
        """Distribution over V (vanilla) or V' (copy variants).

        ``copy_parts`` is None for vanilla, else a list of (attn, ext_ids)
        pairs already weighted for the bifocal source gate.
        """
        p = self.params
        comb = nm.tanh(nm.add(nm.matmul(nm.concat([s, ctx], axis=1), p["comb_w"]),
                              p["comb_b"]))
        if train and dropout_rate > 0.0:
            comb = nm.dropout(comb, dropout_rate, rng, train=True)
        logits = nm.add(nm.matmul(comb, p["out_w"]), p["out_b"])
        if copy_parts is None:
            return logits, nm.softmax(logits, axis=1), None
        p_vocab = nm.softmax(logits, axis=1)
        B = logits.shape[0]
        if force_p_gen is not None:
            p_gen = nm.constant(np.full((B, 1), float(force_p_gen)))
        else:
            gate_in = nm.concat([ctx, s, y_emb], axis=1)
            p_gen = nm.sigmoid(nm.add(nm.matmul(gate_in, p["gen_w"]), p["gen_b"]))
        one = nm.constant(np.ones((B, 1)))
        copy_dist = None
        for attn, ext_ids, weight in copy_parts:
            part = nm.scatter_add_rows(attn, ext_ids, vext)
            if weight is not None:
                part = nm.mul(part, weight)
            copy_dist = part if copy_dist is None else nm.add(copy_dist, part)
        dist = nm.add(nm.mul(nm.pad_cols(p_vocab, vext), p_gen),
                      nm.mul(copy_dist, nm.sub(one, p_gen)))
        return logits, dist, p_gen

    def _source_gate(self, s: nm.Tensor, ctx_q: nm.Tensor, ctx_r: nm.Tensor):
        p = self.params
        gate_in = nm.concat([s, ctx_q, ctx_r], axis=1)
        return nm.sigmoid(nm.add(nm.matmul(gate_in, p["srcgate_w"]),
                                 p["srcgate_b"]))

    # ------------------------------------------------------------- training

    def loss_batch(self, batch: Batch, train: bool = False,
                   rng: np.random.Generator | None = None,
                   dropout: float | None = None,
                   attn_dropout: float | None = None):
        """Teacher-forced mean NLL per target token plus token statistics.

        Returns (loss tensor, stats dict with n_tokens / n_correct / nll_sum).
        """
        cfg = self.config
        dropout = cfg.dropout if dropout is None else dropout
        attn_dropout = cfg.attn_dropout if attn_dropout is None else attn_dropout
        if train and (dropout > 0 or attn_dropout > 0) and rng is None:
            raise ValueError("loss_batch: training with dropout needs an rng")
        bifocal = cfg.variant == "bifocal"
        B, L = batch.dec_in.shape

        if bifocal:
            q_states, h, c = self.run_encoder(batch.query_ids, batch.query_mask)
            r_states, _, _ = self.run_encoder(batch.rest_ids, batch.rest_mask,
                                              which="2")
            q_proj = self._attn_static(q_states)
            r_proj = self._attn_static(r_states, which="2")
            q_neg = (batch.query_mask - 1.0) * NEG_INF_MASK
            r_neg = (batch.rest_mask - 1.0) * NEG_INF_MASK
        else:
            enc_states, h, c = self.run_encoder(batch.src_ids, batch.src_mask)
            proj = self._attn_static(enc_states)
            neg = (batch.src_mask - 1.0) * NEG_INF_MASK

        vanilla = cfg.variant == "vanilla"
        step_losses = []
        n_correct = 0
        nll_sum = 0.0
        for t in range(L):
            y_emb, h, c = self._decoder_lstm(batch.dec_in[:, t], h, c)
            if bifocal:
                a_q, ctx_q = self.attention_step(q_states, q_proj, q_neg, h,
                                                 train=train, rng=rng,
                                                 attn_dropout=attn_dropout)
                a_r, ctx_r = self.attention_step(r_states, r_proj, r_neg, h,
                                                 which="2", train=train, rng=rng,
                                                 attn_dropout=attn_dropout)
                ctx = nm.concat([ctx_q, ctx_r], axis=1)
                p_src = self._source_gate(h, ctx_q, ctx_r)
                one = nm.constant(np.ones((B, 1)))
                copy_parts = [(a_q, batch.query_ext, p_src),
                              (a_r, batch.rest_ext, nm.sub(one, p_src))]
            else:
                a, ctx = self.attention_step(enc_states, proj, neg, h,
                                             train=train, rng=rng,
                                             attn_dropout=attn_dropout)
                copy_parts = None if vanilla else [(a, batch.src_ext, None)]
            logits, dist, _ = self._output_dist(h, ctx, y_emb, copy_parts,
                                                batch.vext, train, rng, dropout)
            mask_col = nm.constant(batch.tgt_mask[:, t])
            if vanilla:
                targets = batch.tgt_vocab_ids[:, t]
                nll = nm.cross_entropy(logits, targets, from_logits=True)
                step_nll = nll.data
                pred = np.argmax(dist.data, axis=1)
            else:
                targets = batch.tgt_ext[:, t]
                p_t = nm.gather_cols(dist, targets)
                nll = nm.scale(nm.log(nm.add(p_t, nm.constant(
                    np.full(B, PROB_FLOOR)))), -1.0)
                step_nll = nll.data
                pred = np.argmax(dist.data, axis=1)
            step_losses.append(nm.mul(nll, mask_col))
            live = batch.tgt_mask[:, t] > 0
            n_correct += int(np.sum((pred == targets) & live))
            nll_sum += float(np.sum(step_nll * batch.tgt_mask[:, t]))

        n_tokens = batch.n_target_tokens
        total = nm.sum(nm.stack(step_losses, axis=1))
        loss = nm.scale(total, 1.0 / max(n_tokens, 1))
        stats = {"n_tokens": n_tokens, "n_correct": n_correct, "nll_sum": nll_sum}
        return loss, stats

    def iter_token_predictions(self, examples: list[EncodedExample],
                               batch_size: int = 64):
        """Teacher-forced (target_prob, argmax_match) pairs, eval mode.

        This is the protocol :func:`todogen.metrics.perplexity_and_token_accuracy`
        consumes.
        """
        bifocal = self.config.variant == "bifocal"
        vanilla = self.config.variant == "vanilla"
        for start in range(0, len(examples), batch_size):
            batch = make_batch(examples[start:start + batch_size],
                               self.tgt_vocab, bifocal=bifocal)
            probs, matches, mask = self._token_probs(batch, vanilla)
            B, L = mask.shape
            for b in range(B):
                for t in range(L):
                    if mask[b, t] > 0:
                        yield float(probs[b, t]), bool(matches[b, t])

    def _token_probs(self, batch: Batch, vanilla: bool):
        B, L = batch.dec_in.shape
        probs = np.zeros((B, L))
        matches = np.zeros((B, L), dtype=bool)
        loss_probs = self._forward_token_probs(batch)
        for t in range(L):
            dist_row, targets = loss_probs[t]
            rows = np.arange(B)
            probs[:, t] = dist_row[rows, targets]
            matches[:, t] = np.argmax(dist_row, axis=1) == targets
        return probs, matches, batch.tgt_mask

    def _forward_token_probs(self, batch: Batch):
        """Per-step (distribution, targets) pairs in eval mode."""
        cfg = self.config
        bifocal = cfg.variant == "bifocal"
        vanilla = cfg.variant == "vanilla"
        B, L = batch.dec_in.shape
        if bifocal:
            q_states, h, c = self.run_encoder(batch.query_ids, batch.query_mask)
            r_states, _, _ = self.run_encoder(batch.rest_ids, batch.rest_mask,
                                              which="2")
            q_proj = self._attn_static(q_states)
            r_proj = self._attn_static(r_states, which="2")
            q_neg = (batch.query_mask - 1.0) * NEG_INF_MASK
            r_neg = (batch.rest_mask - 1.0) * NEG_INF_MASK
        else:
            enc_states, h, c = self.run_encoder(batch.src_ids, batch.src_mask)
            proj = self._attn_static(enc_states)
            neg = (batch.src_mask - 1.0) * NEG_INF_MASK
        out = []
        for t in range(L):
            y_emb, h, c = self._decoder_lstm(batch.dec_in[:, t], h, c)
            if bifocal:
                a_q, ctx_q = self.attention_step(q_states, q_proj, q_neg, h)
                a_r, ctx_r = self.attention_step(r_states, r_proj, r_neg, h,
                                                 which="2")
                ctx = nm.concat([ctx_q, ctx_r], axis=1)
                p_src = self._source_gate(h, ctx_q, ctx_r)
                one = nm.constant(np.ones((B, 1)))
                copy_parts = [(a_q, batch.query_ext, p_src),
                              (a_r, batch.rest_ext, nm.sub(one, p_src))]
            else:
                a, ctx = self.attention_step(enc_states, proj, neg, h)
                copy_parts = None if vanilla else [(a, batch.src_ext, None)]
            _, dist, _ = self._output_dist(h, ctx, y_emb, copy_parts,
                                           batch.vext, False, None, 0.0)
            targets = batch.tgt_vocab_ids[:, t] if vanilla else batch.tgt_ext[:, t]
            out.append((dist.data, targets))
        return out

    # ------------------------------------------------------------- decoding

    def make_session(self, enc_input: EncoderInput, n_rows: int = 1) -> "DecodeSession":
        return DecodeSession(self, enc_input, n_rows)

    # ---------------------------------------------------------- persistence

    def save(self, ckpt_path, src_vocab_path, tgt_vocab_path) -> None:
        self.src_vocab.save(src_vocab_path)
        self.tgt_vocab.save(tgt_vocab_path)

        def digest(path):
            with open(path, "rb") as fh:
                return hashlib.sha256(fh.read()).hexdigest()

        meta = {
            "kind": "seq2seq",
            "config": self.config.to_dict(),
            "embedding_init": self.embedding_init,
            "src_vocab_file": str(src_vocab_path),
            "src_vocab_sha256": digest(src_vocab_path),
            "tgt_vocab_file": str(tgt_vocab_path),
            "tgt_vocab_sha256": digest(tgt_vocab_path),
        }
        save_params(ckpt_path, self.params, meta)

    @classmethod
    def load(cls, ckpt_path, src_vocab_path=None, tgt_vocab_path=None) -> "Seq2SeqModel":
        params, meta = load_params(ckpt_path)
        if meta.get("kind") != "seq2seq":
            raise ValueError(f"{ckpt_path}: not a seq2seq checkpoint")
        sp = src_vocab_path or meta["src_vocab_file"]
        tp = tgt_vocab_path or meta["tgt_vocab_file"]
        for path, want in ((sp, meta["src_vocab_sha256"]), (tp, meta["tgt_vocab_sha256"])):
            with open(path, "rb") as fh:
                if hashlib.sha256(fh.read()).hexdigest() != want:
                    raise ValueError(f"{path}: vocabulary hash does not match checkpoint")
        src_vocab = text.Vocabulary.load(sp)
        tgt_vocab = text.Vocabulary.load(tp)
        config = ModelConfig(**meta["config"])
        model = cls(src_vocab, tgt_vocab, config, params=params)
        model.embedding_init = meta.get("embedding_init", model.embedding_init)
        return model


class DecodeSession:
    """Eval-mode stepper for one serialized input, batched over hypotheses.

    Rows correspond to beam hypotheses; ``reindex`` reorders the recurrent
    state when beams adopt new parents.
    """

    def __init__(self, model: Seq2SeqModel, enc_input: EncoderInput, n_rows: int):
        self.model = model
        self.ext = ExtendedVocab(model.tgt_vocab, enc_input.tokens)
        self.n_rows = n_rows
        cfg = model.config
        self.bifocal = cfg.variant == "bifocal"
        self.vanilla = cfg.variant == "vanilla"
        self.vext = self.ext.size if not self.vanilla else len(model.tgt_vocab)

        def prep(tokens, ext_ids, which=""):
            if not tokens:
                return None
            ids = np.array([[model.src_vocab.id_of(t) for t in tokens]], dtype=np.int64)
            mask = np.ones_like(ids, dtype=np.float64)
            states, h, c = model.run_encoder(ids, mask, which=which)
            proj = model._attn_static(states, which=which)
            tiled_states = nm.constant(np.repeat(states.data, n_rows, axis=0))
            tiled_proj = nm.constant(np.repeat(proj.data, n_rows, axis=0))
            ext_rows = np.repeat(np.array([ext_ids], dtype=np.int64), n_rows, axis=0)
            return {"states": tiled_states, "proj": tiled_proj, "ext": ext_rows,
                    "h0": np.repeat(h.data, n_rows, axis=0),
                    "c0": np.repeat(c.data, n_rows, axis=0)}

        qs, qe = enc_input.query_span
        if self.bifocal:
            self.query = prep(enc_input.query_tokens,
                              self.ext.src_ext_ids[qs:qe])
            rest_ext = self.ext.src_ext_ids[:qs] + self.ext.src_ext_ids[qe:]
            self.rest = prep(enc_input.rest_tokens, rest_ext, which="2")
            if self.query is None:
                raise ValueError("bifocal decode: empty query")
            init = self.query
        else:
            self.full = prep(enc_input.tokens, self.ext.src_ext_ids)
            init = self.full
        self._h0, self._c0 = init["h0"], init["c0"]

    def initial_state(self):
        return (nm.constant(self._h0.copy()), nm.constant(self._c0.copy()))

    def reindex(self, state, idx: np.ndarray):
        h, c = state
        return (nm.constant(h.data[idx]), nm.constant(c.data[idx]))

    def step(self, state, prev_ext_ids: np.ndarray,
             force_p_gen: float | None = None,
             force_attention: np.ndarray | None = None):
        """One decode step: returns (distribution (n_rows, C), new_state).

        ``force_p_gen`` / ``force_attention`` are diagnostic overrides used by
        the gate-limit checks; normal decoding leaves them None.
        """
        model = self.model
        unk = model.tgt_vocab.unk_id
        vt = len(model.tgt_vocab)
        y_ids = np.where(prev_ext_ids < vt, prev_ext_ids, unk).astype(np.int64)
        h, c = state
        y_emb, h, c = model._decoder_lstm(y_ids, h, c)

        def attend(src, which=""):
            a, ctx = model.attention_step(src["states"], src["proj"], None, h,
                                          which=which)
            if force_attention is not None:
                forced = np.broadcast_to(force_attention,
                                         a.shape).astype(np.float64)
                a = nm.constant(forced.copy())
                B, T, H = src["states"].shape
                ctx = nm.reshape(nm.matmul(nm.reshape(a, (B, 1, T)),
                                           src["states"]), (B, H))
            return a, ctx

        if self.bifocal:
            a_q, ctx_q = attend(self.query)
            if self.rest is not None:
                a_r, ctx_r = attend(self.rest, which="2")
                ctx = nm.concat([ctx_q, ctx_r], axis=1)
                p_src = model._source_gate(h, ctx_q, ctx_r)
                one = nm.constant(np.ones((self.n_rows, 1)))
                copy_parts = [(a_q, self.query["ext"], p_src),
                              (a_r, self.rest["ext"], nm.sub(one, p_src))]
            else:
                # no second source: all copy mass comes from the query encoder
                ctx_r = nm.constant(np.zeros_like(ctx_q.data))
                ctx = nm.concat([ctx_q, ctx_r], axis=1)
                copy_parts = [(a_q, self.query["ext"], None)]
        else:
            a, ctx = attend(self.full)
            copy_parts = None if self.vanilla else [(a, self.full["ext"], None)]

        _, dist, _ = model._output_dist(h, ctx, y_emb, copy_parts, self.vext,
                                        False, None, 0.0,
                                        force_p_gen=force_p_gen)
        return dist.data, (h, c)

    def surface(self, ext_id: int) -> str:
        return self.ext.surface(ext_id)
