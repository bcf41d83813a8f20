"""LSTM encoder-decoder with bilinear attention.

Three decoder kinds share one implementation:

* ``forward``  - left-to-right language model over ``y``;
* ``backward`` - the same network, trained on reversed targets;
* ``birnn``    - two directional LSTMs whose states around position ``t``
  (left context ``y_<t`` and right context ``y_>t``) jointly predict ``y_t``.

Sequences are framed as ``BOS y_1 .. y_m`` on the decoder input side and the
model scores the ``m`` target tokens; EOS is only used as the right anchor of
the BiRNN's backward direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import BLANK, BOS, EOS, Template

NEG_INF = -1e9


@dataclass(frozen=True)
class ModelConfig:
    src_vocab: int
    tgt_vocab: int
    emb_dim: int = 64
    hidden_dim: int = 128
    encoder: str | None = "bi"  # "uni" | "bi" | None (unconditional LM)
    decoder: str = "forward"  # "forward" | "backward" | "birnn"
    attention: str = "general"  # "general" | "none"
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("tgt_vocab", "emb_dim", "hidden_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.encoder not in ("uni", "bi", None):
            raise ValueError(f"unknown encoder kind {self.encoder!r}")
        if self.decoder not in ("forward", "backward", "birnn"):
            raise ValueError(f"unknown decoder kind {self.decoder!r}")
        if self.attention not in ("general", "none"):
            raise ValueError(f"unknown attention kind {self.attention!r}")
        if self.encoder is None and self.attention != "none":
            raise ValueError("an unconditional model cannot use attention")
        if self.encoder is not None and self.src_vocab < 1:
            raise ValueError("src_vocab must be >= 1 for a conditional model")

    @property
    def conditional(self) -> bool:
        return self.encoder is not None

    @property
    def enc_dim(self) -> int:
        if self.encoder is None:
            return 0
        return self.hidden_dim * (2 if self.encoder == "bi" else 1)

    @property
    def directions(self) -> tuple[str, ...]:
        return ("dec_f", "dec_b") if self.decoder == "birnn" else ("dec",)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CallStats:
    """Instrumentation counters; ``decoder_steps`` counts one per sequence per step."""

    decoder_steps: int = 0
    nll_evals: int = 0


@dataclass
class EncoderOutput:
    states: np.ndarray  # (n, enc_dim)
    final: np.ndarray  # (enc_dim,)

    def __len__(self) -> int:
        return self.states.shape[0]


@dataclass
class DecoderState:
    h: np.ndarray  # (B, H)
    c: np.ndarray  # (B, H)


@dataclass
class DecoderStepOutput:
    probs: np.ndarray  # (B, V)
    log_probs: np.ndarray  # (B, V)
    attention: np.ndarray | None  # (B, n)
    context: np.ndarray | None  # (B, enc_dim)
    state: DecoderState


def init_params(cfg: ModelConfig) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(cfg.seed)
    s, E, H, He = cfg.init_scale, cfg.emb_dim, cfg.hidden_dim, cfg.enc_dim

    def u(*shape):
        return rng.uniform(-s, s, size=shape)

    def lstm_bias():
        b = np.zeros(4 * H)
        b[H : 2 * H] = 1.0
        return b

    p: dict[str, np.ndarray] = {"tgt_emb": u(cfg.tgt_vocab, E)}
    if cfg.conditional:
        p["src_emb"] = u(cfg.src_vocab, E)
        p["enc_f_W"], p["enc_f_b"] = u(E + H, 4 * H), lstm_bias()
        if cfg.encoder == "bi":
            p["enc_b_W"], p["enc_b_b"] = u(E + H, 4 * H), lstm_bias()
    ctx_dim = He if cfg.attention == "general" else 0
    for d in cfg.directions:
        p[f"{d}_W"], p[f"{d}_b"] = u(E + ctx_dim + H, 4 * H), lstm_bias()
        if cfg.conditional:
            p[f"{d}_bridge_W"], p[f"{d}_bridge_b"] = u(He, H), np.zeros(H)
        if cfg.attention == "general":
            p[f"{d}_att_W"] = u(H, He)
    p["out_W"] = u(H * len(cfg.directions), cfg.tgt_vocab)
    p["out_b"] = np.zeros(cfg.tgt_vocab)
    return p


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    E, H, He = cfg.emb_dim, cfg.hidden_dim, cfg.enc_dim
    shapes = {"tgt_emb": (cfg.tgt_vocab, E)}
    if cfg.conditional:
        shapes.update(src_emb=(cfg.src_vocab, E), enc_f_W=(E + H, 4 * H), enc_f_b=(4 * H,))
        if cfg.encoder == "bi":
            shapes.update(enc_b_W=(E + H, 4 * H), enc_b_b=(4 * H,))
    ctx_dim = He if cfg.attention == "general" else 0
    for d in cfg.directions:
        shapes[f"{d}_W"], shapes[f"{d}_b"] = (E + ctx_dim + H, 4 * H), (4 * H,)
        if cfg.conditional:
            shapes[f"{d}_bridge_W"], shapes[f"{d}_bridge_b"] = (He, H), (H,)
        if cfg.attention == "general":
            shapes[f"{d}_att_W"] = (H, He)
    shapes["out_W"] = (H * len(cfg.directions), cfg.tgt_vocab)
    shapes["out_b"] = (cfg.tgt_vocab,)
    return shapes


def reverse_sequence(y: Sequence[int]) -> list[int]:
    return list(y)[::-1]


def reverse_template(t: Template) -> Template:
    return Template(t.tokens[::-1])


# --- building blocks on tensors ---------------------------------------------


def _lstm(inputs: list, h: Tensor, c: Tensor, W: Tensor, b: Tensor, H: int, mask: np.ndarray | None = None):
    z = ad.add(ad.matmul(ad.concat(inputs + [h], axis=-1), W), b)
    s = ad.sigmoid(z)
    i, f, o = s[:, :H], s[:, H : 2 * H], s[:, 3 * H :]
    g = ad.tanh(z[:, 2 * H : 3 * H])
    c2 = ad.add(ad.mul(f, c), ad.mul(i, g))
    h2 = ad.mul(o, ad.tanh(c2))
    if mask is not None:
        # Carry the previous state through padded positions.
        h2 = ad.add(h, ad.mul(mask, ad.sub(h2, h)))
        c2 = ad.add(c, ad.mul(mask, ad.sub(c2, c)))
    return h2, c2


def _tile(t: Tensor, B: int) -> Tensor:
    if t.shape[0] == B:
        return t
    # only reached for constants (inference with one shared encoding)
    return Tensor(np.repeat(t.data, B, axis=0))


@dataclass
class _EncT:
    states: Tensor  # (B or 1, n, He)
    final: Tensor  # (B or 1, He)
    bias: np.ndarray | None  # additive attention mask (B or 1, n)


class Seq2Seq:
    """Model parameters plus forward computations; parameters are never mutated here."""

    def __init__(self, cfg: ModelConfig, params: dict[str, np.ndarray] | None = None, vocab=None):
        self.cfg = cfg
        self.params = init_params(cfg) if params is None else params
        self.vocab = vocab
        self.check_params()
        self.P = {k: Tensor(v) for k, v in self.params.items()}

    @property
    def dtype(self):
        return self.params["tgt_emb"].dtype

    def check_params(self) -> None:
        for k, v in param_shapes(self.cfg).items():
            if k not in self.params:
                raise ValueError(f"missing parameter {k}")
            if self.params[k].shape != v:
                raise ValueError(f"parameter {k}: shape {self.params[k].shape} != expected {v}")
            if not np.isfinite(self.params[k]).all():
                raise ValueError(f"parameter {k} holds non-finite values")

    @property
    def vocab_size(self) -> int:
        return self.cfg.tgt_vocab

    def embedding_matrix(self) -> np.ndarray:
        return self.params["tgt_emb"]

    # --- encoder -------------------------------------------------------------

    def _encode_batch(self, P: dict, X: np.ndarray, lengths: np.ndarray | None = None) -> _EncT:
        cfg, H = self.cfg, self.cfg.hidden_dim
        B, n = X.shape
        if n == 0:
            raise ValueError("encode: conditional input must be nonempty")
        if X.min() < 0 or X.max() >= cfg.src_vocab:
            raise ValueError("encode: source index out of range")
        emb = ad.embedding(P["src_emb"], X)  # (B, n, E)
        masks = None
        bias = None
        if lengths is not None and (lengths < n).any():
            valid = np.arange(n)[None, :] < lengths[:, None]
            masks = [valid[:, i : i + 1].astype(self.dtype) for i in range(n)]
            bias = np.where(valid, 0.0, NEG_INF).astype(self.dtype)
        zeros = Tensor(np.zeros((B, H), dtype=self.dtype))
        h, c = zeros, zeros
        fwd = []
        for i in range(n):
            h, c = _lstm([emb[:, i, :]], h, c, P["enc_f_W"], P["enc_f_b"], H, None if masks is None else masks[i])
            fwd.append(h)
        final = [h]
        cols = fwd
        if cfg.encoder == "bi":
            h, c = zeros, zeros
            bwd = [None] * n
            for i in reversed(range(n)):
                h, c = _lstm([emb[:, i, :]], h, c, P["enc_b_W"], P["enc_b_b"], H, None if masks is None else masks[i])
                bwd[i] = h
            final.append(h)
            cols = [ad.concat([f, b], axis=-1) for f, b in zip(fwd, bwd)]
        He = cfg.enc_dim
        states = ad.concat([ad.reshape(col, (B, 1, He)) for col in cols], axis=1)
        final_t = final[0] if len(final) == 1 else ad.concat(final, axis=-1)
        return _EncT(states, final_t, bias)

    def encode(self, x: Sequence[int]) -> EncoderOutput:
        if not self.cfg.conditional:
            raise ValueError("encode: model is unconditional")
        X = np.asarray(x, dtype=np.int64).reshape(1, -1)
        enc = self._encode_batch(self.P, X)
        return EncoderOutput(enc.states.data[0], enc.final.data[0])

    def context(self, x) -> EncoderOutput | None:
        """Normalise ``x`` (token list, None, or a ready EncoderOutput) for decoding."""
        if isinstance(x, EncoderOutput):
            return x
        if not self.cfg.conditional:
            if x is not None and len(x):
                raise ValueError("unconditional model given a conditional input")
            return None
        if x is None or len(x) == 0:
            raise ValueError("conditional model needs a nonempty input")
        return self.encode(x)

    @staticmethod
    def _enc_tensors(enc: EncoderOutput | None) -> _EncT | None:
        if enc is None:
            return None
        return _EncT(Tensor(enc.states[None]), Tensor(enc.final[None]), None)

    # --- decoder core --------------------------------------------------------

    def _init_state(self, P: dict, d: str, enc: _EncT | None, B: int) -> tuple[Tensor, Tensor]:
        H = self.cfg.hidden_dim
        c = Tensor(np.zeros((B, H), dtype=self.dtype))
        if enc is None:
            return Tensor(np.zeros((B, H), dtype=self.dtype)), c
        h = ad.tanh(ad.add(ad.matmul(enc.final, P[f"{d}_bridge_W"]), P[f"{d}_bridge_b"]))
        return _tile(h, B), c

    def _step(self, P: dict, d: str, emb: Tensor, h: Tensor, c: Tensor, enc: _EncT | None, mask=None):
        """Consume one input embedding; returns (h, c, attention, context)."""
        H = self.cfg.hidden_dim
        B = emb.shape[0]
        inputs = [emb]
        a = ctx = None
        if enc is not None and self.cfg.attention == "general":
            He = self.cfg.enc_dim
            n = enc.states.shape[1]
            q = ad.reshape(ad.matmul(h, P[f"{d}_att_W"]), (B, He, 1))
            scores = ad.reshape(ad.matmul(enc.states, q), (B, n))
            if enc.bias is not None:
                scores = ad.add(scores, enc.bias)
            a = ad.softmax(scores, axis=-1)
            ctx = ad.reshape(ad.matmul(ad.reshape(a, (B, 1, n)), enc.states), (B, He))
            inputs.append(ctx)
        h2, c2 = _lstm(inputs, h, c, P[f"{d}_W"], P[f"{d}_b"], H, mask)
        return h2, c2, a, ctx

    def _logp(self, P: dict, hs: list[Tensor]) -> Tensor:
        h = hs[0] if len(hs) == 1 else ad.concat(hs, axis=-1)
        return ad.log_softmax(ad.add(ad.matmul(h, P["out_W"]), P["out_b"]), axis=-1)

    def _check_targets(self, Y: np.ndarray) -> None:
        if Y.size and (Y.min() < 0 or Y.max() >= self.cfg.tgt_vocab):
            raise ValueError("target index out of range")
        if (Y == BLANK).any():
            raise ValueError("sequence contains BLANK; fill it before scoring")

    def _input_embs(self, P: dict, Y: np.ndarray) -> Tensor:
        B = Y.shape[0]
        inp = np.concatenate([np.full((B, 1), BOS, dtype=np.int64), Y[:, :-1]], axis=1)
        return ad.embedding(P["tgt_emb"], inp)  # (B, m, E)

    def _run_unidir(self, P: dict, enc: _EncT | None, step_inputs: list[Tensor], d: str = "dec", stats=None) -> list[Tensor]:
        """Teacher-forced run; element t holds log P(. | inputs[:t+1])."""
        B = step_inputs[0].shape[0]
        h, c = self._init_state(P, d, enc, B)
        out = []
        for emb in step_inputs:
            h, c, _, _ = self._step(P, d, emb, h, c, enc)
            out.append(self._logp(P, [h]))
        if stats is not None:
            stats.decoder_steps += B * len(step_inputs)
        return out

    # --- public scoring ------------------------------------------------------

    def token_logprobs(self, x, Y: np.ndarray, stats: CallStats | None = None) -> np.ndarray:
        """(B, m) log-probabilities of each target token under a left-to-right pass."""
        if self.cfg.decoder == "birnn":
            raise ValueError("token_logprobs needs a unidirectional decoder")
        Y = np.atleast_2d(np.asarray(Y, dtype=np.int64))
        self._check_targets(Y)
        enc = self._enc_tensors(self.context(x))
        embs = self._input_embs(self.P, Y)
        logps = self._run_unidir(self.P, enc, [embs[:, t, :] for t in range(Y.shape[1])], stats=stats)
        return np.stack([lp.data[np.arange(Y.shape[0]), Y[:, t]] for t, lp in enumerate(logps)], axis=1)

    def step_logprobs(self, x, Y: np.ndarray, stats: CallStats | None = None) -> np.ndarray:
        """(B, m, V) next-token log-distributions along teacher-forced ``Y``."""
        Y = np.atleast_2d(np.asarray(Y, dtype=np.int64))
        self._check_targets(Y)
        enc = self._enc_tensors(self.context(x))
        embs = self._input_embs(self.P, Y)
        logps = self._run_unidir(self.P, enc, [embs[:, t, :] for t in range(Y.shape[1])], stats=stats)
        return np.stack([lp.data for lp in logps], axis=1)

    def batch_nll(self, x, Y: np.ndarray, stats: CallStats | None = None) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(Y, dtype=np.int64))
        out = -self.token_logprobs(x, Y, stats=stats).sum(axis=1)
        if stats is not None:
            stats.nll_evals += Y.shape[0]
        return out

    def sequence_nll(self, x, y: Sequence[int], stats: CallStats | None = None) -> tuple[float, float]:
        """Total and per-token negative log-likelihood of a concrete ``y``."""
        total = float(self.batch_nll(x, np.asarray(y, dtype=np.int64)[None], stats=stats)[0])
        return total, total / len(y)

    # --- step API ------------------------------------------------------------

    def initial_state(self, enc: EncoderOutput | None, batch: int = 1) -> DecoderState:
        h, c = self._init_state(self.P, "dec", self._enc_tensors(enc), batch)
        return DecoderState(h.data, c.data)

    def decoder_step(self, state: DecoderState, tokens, enc: EncoderOutput | None) -> DecoderStepOutput:
        """Feed ``tokens`` (B,) and return the distribution over the next token."""
        if self.cfg.decoder == "birnn":
            raise ValueError("decoder_step needs a unidirectional decoder")
        if (enc is None) == self.cfg.conditional:
            raise ValueError("decoder_step: encoder output must be given iff the model is conditional")
        tokens = np.atleast_1d(np.asarray(tokens, dtype=np.int64))
        H = self.cfg.hidden_dim
        B = tokens.shape[0]
        if state.h.shape != (B, H) or state.c.shape != (B, H):
            raise ValueError(f"decoder_step: state shape {state.h.shape} does not match batch {B} x hidden {H}")
        if tokens.min() < 0 or tokens.max() >= self.cfg.tgt_vocab:
            raise ValueError("decoder_step: token index out of range")
        emb = ad.embedding(self.P["tgt_emb"], tokens)
        h, c, a, ctx = self._step(self.P, "dec", emb, Tensor(state.h), Tensor(state.c), self._enc_tensors(enc))
        logp = self._logp(self.P, [h]).data
        return DecoderStepOutput(
            np.exp(logp),
            logp,
            None if a is None else a.data,
            None if ctx is None else ctx.data,
            DecoderState(h.data, c.data),
        )

    # --- continuous-input loss for gradient search ---------------------------

    def fill_loss_and_grads(
        self,
        x,
        template: Template,
        fill: Sequence[int],
        blank_vecs: Sequence[np.ndarray],
        lam: float,
        stats: CallStats | None = None,
    ) -> tuple[float, list[np.ndarray]]:
        """NLL with blank inputs replaced by free vectors, plus ``lam * sum ||v_j||``.

        The decoder input at a blank position is the blank's vector; the
        prediction target at that position is the current discrete ``fill``.
        Returns the loss and its gradient with respect to each blank vector.
        """
        if lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.cfg.decoder == "birnn":
            raise ValueError("fill_loss_and_grads needs a unidirectional decoder")
        blanks = template.blanks
        if len(blank_vecs) != len(blanks) or len(fill) != len(blanks):
            raise ValueError("need one vector and one token per blank")
        y = np.asarray(template.fill(fill), dtype=np.int64)
        m = len(y)
        enc = self._enc_tensors(self.context(x))
        vs = [Tensor(np.array(v, dtype=np.float64)) for v in blank_vecs]
        E = self.cfg.emb_dim
        for v in vs:
            if v.shape != (E,):
                raise ValueError(f"blank vector shape {v.shape} != ({E},)")
        slot = {pos: j for j, pos in enumerate(blanks)}
        emb_table = self.params["tgt_emb"]
        with ad.Tape() as tape:
            tape.watch(*vs)
            inputs = [Tensor(emb_table[BOS][None])]
            for t in range(1, m):
                j = slot.get(t - 1)
                inputs.append(ad.reshape(vs[j], (1, E)) if j is not None else Tensor(emb_table[y[t - 1]][None]))
            logps = self._run_unidir(self.P, enc, inputs, stats=stats)
            nll = ad.sum_(ad.concat([ad.pick(lp, y[t : t + 1]) for t, lp in enumerate(logps)], axis=0))
            loss = ad.mul(nll, -1.0)
            if lam > 0:
                for v in vs:
                    loss = ad.add(loss, ad.mul(ad.l2norm(v), lam))
            grads = tape.gradient(loss, vs)
        return float(loss.data), grads

    # --- bidirectional decoder ----------------------------------------------

    def birnn_logprobs(self, x, y: Sequence[int], positions: Sequence[int] | None = None) -> np.ndarray:
        """log P(y_t | y_<t, y_>t, x) over the vocabulary for each requested position.

        The token at each requested position is never read, so it may be anything.
        """
        if self.cfg.decoder != "birnn":
            raise ValueError("birnn_logprobs needs a birnn decoder")
        y = np.asarray(y, dtype=np.int64)
        m = len(y)
        positions = list(range(m)) if positions is None else list(positions)
        for t in positions:
            if not 0 <= t < m:
                raise ValueError(f"position {t} out of range for length {m}")
        yy = np.where(y == BLANK, EOS, y)  # placeholder never influences the requested positions
        if yy.min() < 0 or yy.max() >= self.cfg.tgt_vocab:
            raise ValueError("target index out of range")
        enc = self._enc_tensors(self.context(x))
        P, E = self.P, self.params["tgt_emb"]
        last = max(positions)
        first = min(positions)
        # forward direction: state before y_t has consumed BOS, y_0 .. y_{t-1}
        fwd_in = np.concatenate([[BOS], yy[:-1]])
        h, c = self._init_state(P, "dec_f", enc, 1)
        hf = {}
        for t in range(last + 1):
            h, c, _, _ = self._step(P, "dec_f", Tensor(E[fwd_in[t]][None]), h, c, enc)
            hf[t] = h
        bwd_in = np.concatenate([yy[1:], [EOS]])
        h, c = self._init_state(P, "dec_b", enc, 1)
        hb = {}
        for t in range(m - 1, first - 1, -1):
            h, c, _, _ = self._step(P, "dec_b", Tensor(E[bwd_in[t]][None]), h, c, enc)
            hb[t] = h
        return np.stack([self._logp(P, [hf[t], hb[t]]).data[0] for t in positions])

    def birnn_conditional(self, x, y: Sequence[int], t: int, allowed: np.ndarray | None = None) -> np.ndarray:
        """P(y_t | y_{!=t}, x); optionally renormalised over ``allowed`` indices."""
        logp = self.birnn_logprobs(x, y, [t])[0]
        p = np.exp(logp - logp.max())
        if allowed is not None:
            mask = np.zeros_like(p)
            mask[allowed] = 1.0
            p = p * mask
        return p / p.sum()

    # --- training-time batched losses ---------------------------------------

    def batch_loss(self, P: dict, X: np.ndarray | None, x_len: np.ndarray | None, Y: np.ndarray, y_len: np.ndarray) -> tuple[Tensor, int]:
        """Summed NLL over a padded batch (teacher forcing) and the token count."""
        B, m = Y.shape
        enc = self._encode_batch(P, X, x_len) if self.cfg.conditional else None
        valid = np.arange(m)[None, :] < y_len[:, None]
        embs = self._input_embs(P, Y)
        terms = []
        if self.cfg.decoder == "birnn":
            h, c = self._init_state(P, "dec_f", enc, B)
            hf = []
            for t in range(m):
                h, c, _, _ = self._step(P, "dec_f", embs[:, t, :], h, c, enc)
                hf.append(h)
            bwd_tok = np.where(np.arange(m)[None, :] == (y_len[:, None] - 1), EOS, np.concatenate([Y[:, 1:], np.full((B, 1), EOS)], axis=1))
            bwd_embs = ad.embedding(P["tgt_emb"], bwd_tok)
            h, c = self._init_state(P, "dec_b", enc, B)
            hb = [None] * m
            for t in range(m - 1, -1, -1):
                h, c, _, _ = self._step(P, "dec_b", bwd_embs[:, t, :], h, c, enc, valid[:, t : t + 1].astype(self.dtype))
                hb[t] = h
            for t in range(m):
                terms.append(self._tok_terms(self._logp(P, [hf[t], hb[t]]), Y[:, t], valid[:, t]))
        else:
            logps = self._run_unidir(P, enc, [embs[:, t, :] for t in range(m)])
            for t, lp in enumerate(logps):
                terms.append(self._tok_terms(lp, Y[:, t], valid[:, t]))
        total = ad.mul(ad.sum_(ad.concat(terms, axis=0)), -1.0)
        return total, int(valid.sum())

    def _tok_terms(self, logp: Tensor, targets: np.ndarray, valid: np.ndarray) -> Tensor:
        picked = ad.pick(logp, targets)
        if valid.all():
            return picked
        return ad.mul(picked, valid.astype(self.dtype))


def directional_prob(fwd: Seq2Seq, bwd: Seq2Seq, x, y: Sequence[int], t: int) -> tuple[float, float]:
    """(P_fwd(y_t | y_<t, x), P_bwd(y_t | y_>t, x)) for 0-based position ``t``."""
    if fwd.vocab_size != bwd.vocab_size:
        raise ValueError("forward and backward models have different vocabularies")
    y = list(y)
    if not 0 <= t < len(y):
        raise ValueError(f"position {t} out of range")
    lf = fwd.token_logprobs(x, np.asarray(y)[None])[0, t]
    lb = bwd.token_logprobs(x, np.asarray(reverse_sequence(y))[None])[0, len(y) - 1 - t]
    return float(np.exp(lf)), float(np.exp(lb))
