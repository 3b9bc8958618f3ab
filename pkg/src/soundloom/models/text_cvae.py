"""Conditional lyric-line VAE.

Bi-directional LSTM encoder and LSTM decoder; the conditioning audio latent
z_s is concatenated with the word embedding at every step of both. The line
latent z_t enters the decoder through its initial hidden/cell state. The
conditional prior over z_t is N(0, I) regardless of z_s, so generation draws
z_t from the standard normal.

Word dropout (UNK substitution on decoder inputs, rate 0.2) is the only
posterior-collapse mitigation; the KL weight stays at 1.0.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..nn import (Adam, Checkpoint, Parameter, dense_backward, dense_forward,
                  embedding_backward, embedding_forward, generator_state,
                  glorot_uniform, load_checkpoint, loss_kl_gaussian,
                  loss_nll_sequence, lstm_backward, lstm_forward, lstm_step,
                  new_generator, save_checkpoint, tanh_backward, tanh_forward,
                  zeros)
from .latents import LatentCode, LatentDistribution, sample_latent
from .spec_vae import TrainTrace

log = logging.getLogger(__name__)

CHECKPOINT_KIND = "text-cvae"

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")

MAX_LINE_TOKENS = 20


class Vocabulary:
    """Dense token ids with the four specials at the front."""

    def __init__(self, tokens: list[str]):
        if list(tokens[:4]) != list(SPECIAL_TOKENS):
            raise ValueError("vocabulary must start with the special tokens")
        self.id_to_token = list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(tokens)}
        if len(self.token_to_id) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    @staticmethod
    def build(lines, min_freq: int = 2) -> "Vocabulary":
        counts = Counter()
        for line in lines:
            counts.update(line.lower().split())
        kept = sorted(t for t, c in counts.items() if c >= min_freq)
        return Vocabulary(list(SPECIAL_TOKENS) + kept)

    def encode(self, text: str) -> list[int]:
        return [self.token_to_id.get(tok, UNK) for tok in text.lower().split()]

    def decode(self, ids) -> str:
        return " ".join(self.id_to_token[i] for i in ids)


@dataclass
class LyricLine:
    tokens: list[int]
    text: str
    source: str = "generated"          # or "user"
    conditioning_clip_id: str | None = None
    ranker_score: float | None = None

    def __post_init__(self):
        if not 1 <= len(self.tokens) <= MAX_LINE_TOKENS:
            raise ValueError(
                f"line must have 1..{MAX_LINE_TOKENS} tokens, "
                f"got {len(self.tokens)}: {self.text!r}")
        if self.source not in ("generated", "user"):
            raise ValueError(f"unknown line source {self.source!r}")


def line_from_text(text: str, vocab: Vocabulary, source: str = "user",
                   conditioning_clip_id: str | None = None) -> LyricLine:
    tokens = vocab.encode(text)[:MAX_LINE_TOKENS]
    if not tokens:
        raise ValueError(f"line {text!r} is empty after tokenization")
    return LyricLine(tokens=tokens, text=text.strip(), source=source,
                     conditioning_clip_id=conditioning_clip_id)


# ---------------------------------------------------------------- ranker

def default_heuristic_ranker(line: LyricLine) -> float:
    """Score in [0, 1]: rewards 4-12 token lines with distinct tokens;
    penalizes token runs of 3+ and UNK usage. Deterministic."""
    n = len(line.tokens)
    if 4 <= n <= 12:
        length_reward = 1.0
    else:
        dist = (4 - n) if n < 4 else (n - 12)
        length_reward = max(0.0, 1.0 - 0.2 * dist)
    distinct = len(set(line.tokens)) / n
    run = 1
    has_long_run = False
    for prev, cur in zip(line.tokens, line.tokens[1:]):
        run = run + 1 if cur == prev else 1
        if run >= 3:
            has_long_run = True
            break
    run_penalty = 0.3 if has_long_run else 1.0
    unk_frac = sum(1 for t in line.tokens if t == UNK) / n
    score = (0.5 * length_reward + 0.5 * distinct) * run_penalty \
        * (1.0 - 0.8 * unk_frac)
    return float(min(max(score, 0.0), 1.0))


def rank_and_select(lines: list[LyricLine], ranker, k: int = 10,
                    rng: np.random.Generator | None = None) -> LyricLine:
    """Score every line, keep the top k, draw one uniformly."""
    if not lines:
        raise ValueError("rank_and_select needs at least one line")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores = np.array([ranker(line) for line in lines])
    for line, score in zip(lines, scores):
        line.ranker_score = float(score)
    order = np.argsort(-scores, kind="stable")
    top = order[:min(k, len(lines))]
    if len(top) == 1 or rng is None:
        return lines[int(top[0])]
    return lines[int(rng.choice(top))]


# ---------------------------------------------------------------- model

@dataclass(frozen=True)
class TextCvaeConfig:
    vocab_size: int
    embed_dim: int = 300
    hidden: int = 128
    latent_dim: int = 128
    cond_dim: int = 128
    max_len: int = MAX_LINE_TOKENS

    def to_dict(self) -> dict:
        return {"vocab_size": self.vocab_size, "embed_dim": self.embed_dim,
                "hidden": self.hidden, "latent_dim": self.latent_dim,
                "cond_dim": self.cond_dim, "max_len": self.max_len}

    @staticmethod
    def from_dict(d: dict) -> "TextCvaeConfig":
        return TextCvaeConfig(**d)


class TextCvae:
    def __init__(self, vocab: Vocabulary,
                 config: TextCvaeConfig | None = None, seed: int = 0,
                 dtype=np.float32):
        self.vocab = vocab
        self.config = config or TextCvaeConfig(vocab_size=len(vocab))
        if self.config.vocab_size != len(vocab):
            raise ValueError(
                f"config vocab_size {self.config.vocab_size} != "
                f"vocabulary size {len(vocab)}")
        self.dtype = dtype
        cfg = self.config
        rng = new_generator(seed)
        step_dim = cfg.embed_dim + cfg.cond_dim  # embedding plus z_s, each step
        h = cfg.hidden
        self.params: dict[str, Parameter] = {}

        def add(name, value):
            p = Parameter(name, value.astype(dtype))
            self.params[name] = p
            return p

        add("emb", glorot_uniform(rng, (cfg.vocab_size, cfg.embed_dim),
                                  cfg.vocab_size, cfg.embed_dim))
        for tag in ("enc_fwd", "enc_bwd", "dec"):
            add(f"{tag}.wx", glorot_uniform(rng, (step_dim, 4 * h), step_dim, h))
            add(f"{tag}.wh", glorot_uniform(rng, (h, 4 * h), h, h))
            add(f"{tag}.b", zeros(4 * h))
        # Zero-initialized heads: the untrained posterior equals the prior.
        add("mu.w", zeros((2 * h, cfg.latent_dim)))
        add("mu.b", zeros(cfg.latent_dim))
        add("logsigma.w", zeros((2 * h, cfg.latent_dim)))
        add("logsigma.b", zeros(cfg.latent_dim))
        add("h0.w", glorot_uniform(rng, (cfg.latent_dim, h), cfg.latent_dim, h))
        add("h0.b", zeros(h))
        add("c0.w", glorot_uniform(rng, (cfg.latent_dim, h), cfg.latent_dim, h))
        add("c0.b", zeros(h))
        add("out.w", glorot_uniform(rng, (h, cfg.vocab_size), h, cfg.vocab_size))
        add("out.b", zeros(cfg.vocab_size))

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def _p(self, name: str) -> np.ndarray:
        return self.params[name].value

    # ------------------------------------------------------------ encoder

    def _concat_cond(self, emb: np.ndarray, z_s: np.ndarray) -> np.ndarray:
        # emb [T, N, E], z_s [N, C] -> [T, N, E + C]
        t_len, n, _ = emb.shape
        cond = np.broadcast_to(z_s[None, :, :], (t_len, n, z_s.shape[1]))
        return np.concatenate([emb, cond.astype(emb.dtype)], axis=2)

    def _encoder_forward(self, ids: np.ndarray, mask: np.ndarray,
                         z_s: np.ndarray):
        mask = mask.astype(self.dtype, copy=False)
        emb, emb_cache = embedding_forward(ids, self._p("emb"))
        x = self._concat_cond(emb, z_s)
        _, h_fwd, _, cache_fwd = lstm_forward(
            x, self._p("enc_fwd.wx"), self._p("enc_fwd.wh"),
            self._p("enc_fwd.b"), mask=mask)
        # Reversed pass: frozen-state masking makes right padding harmless.
        _, h_bwd, _, cache_bwd = lstm_forward(
            x[::-1], self._p("enc_bwd.wx"), self._p("enc_bwd.wh"),
            self._p("enc_bwd.b"), mask=mask[::-1])
        both = np.concatenate([h_fwd, h_bwd], axis=1)
        mu, c_mu = dense_forward(both, self._p("mu.w"), self._p("mu.b"))
        ls, c_ls = dense_forward(both, self._p("logsigma.w"),
                                 self._p("logsigma.b"))
        return mu, ls, (emb_cache, cache_fwd, cache_bwd, c_mu, c_ls, x.shape)

    def _encoder_backward(self, dmu, dls, cache):
        emb_cache, cache_fwd, cache_bwd, c_mu, c_ls, x_shape = cache
        h = self.config.hidden
        dboth_mu, dw_mu, db_mu = dense_backward(dmu, c_mu)
        dboth_ls, dw_ls, db_ls = dense_backward(dls, c_ls)
        self.params["mu.w"].accumulate(dw_mu)
        self.params["mu.b"].accumulate(db_mu)
        self.params["logsigma.w"].accumulate(dw_ls)
        self.params["logsigma.b"].accumulate(db_ls)
        dboth = dboth_mu + dboth_ls
        zeros_seq = np.zeros(
            (x_shape[0], x_shape[1], h), dtype=dboth.dtype)
        dx_fwd, dwx, dwh, db, _, _ = lstm_backward(
            zeros_seq, dboth[:, :h], None, cache_fwd)
        self.params["enc_fwd.wx"].accumulate(dwx)
        self.params["enc_fwd.wh"].accumulate(dwh)
        self.params["enc_fwd.b"].accumulate(db)
        dx_bwd_rev, dwx, dwh, db, _, _ = lstm_backward(
            zeros_seq, dboth[:, h:], None, cache_bwd)
        self.params["enc_bwd.wx"].accumulate(dwx)
        self.params["enc_bwd.wh"].accumulate(dwh)
        self.params["enc_bwd.b"].accumulate(db)
        dx = dx_fwd + dx_bwd_rev[::-1]
        demb = dx[:, :, :self.config.embed_dim]
        self.params["emb"].accumulate(embedding_backward(demb, emb_cache))

    # ------------------------------------------------------------ decoder

    def _init_state_forward(self, z_t: np.ndarray):
        pre_h, c_h = dense_forward(z_t, self._p("h0.w"), self._p("h0.b"))
        h0, t_h = tanh_forward(pre_h)
        pre_c, c_c = dense_forward(z_t, self._p("c0.w"), self._p("c0.b"))
        c0, t_c = tanh_forward(pre_c)
        return h0, c0, (c_h, t_h, c_c, t_c)

    def _init_state_backward(self, dh0, dc0, cache):
        c_h, t_h, c_c, t_c = cache
        dpre_h = tanh_backward(dh0, t_h)
        dz1, dw, db = dense_backward(dpre_h, c_h)
        self.params["h0.w"].accumulate(dw)
        self.params["h0.b"].accumulate(db)
        dpre_c = tanh_backward(dc0, t_c)
        dz2, dw, db = dense_backward(dpre_c, c_c)
        self.params["c0.w"].accumulate(dw)
        self.params["c0.b"].accumulate(db)
        return dz1 + dz2

    def _decoder_forward(self, input_ids, mask, z_s, z_t):
        mask = mask.astype(self.dtype, copy=False)
        emb, emb_cache = embedding_forward(input_ids, self._p("emb"))
        x = self._concat_cond(emb, z_s)
        h0, c0, init_cache = self._init_state_forward(z_t)
        h_seq, _, _, lstm_cache = lstm_forward(
            x, self._p("dec.wx"), self._p("dec.wh"), self._p("dec.b"),
            mask=mask, h0=h0, c0=c0)
        t_len, n, h = h_seq.shape
        logits_flat, c_out = dense_forward(
            h_seq.reshape(t_len * n, h), self._p("out.w"), self._p("out.b"))
        logits = logits_flat.reshape(t_len, n, -1)
        return logits, (emb_cache, init_cache, lstm_cache, c_out, h_seq.shape)

    def _decoder_backward(self, dlogits, cache):
        emb_cache, init_cache, lstm_cache, c_out, h_shape = cache
        t_len, n, h = h_shape
        dflat, dw, db = dense_backward(
            dlogits.reshape(t_len * n, -1), c_out)
        self.params["out.w"].accumulate(dw)
        self.params["out.b"].accumulate(db)
        dh_seq = dflat.reshape(t_len, n, h)
        dx, dwx, dwh, dbl, dh0, dc0 = lstm_backward(
            dh_seq, None, None, lstm_cache)
        self.params["dec.wx"].accumulate(dwx)
        self.params["dec.wh"].accumulate(dwh)
        self.params["dec.b"].accumulate(dbl)
        dz_t = self._init_state_backward(dh0, dc0, init_cache)
        demb = dx[:, :, :self.config.embed_dim]
        self.params["emb"].accumulate(embedding_backward(demb, emb_cache))
        return dz_t

    # ------------------------------------------------------------ public API

    def encode_line(self, line: LyricLine, z_s: LatentCode) -> LatentDistribution:
        """Deterministic posterior (mu, log_sigma) of one line."""
        if not line.tokens:
            raise ValueError("cannot encode an empty line")
        ids = np.array(line.tokens, dtype=np.int64)[:, None]
        mask = np.ones_like(ids, dtype=self.dtype)
        mu, ls, _ = self._encoder_forward(
            ids, mask, z_s.z[None, :].astype(self.dtype))
        return LatentDistribution(mean=mu[0], log_sigma=ls[0])

    def sample(self, dist: LatentDistribution, tau: float,
               rng: np.random.Generator) -> LatentCode:
        return sample_latent(dist, tau, rng, origin="text")

    def generate_lines(self, z_s: LatentCode, count: int = 100,
                       max_len: int | None = None, temperature: float = 0.8,
                       rng: np.random.Generator | None = None,
                       z_t: np.ndarray | None = None,
                       conditioning_clip_id: str | None = None) -> list[LyricLine]:
        """Decode `count` candidate lines; z_t drawn from the N(0, I) prior.

        temperature 0 decodes greedily; pass z_t to fix the line latent
        (tests use z_t = 0 with temperature 0 for full determinism).
        """
        cfg = self.config
        max_len = max_len or cfg.max_len
        if temperature > 0 or z_t is None:
            if rng is None:
                raise ValueError("sampled generation needs an RNG")
        if z_t is None:
            z_t = rng.standard_normal((count, cfg.latent_dim)).astype(self.dtype)
        else:
            z_t = np.broadcast_to(
                z_t.astype(self.dtype), (count, cfg.latent_dim)).copy()
        z_cond = np.broadcast_to(z_s.z.astype(self.dtype),
                                 (count, cfg.cond_dim))
        h, c, _ = self._init_state_forward(z_t)
        token = np.full(count, BOS, dtype=np.int64)
        done = np.zeros(count, dtype=bool)
        rows = [[] for _ in range(count)]
        for step in range(max_len):
            emb = self._p("emb")[token]
            x = np.concatenate([emb, z_cond], axis=1)
            h, c, _ = lstm_step(x, h, c, self._p("dec.wx"),
                                self._p("dec.wh"), self._p("dec.b"))
            logits = h @ self._p("out.w") + self._p("out.b")
            logits[:, PAD] = -np.inf
            logits[:, BOS] = -np.inf
            if step == 0:
                logits[:, EOS] = -np.inf  # guarantee at least one token
            if temperature == 0.0:
                token = np.argmax(logits, axis=1)
            else:
                scaled = (logits / temperature).astype(np.float64)
                scaled -= scaled.max(axis=1, keepdims=True)
                probs = np.exp(scaled)
                probs /= probs.sum(axis=1, keepdims=True)
                cum = probs.cumsum(axis=1)
                cum[:, -1] = 1.0
                u = rng.random((count, 1))
                token = (u > cum).sum(axis=1)
            for i in range(count):
                if not done[i]:
                    if token[i] == EOS:
                        done[i] = True
                    else:
                        rows[i].append(int(token[i]))
            if done.all():
                break
        lines = []
        for row in rows:
            tokens = row if row else [UNK]
            lines.append(LyricLine(
                tokens=tokens, text=self.vocab.decode(tokens),
                source="generated",
                conditioning_clip_id=conditioning_clip_id))
        return lines

    # ------------------------------------------------------------ training

    def train_step(self, enc_ids, enc_mask, dec_in, dec_target, dec_mask,
                   z_s, tau: float, rng, word_dropout: float):
        """Teacher-forced step; returns (total, nll, kl) with grads in .grad."""
        z_s = z_s.astype(self.dtype, copy=False)
        if word_dropout > 0.0:
            drop = (rng.random(dec_in.shape) < word_dropout) \
                & (dec_in != PAD) & (dec_in != BOS)
            dec_in = np.where(drop, UNK, dec_in)
        mu, ls, enc_cache = self._encoder_forward(enc_ids, enc_mask, z_s)
        kl, dmu_kl, dls_kl = loss_kl_gaussian(mu, ls)
        sigma = np.exp(ls)
        eps = rng.standard_normal(mu.shape).astype(self.dtype)
        z_t = mu + tau * eps * sigma
        logits, dec_cache = self._decoder_forward(dec_in, dec_mask, z_s, z_t)
        nll, dlogits, per_token = loss_nll_sequence(logits, dec_target, dec_mask)
        dz_t = self._decoder_backward(dlogits, dec_cache)
        dmu = dz_t + dmu_kl.astype(self.dtype)
        dls = dz_t * (tau * eps * sigma) + dls_kl.astype(self.dtype)
        self._encoder_backward(dmu, dls, enc_cache)
        nll_f, kl_f = float(nll), float(kl)
        return nll_f + kl_f, nll_f, kl_f, float(per_token)

    def teacher_forced_nll(self, token_lists: list[list[int]],
                           z_s: np.ndarray) -> float:
        """Deterministic per-token NLL with z_t = posterior mean."""
        enc_ids, enc_mask, dec_in, dec_target, dec_mask = pad_batch(token_lists)
        z_s = z_s.astype(self.dtype)
        mu, _, _ = self._encoder_forward(enc_ids, enc_mask, z_s)
        logits, _ = self._decoder_forward(dec_in, dec_mask, z_s, mu)
        _, _, per_token = loss_nll_sequence(logits, dec_target, dec_mask)
        return float(per_token)

    # ------------------------------------------------------------ persistence

    def save(self, path, step: int = 0, rng_state: dict | None = None) -> None:
        save_checkpoint(path, Checkpoint(
            kind=CHECKPOINT_KIND,
            tensors={name: p.value for name, p in self.params.items()},
            step=step, rng_state=rng_state,
            config={"model": self.config.to_dict(),
                    "vocab": self.vocab.id_to_token}))

    @staticmethod
    def load(path) -> "TextCvae":
        ckpt = load_checkpoint(path)
        if ckpt.kind != CHECKPOINT_KIND:
            raise ValueError(f"{path} holds a {ckpt.kind!r} checkpoint, "
                             f"expected {CHECKPOINT_KIND!r}")
        vocab = Vocabulary(ckpt.config["vocab"])
        model = TextCvae(vocab, TextCvaeConfig.from_dict(ckpt.config["model"]))
        for name, p in model.params.items():
            p.value[...] = ckpt.tensors[name].astype(model.dtype)
        return model


# ---------------------------------------------------------------- batching

def pad_batch(token_lists: list[list[int]]):
    """Build padded encoder/decoder tensors for one batch.

    Returns (enc_ids [T,N], enc_mask, dec_in [T+1,N], dec_target [T+1,N],
    dec_mask); decoder rows are BOS + tokens -> tokens + EOS.
    """
    if not token_lists:
        raise ValueError("empty batch")
    n = len(token_lists)
    t_enc = max(len(t) for t in token_lists)
    enc_ids = np.full((t_enc, n), PAD, dtype=np.int64)
    enc_mask = np.zeros((t_enc, n))
    dec_in = np.full((t_enc + 1, n), PAD, dtype=np.int64)
    dec_target = np.full((t_enc + 1, n), PAD, dtype=np.int64)
    dec_mask = np.zeros((t_enc + 1, n))
    for i, tokens in enumerate(token_lists):
        if not tokens:
            raise ValueError("empty token list in batch")
        ln = len(tokens)
        enc_ids[:ln, i] = tokens
        enc_mask[:ln, i] = 1.0
        dec_in[0, i] = BOS
        dec_in[1:ln + 1, i] = tokens
        dec_target[:ln, i] = tokens
        dec_target[ln, i] = EOS
        dec_mask[:ln + 1, i] = 1.0
    return enc_ids, enc_mask, dec_in, dec_target, dec_mask


@dataclass
class TextCvaeTrainConfig:
    epochs: int = 30
    batch_size: int = 16
    lr_start: float = 5e-3
    lr_end: float = 1e-5
    anneal_steps: int = 3000
    word_dropout: float = 0.2
    tau: float = 1.0          # z_t reparameterization noise
    z_s_tau: float = 1.0      # conditioning sampled from the audio posterior
    seed: int = 0


def annealed_lr(step: int, cfg: TextCvaeTrainConfig) -> float:
    """Geometric interpolation lr_start -> lr_end over anneal_steps."""
    frac = min(step / max(cfg.anneal_steps, 1), 1.0)
    return float(cfg.lr_start * (cfg.lr_end / cfg.lr_start) ** frac)


def train_text_cvae(pairs, spec_vae, model: TextCvae,
                    cfg: TextCvaeTrainConfig, out_path=None) -> TrainTrace:
    """Train on aligned (token_list, spectrogram values) pairs.

    The conditioning z_s is re-sampled from the clip's audio posterior every
    epoch rather than cached as the mean; the posterior parameters
    themselves are computed once (the audio model is frozen).
    """
    token_lists = [list(t) for t, _ in pairs]
    if any(not t for t in token_lists):
        raise ValueError("aligned pair with an empty token list")
    specs = spec_vae.fit_batch([np.asarray(v) for _, v in pairs])
    mus, lss = [], []
    for start in range(0, specs.shape[0], 64):
        mu, ls = spec_vae.encode(specs[start:start + 64])
        mus.append(mu)
        lss.append(ls)
    mu_all = np.concatenate(mus)
    sigma_all = np.exp(np.concatenate(lss))

    rng = new_generator(cfg.seed)
    opt = Adam(model.parameters(), lr=cfg.lr_start)
    trace = TrainTrace()
    snapshot = {k: p.value.copy() for k, p in model.params.items()}
    n = len(token_lists)
    step = 0
    for epoch in range(cfg.epochs):
        if cfg.z_s_tau == 0.0:
            z_s_all = mu_all
        else:
            eps = rng.standard_normal(mu_all.shape).astype(mu_all.dtype)
            z_s_all = mu_all + cfg.z_s_tau * eps * sigma_all
        order = rng.permutation(n)
        sums = np.zeros(3)
        batches = 0
        for start in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            enc_ids, enc_mask, dec_in, dec_target, dec_mask = pad_batch(
                [token_lists[i] for i in idx])
            opt.zero_grad()
            opt.lr = annealed_lr(step, cfg)
            total, nll, kl, per_token = model.train_step(
                enc_ids, enc_mask, dec_in, dec_target, dec_mask,
                z_s_all[idx], cfg.tau, rng, cfg.word_dropout)
            if not np.isfinite(total):
                log.error("non-finite text loss at step %d; restoring last "
                          "good epoch snapshot", step)
                for k, p in model.params.items():
                    p.value[...] = snapshot[k]
                trace.aborted = True
                if out_path is not None:
                    model.save(out_path, step=step,
                               rng_state=generator_state(rng))
                return trace
            opt.step()
            step += 1
            trace.steps.append({"step": step, "nll": nll, "kl": kl,
                                "total": total, "per_token": per_token,
                                "lr": opt.lr})
            sums += (nll, kl, total)
            batches += 1
        snapshot = {k: p.value.copy() for k, p in model.params.items()}
        mean = sums / max(batches, 1)
        trace.epochs.append({"epoch": epoch, "nll": float(mean[0]),
                             "kl": float(mean[1]), "total": float(mean[2])})
        log.info("text-cvae epoch %d: nll %.3f kl %.3f", epoch, mean[0], mean[1])
    if out_path is not None:
        model.save(out_path, step=step, rng_state=generator_state(rng))
    return trace
