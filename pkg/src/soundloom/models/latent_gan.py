"""Latent alignment GAN.

A 3-layer feed-forward generator maps the fusion of the previous clip's
latent and the current line's latent to a predicted next-clip latent. The
discriminator scores the elementwise sum of the line latent and a candidate
next-clip latent (real or predicted).

The generator trains against the non-saturating surrogate -log D(fake)
rather than log(1 - D(fake)); the minimax form is the stated objective and
the surrogate is the standard optimization of it. An auxiliary MSE between
the prediction and the true next-clip latent (weight lambda_mse, computed
before the fusion with the line latent that forms D's input) stabilizes
training.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..nn import (Adam, Checkpoint, Parameter, dense_backward, dense_forward,
                  generator_state, glorot_uniform, load_checkpoint, loss_bce,
                  new_generator, relu_backward, relu_forward, save_checkpoint,
                  sigmoid_backward, sigmoid_forward, zeros)
from .latents import LATENT_DIM, LatentCode

log = logging.getLogger(__name__)

CHECKPOINT_KIND = "latent-gan"

FUSION_MODES = ("add", "hadamard", "weighted-add")

COLLAPSE_STREAK = 200  # consecutive steps of D accuracy 1.0 before warning


def fuse(z_s: np.ndarray, z_t: np.ndarray, mode: str,
         w_s: np.ndarray | None = None,
         w_t: np.ndarray | None = None) -> np.ndarray:
    """Combine a clip latent and a line latent into one 128-dim vector.

    add: z_s + z_t; hadamard: z_s * z_t; weighted-add: z_s W_s^T + z_t W_t^T
    with trainable square matrices.
    """
    if z_s.shape != z_t.shape:
        raise ValueError(f"fuse: shapes differ {z_s.shape} vs {z_t.shape}")
    if mode == "add":
        return z_s + z_t
    if mode == "hadamard":
        return z_s * z_t
    if mode == "weighted-add":
        if w_s is None or w_t is None:
            raise ValueError("weighted-add fusion needs W_s and W_t")
        return z_s @ w_s.T + z_t @ w_t.T
    raise ValueError(f"unknown fusion mode {mode!r}; pick from {FUSION_MODES}")


@dataclass(frozen=True)
class GanConfig:
    latent_dim: int = LATENT_DIM
    hidden: int = 128
    fusion: str = "add"
    lambda_mse: float = 2.0

    def __post_init__(self):
        if self.fusion not in FUSION_MODES:
            raise ValueError(
                f"unknown fusion mode {self.fusion!r}; pick from {FUSION_MODES}")

    def to_dict(self) -> dict:
        return {"latent_dim": self.latent_dim, "hidden": self.hidden,
                "fusion": self.fusion, "lambda_mse": self.lambda_mse}

    @staticmethod
    def from_dict(d: dict) -> "GanConfig":
        return GanConfig(**d)


class GanModel:
    """Generator + discriminator over 128-dim latents."""

    def __init__(self, config: GanConfig | None = None, seed: int = 0,
                 dtype=np.float32):
        self.config = config or GanConfig()
        self.dtype = dtype
        cfg = self.config
        rng = new_generator(seed)
        d, h = cfg.latent_dim, cfg.hidden
        self.params: dict[str, Parameter] = {}

        def add(name, value):
            self.params[name] = Parameter(name, value.astype(dtype))

        for tag, dims in (("g", [(d, h), (h, h), (h, d)]),
                          ("d", [(d, h), (h, h), (h, 1)])):
            for i, (din, dout) in enumerate(dims, start=1):
                add(f"{tag}{i}.w", glorot_uniform(rng, (din, dout), din, dout))
                add(f"{tag}{i}.b", zeros(dout))
        if cfg.fusion == "weighted-add":
            # Identity start: weighted-add begins as plain addition.
            add("fuse.ws", np.eye(d, dtype=dtype))
            add("fuse.wt", np.eye(d, dtype=dtype))

    def _p(self, name: str) -> np.ndarray:
        return self.params[name].value

    def generator_parameters(self) -> list[Parameter]:
        names = [f"g{i}.{s}" for i in (1, 2, 3) for s in ("w", "b")]
        if self.config.fusion == "weighted-add":
            names += ["fuse.ws", "fuse.wt"]
        return [self.params[n] for n in names]

    def discriminator_parameters(self) -> list[Parameter]:
        return [self.params[f"d{i}.{s}"] for i in (1, 2, 3)
                for s in ("w", "b")]

    # ------------------------------------------------------------ fusion

    def fuse(self, z_s: np.ndarray, z_t: np.ndarray) -> np.ndarray:
        if self.config.fusion == "weighted-add":
            return fuse(z_s, z_t, "weighted-add",
                        self._p("fuse.ws"), self._p("fuse.wt"))
        return fuse(z_s, z_t, self.config.fusion)

    def _fuse_backward(self, dfused, z_s, z_t) -> None:
        # Latents are data; only the weighted-add matrices take gradients.
        if self.config.fusion == "weighted-add":
            self.params["fuse.ws"].accumulate(dfused.T @ z_s)
            self.params["fuse.wt"].accumulate(dfused.T @ z_t)

    # ------------------------------------------------------------ networks

    def _g_forward(self, x: np.ndarray):
        h1, c1 = dense_forward(x, self._p("g1.w"), self._p("g1.b"))
        a1, r1 = relu_forward(h1)
        h2, c2 = dense_forward(a1, self._p("g2.w"), self._p("g2.b"))
        a2, r2 = relu_forward(h2)
        out, c3 = dense_forward(a2, self._p("g3.w"), self._p("g3.b"))
        return out, (c1, r1, c2, r2, c3)

    def _g_backward(self, dout, cache) -> np.ndarray:
        c1, r1, c2, r2, c3 = cache
        da2, dw, db = dense_backward(dout, c3)
        self.params["g3.w"].accumulate(dw)
        self.params["g3.b"].accumulate(db)
        dh2 = relu_backward(da2, r2)
        da1, dw, db = dense_backward(dh2, c2)
        self.params["g2.w"].accumulate(dw)
        self.params["g2.b"].accumulate(db)
        dh1 = relu_backward(da1, r1)
        dx, dw, db = dense_backward(dh1, c1)
        self.params["g1.w"].accumulate(dw)
        self.params["g1.b"].accumulate(db)
        return dx

    def _d_forward(self, x: np.ndarray):
        h1, c1 = dense_forward(x, self._p("d1.w"), self._p("d1.b"))
        a1, r1 = relu_forward(h1)
        h2, c2 = dense_forward(a1, self._p("d2.w"), self._p("d2.b"))
        a2, r2 = relu_forward(h2)
        logit, c3 = dense_forward(a2, self._p("d3.w"), self._p("d3.b"))
        prob, s = sigmoid_forward(logit)
        return prob, (c1, r1, c2, r2, c3, s)

    def _d_backward(self, dprob, cache, accumulate: bool = True) -> np.ndarray:
        """Backprop through D; optionally skip its parameter gradients
        (generator updates flow through D but must not move it)."""
        c1, r1, c2, r2, c3, s = cache
        dlogit = sigmoid_backward(dprob, s)
        da2, dw, db = dense_backward(dlogit, c3)
        if accumulate:
            self.params["d3.w"].accumulate(dw)
            self.params["d3.b"].accumulate(db)
        dh2 = relu_backward(da2, r2)
        da1, dw, db = dense_backward(dh2, c2)
        if accumulate:
            self.params["d2.w"].accumulate(dw)
            self.params["d2.b"].accumulate(db)
        dh1 = relu_backward(da1, r1)
        dx, dw, db = dense_backward(dh1, c1)
        if accumulate:
            self.params["d1.w"].accumulate(dw)
            self.params["d1.b"].accumulate(db)
        return dx

    def discriminate(self, z: np.ndarray) -> np.ndarray:
        prob, _ = self._d_forward(z.astype(self.dtype, copy=False))
        return prob

    # ------------------------------------------------------------ inference

    def predict_next(self, z_s_prev: LatentCode, z_t: LatentCode) -> LatentCode:
        """Deterministic prediction of the next clip's latent code."""
        fused = self.fuse(z_s_prev.z[None, :].astype(self.dtype),
                          z_t.z[None, :].astype(self.dtype))
        out, _ = self._g_forward(fused)
        return LatentCode(z=out[0], origin="gan-predicted")

    def predict_batch(self, z_s_prev: np.ndarray, z_t: np.ndarray) -> np.ndarray:
        fused = self.fuse(z_s_prev.astype(self.dtype, copy=False),
                          z_t.astype(self.dtype, copy=False))
        out, _ = self._g_forward(fused)
        return out

    # ------------------------------------------------------------ persistence

    def save(self, path, step: int = 0, rng_state: dict | None = None) -> None:
        save_checkpoint(path, Checkpoint(
            kind=CHECKPOINT_KIND,
            tensors={name: p.value for name, p in self.params.items()},
            step=step, rng_state=rng_state, config=self.config.to_dict()))

    @staticmethod
    def load(path) -> "GanModel":
        ckpt = load_checkpoint(path)
        if ckpt.kind != CHECKPOINT_KIND:
            raise ValueError(f"{path} holds a {ckpt.kind!r} checkpoint, "
                             f"expected {CHECKPOINT_KIND!r}")
        model = GanModel(GanConfig.from_dict(ckpt.config))
        for name, p in model.params.items():
            p.value[...] = ckpt.tensors[name].astype(model.dtype)
        return model


# ---------------------------------------------------------------- training

@dataclass
class GanTrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0


@dataclass
class GanTrainTrace:
    steps: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    collapse_warned: bool = False
    collapse_step: int | None = None


def train_gan(triples: np.ndarray, model: GanModel,
              cfg: GanTrainConfig, out_path=None) -> GanTrainTrace:
    """Alternating 1:1 discriminator/generator updates over latent triples.

    triples: [n, 3, latent_dim] stacked (z_s_prev, z_t, z_s_next). Warns if
    the discriminator's accuracy stays pinned at 1.0 for 200 consecutive
    steps, the usual sign the generator has collapsed.
    """
    if triples.ndim != 3 or triples.shape[1] != 3 \
            or triples.shape[2] != model.config.latent_dim:
        raise ValueError(f"triples must be [n, 3, {model.config.latent_dim}], "
                         f"got {triples.shape}")
    n = triples.shape[0]
    if n < cfg.batch_size:
        raise ValueError(f"need at least one full batch: {n} triples "
                         f"< batch size {cfg.batch_size}")
    data = triples.astype(model.dtype, copy=False)
    rng = new_generator(cfg.seed)
    opt_d = Adam(model.discriminator_parameters(), lr=cfg.lr)
    opt_g = Adam(model.generator_parameters(), lr=cfg.lr)
    lam = model.config.lambda_mse
    trace = GanTrainTrace()
    step = 0
    d_pinned_streak = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        sums = np.zeros(4)
        batches = 0
        for start in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            z_prev, z_t, z_next = data[idx, 0], data[idx, 1], data[idx, 2]
            m = len(idx)
            ones = np.ones((m, 1), dtype=model.dtype)
            zeros_t = np.zeros((m, 1), dtype=model.dtype)

            # --- discriminator update (generator output detached)
            fused = model.fuse(z_prev, z_t)
            z_hat, _ = model._g_forward(fused)
            opt_d.zero_grad()
            p_real, cache_r = model._d_forward(z_t + z_next)
            p_fake, cache_f = model._d_forward(z_t + z_hat)
            loss_r, grad_r = loss_bce(p_real, ones)
            loss_f, grad_f = loss_bce(p_fake, zeros_t)
            model._d_backward(grad_r, cache_r)
            model._d_backward(grad_f, cache_f)
            opt_d.step()
            d_loss = loss_r + loss_f
            d_acc = float((np.concatenate([p_real > 0.5, p_fake <= 0.5])
                           ).mean())

            # --- generator update (non-saturating + auxiliary MSE)
            opt_g.zero_grad()
            fused = model.fuse(z_prev, z_t)
            z_hat, cache_g = model._g_forward(fused)
            p_fake, cache_f = model._d_forward(z_t + z_hat)
            g_adv, grad_adv = loss_bce(p_fake, ones)
            # Aux term: squared error summed per sample, batch-averaged,
            # matching the scale of the per-sample adversarial loss.
            diff = z_hat - z_next
            mse = float((diff * diff).mean())
            grad_mse = 2.0 * diff / m
            dz_hat = model._d_backward(grad_adv, cache_f, accumulate=False)
            dz_hat = dz_hat + lam * grad_mse
            dfused = model._g_backward(dz_hat, cache_g)
            model._fuse_backward(dfused, z_prev, z_t)
            opt_g.step()

            step += 1
            if d_acc == 1.0:
                d_pinned_streak += 1
                if d_pinned_streak == COLLAPSE_STREAK and not trace.collapse_warned:
                    log.warning(
                        "discriminator accuracy pinned at 1.0 for %d "
                        "consecutive steps (step %d): likely generator "
                        "collapse", COLLAPSE_STREAK, step)
                    trace.collapse_warned = True
                    trace.collapse_step = step
            else:
                d_pinned_streak = 0
            trace.steps.append({"step": step, "d_loss": float(d_loss),
                                "g_adv": float(g_adv), "mse": float(mse),
                                "d_acc": d_acc})
            sums += (d_loss, g_adv, mse, d_acc)
            batches += 1
        mean = sums / max(batches, 1)
        trace.epochs.append({"epoch": epoch, "d_loss": float(mean[0]),
                             "g_adv": float(mean[1]), "mse": float(mean[2]),
                             "d_acc": float(mean[3])})
        log.info("gan epoch %d: d_loss %.4f g_adv %.4f mse %.4f d_acc %.3f",
                 epoch, *mean)
    if out_path is not None:
        model.save(out_path, step=step, rng_state=generator_state(rng))
    return trace


# ---------------------------------------------------------------- triples

def build_triples(records, aligned, corpus_root, spec_vae, text_cvae,
                  tau: float = 1.0, seed: int = 0) -> np.ndarray:
    """Encode consecutive clip pairs and their lines into latent triples.

    records: manifest ClipRecords; aligned: (clip_id, line text) pairs.
    Within each composition, clips sorted by offset form pairs (i-1, i);
    line i is encoded conditioned on clip i-1's latent, matching how lines
    are generated at inference time. Each clip's latent is sampled once with
    z = mu + tau * (eps * sigma) and reused on both sides of a pair.
    """
    from ..corpus import load_spectrogram
    from .latents import LatentDistribution
    from .text_cvae import line_from_text

    line_by_clip = dict(aligned)
    root = Path(corpus_root)
    rng = new_generator(seed)
    by_comp: dict[str, list] = {}
    for rec in records:
        by_comp.setdefault(rec.composition_id, []).append(rec)

    triples = []
    for comp_id in sorted(by_comp):
        clips = sorted(by_comp[comp_id], key=lambda r: r.offset_s)
        z_clip = {}
        for rec in clips:
            spec = load_spectrogram(root / rec.spectrogram_path)
            dist = spec_vae.encode_spectrogram(spec)
            z_clip[rec.clip_id] = (
                dist.mean + tau
                * rng.standard_normal(dist.mean.shape).astype(dist.mean.dtype)
                * np.exp(dist.log_sigma))
        for prev, cur in zip(clips, clips[1:]):
            text = line_by_clip.get(cur.clip_id)
            if text is None:
                raise ValueError(
                    f"clip {cur.clip_id!r} has no aligned line")
            z_prev = z_clip[prev.clip_id]
            line = line_from_text(text, text_cvae.vocab)
            dist_t = text_cvae.encode_line(
                line, LatentCode(z=z_prev, origin="spec"))
            z_t = (dist_t.mean + tau
                   * rng.standard_normal(dist_t.mean.shape)
                   .astype(dist_t.mean.dtype)
                   * np.exp(dist_t.log_sigma))
            triples.append(np.stack([z_prev, z_t, z_clip[cur.clip_id]]))
    if not triples:
        raise ValueError("no consecutive clip pairs in the corpus")
    return np.stack(triples).astype(np.float32)


def save_triples(path, triples: np.ndarray) -> None:
    """Count header (u32 LE) + n records of three 128-float32 vectors."""
    arr = np.ascontiguousarray(triples, dtype="<f4")
    if arr.ndim != 3 or arr.shape[1] != 3 or arr.shape[2] != LATENT_DIM:
        raise ValueError(f"triples must be [n, 3, {LATENT_DIM}], got {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", arr.shape[0]))
        fh.write(arr.tobytes())


def load_triples(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise ValueError(f"{path}: truncated triples file")
    (count,) = struct.unpack_from("<I", raw)
    expected = 4 + count * 3 * LATENT_DIM * 4
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for {count} "
                         f"triples, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f4", offset=4).reshape(
        count, 3, LATENT_DIM).copy()
