"""Spectrogram VAE: conv encoder to a 128-dim Gaussian, deconv decoder back
to the input shape, trained with BCE reconstruction + KL.

Input spectrograms are zero-padded (or center-cropped) to a square whose
side survives the full conv chain; the default 94 lets exactly four
kernel-6/stride-2 layers fit (94 -> 45 -> 20 -> 8 -> 2). The constructor
validates the whole chain and rejects geometries where any layer's input is
smaller than the kernel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..corpus.mel import MelSpectrogram
from ..nn import (Adam, Checkpoint, Parameter, ShapeError, conv2d_backward,
                  conv2d_forward, conv2d_output_dim, conv_transpose2d_backward,
                  conv_transpose2d_forward, dense_backward, dense_forward,
                  dropout_backward, dropout_forward, generator_state,
                  glorot_uniform, load_checkpoint, loss_bce, loss_kl_gaussian,
                  new_generator, relu_backward, relu_forward, save_checkpoint,
                  sigmoid_backward, sigmoid_forward, zeros)
from .latents import LatentCode, LatentDistribution, sample_latent

log = logging.getLogger(__name__)

CHECKPOINT_KIND = "spec-vae"


@dataclass(frozen=True)
class SpecVaeConfig:
    input_hw: int = 94
    latent_dim: int = 128
    channels: tuple = (16, 32, 64, 128)
    kernel: int = 6
    stride: int = 2
    dropout: float = 0.2

    def to_dict(self) -> dict:
        return {"input_hw": self.input_hw, "latent_dim": self.latent_dim,
                "channels": list(self.channels), "kernel": self.kernel,
                "stride": self.stride, "dropout": self.dropout}

    @staticmethod
    def from_dict(d: dict) -> "SpecVaeConfig":
        return SpecVaeConfig(
            input_hw=d["input_hw"], latent_dim=d["latent_dim"],
            channels=tuple(d["channels"]), kernel=d["kernel"],
            stride=d["stride"], dropout=d["dropout"])


@dataclass
class TrainTrace:
    steps: list = field(default_factory=list)    # per-step dicts
    epochs: list = field(default_factory=list)   # per-epoch mean dicts
    aborted: bool = False


def validate_chain(input_hw: int, n_layers: int, kernel: int,
                   stride: int) -> tuple[list[int], list[int]]:
    """Spatial sizes down the encoder and the output_padding each decoder
    layer needs to invert them. Raises if any layer's input < kernel or if
    no valid output_padding exists."""
    sizes = [input_hw]
    for i in range(n_layers):
        if sizes[-1] < kernel:
            raise ShapeError(
                f"conv layer {i}: input {sizes[-1]} smaller than kernel "
                f"{kernel} (chain so far {sizes}); reduce layers or enlarge "
                f"the input")
        sizes.append(conv2d_output_dim(sizes[-1], kernel, stride))
    out_pads = []
    for i in range(n_layers):     # decoder layer i maps sizes[-1-i] up
        src, dst = sizes[n_layers - i], sizes[n_layers - i - 1]
        op = dst - ((src - 1) * stride + kernel)
        if not 0 <= op < stride:
            raise ShapeError(
                f"decoder layer {i}: cannot reach {dst} from {src} with "
                f"kernel {kernel} stride {stride} (needs output_padding {op})")
        out_pads.append(op)
    return sizes, out_pads


class SpecVae:
    def __init__(self, config: SpecVaeConfig | None = None, seed: int = 0,
                 dtype=np.float32):
        self.config = config or SpecVaeConfig()
        self.dtype = dtype
        cfg = self.config
        self.sizes, self.out_pads = validate_chain(
            cfg.input_hw, len(cfg.channels), cfg.kernel, cfg.stride)
        rng = new_generator(seed)
        k = cfg.kernel
        self.params: dict[str, Parameter] = {}

        def add(name, value):
            p = Parameter(name, value.astype(dtype))
            self.params[name] = p
            return p

        chans = (1,) + tuple(cfg.channels)
        for i in range(len(cfg.channels)):
            cin, cout = chans[i], chans[i + 1]
            add(f"enc{i}.w", glorot_uniform(rng, (cout, cin, k, k),
                                            cin * k * k, cout * k * k))
            add(f"enc{i}.b", zeros(cout))
        self.flat_dim = cfg.channels[-1] * self.sizes[-1] ** 2
        # Zero-initialized heads: the untrained posterior is exactly the
        # prior (mu = 0, log_sigma = 0), so KL starts at 0.
        add("mu.w", zeros((self.flat_dim, cfg.latent_dim)))
        add("mu.b", zeros(cfg.latent_dim))
        add("logsigma.w", zeros((self.flat_dim, cfg.latent_dim)))
        add("logsigma.b", zeros(cfg.latent_dim))
        add("dec_dense.w", glorot_uniform(rng, (cfg.latent_dim, self.flat_dim),
                                          cfg.latent_dim, self.flat_dim))
        add("dec_dense.b", zeros(self.flat_dim))
        rev = tuple(reversed(chans))  # e.g. (128, 64, 32, 16, 1)
        for i in range(len(cfg.channels)):
            cin, cout = rev[i], rev[i + 1]
            add(f"dec{i}.w", glorot_uniform(rng, (cin, cout, k, k),
                                            cin * k * k, cout * k * k))
            add(f"dec{i}.b", zeros(cout))

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    # ------------------------------------------------------------ shaping

    def fit_values(self, values: np.ndarray) -> np.ndarray:
        """Pad (zeros, centered) or crop a [n_mels, n_frames] array to the
        square model input."""
        hw = self.config.input_hw
        out = np.zeros((hw, hw), dtype=self.dtype)
        h, w = values.shape
        if h > hw:
            top = (h - hw) // 2
            values = values[top:top + hw]
            h = hw
        if w > hw:
            left = (w - hw) // 2
            values = values[:, left:left + hw]
            w = hw
        top, left = (hw - h) // 2, (hw - w) // 2
        out[top:top + h, left:left + w] = values
        return out

    def fit_batch(self, batch) -> np.ndarray:
        arr = np.stack([self.fit_values(np.asarray(v)) for v in batch])
        return arr[:, None, :, :]  # [N, 1, hw, hw]

    # ------------------------------------------------------------ forward

    def _encode_forward(self, x, train: bool, rng=None):
        cfg = self.config
        h = x
        caches = []
        for i in range(len(cfg.channels)):
            out, c_conv = conv2d_forward(h, self.params[f"enc{i}.w"].value,
                                         self.params[f"enc{i}.b"].value,
                                         cfg.stride)
            act, c_relu = relu_forward(out)
            if train and cfg.dropout > 0.0:
                act, mask = dropout_forward(act, cfg.dropout, rng)
            else:
                mask = None
            caches.append((c_conv, c_relu, mask))
            h = act
        flat = h.reshape(h.shape[0], -1)
        mu, c_mu = dense_forward(flat, self.params["mu.w"].value,
                                 self.params["mu.b"].value)
        ls, c_ls = dense_forward(flat, self.params["logsigma.w"].value,
                                 self.params["logsigma.b"].value)
        return mu, ls, (caches, c_mu, c_ls, h.shape)

    def _encode_backward(self, dmu, dls, cache):
        caches, c_mu, c_ls, conv_shape = cache
        cfg = self.config
        dflat_mu, dw_mu, db_mu = dense_backward(dmu, c_mu)
        dflat_ls, dw_ls, db_ls = dense_backward(dls, c_ls)
        self.params["mu.w"].accumulate(dw_mu)
        self.params["mu.b"].accumulate(db_mu)
        self.params["logsigma.w"].accumulate(dw_ls)
        self.params["logsigma.b"].accumulate(db_ls)
        dh = (dflat_mu + dflat_ls).reshape(conv_shape)
        for i in range(len(cfg.channels) - 1, -1, -1):
            c_conv, c_relu, mask = caches[i]
            dh = dropout_backward(dh, mask)
            dh = relu_backward(dh, c_relu)
            dh, dw, db = conv2d_backward(dh, c_conv)
            self.params[f"enc{i}.w"].accumulate(dw)
            self.params[f"enc{i}.b"].accumulate(db)
        return dh

    def _decode_forward(self, z):
        cfg = self.config
        d0, c_dense = dense_forward(z, self.params["dec_dense.w"].value,
                                    self.params["dec_dense.b"].value)
        a0, c_relu0 = relu_forward(d0)
        side = self.sizes[-1]
        h = a0.reshape(z.shape[0], cfg.channels[-1], side, side)
        caches = []
        n_layers = len(cfg.channels)
        for i in range(n_layers):
            out, c_deconv = conv_transpose2d_forward(
                h, self.params[f"dec{i}.w"].value,
                self.params[f"dec{i}.b"].value, cfg.stride, self.out_pads[i])
            if i == n_layers - 1:
                h, c_act = sigmoid_forward(out)
            else:
                h, c_act = relu_forward(out)
            caches.append((c_deconv, c_act))
        return h, (c_dense, c_relu0, caches)

    def _decode_backward(self, dout, cache):
        c_dense, c_relu0, caches = cache
        cfg = self.config
        n_layers = len(cfg.channels)
        dh = dout
        for i in range(n_layers - 1, -1, -1):
            c_deconv, c_act = caches[i]
            if i == n_layers - 1:
                dh = sigmoid_backward(dh, c_act)
            else:
                dh = relu_backward(dh, c_act)
            dh, dw, db = conv_transpose2d_backward(dh, c_deconv)
            self.params[f"dec{i}.w"].accumulate(dw)
            self.params[f"dec{i}.b"].accumulate(db)
        da0 = dh.reshape(dh.shape[0], -1)
        dd0 = relu_backward(da0, c_relu0)
        dz, dw, db = dense_backward(dd0, c_dense)
        self.params["dec_dense.w"].accumulate(dw)
        self.params["dec_dense.b"].accumulate(db)
        return dz

    # ------------------------------------------------------------ public API

    def encode(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Deterministic batched encode: [N, 1, hw, hw] -> (mu, log_sigma)."""
        mu, ls, _ = self._encode_forward(x.astype(self.dtype), train=False)
        return mu, ls

    def encode_spectrogram(self, spec) -> LatentDistribution:
        values = spec.values if isinstance(spec, MelSpectrogram) else np.asarray(spec)
        mu, ls = self.encode(self.fit_batch([values]))
        return LatentDistribution(mean=mu[0], log_sigma=ls[0])

    def sample(self, dist: LatentDistribution, tau: float,
               rng: np.random.Generator) -> LatentCode:
        return sample_latent(dist, tau, rng, origin="spec")

    def decode(self, z: np.ndarray) -> np.ndarray:
        """[N, latent_dim] -> [N, 1, hw, hw], cells in (0, 1)."""
        if z.ndim == 1:
            z = z[None, :]
        out, _ = self._decode_forward(z.astype(self.dtype))
        return out

    def train_step(self, x, tau: float, rng) -> tuple[float, float, float]:
        """One forward/backward on a batch; gradients land in .grad."""
        mu, ls, enc_cache = self._encode_forward(x, train=True, rng=rng)
        kl, dmu_kl, dls_kl = loss_kl_gaussian(mu, ls)
        sigma = np.exp(ls)
        eps = rng.standard_normal(mu.shape).astype(self.dtype)
        z = mu + tau * eps * sigma
        pred, dec_cache = self._decode_forward(z)
        bce, dpred = loss_bce(pred, x)
        dz = self._decode_backward(dpred, dec_cache)
        dmu = dz + dmu_kl.astype(self.dtype)
        dls = dz * (tau * eps * sigma) + dls_kl.astype(self.dtype)
        self._encode_backward(dmu, dls, enc_cache)
        bce_f, kl_f = float(bce), float(kl)
        return bce_f + kl_f, bce_f, kl_f  # total is exactly the sum

    # ------------------------------------------------------------ persistence

    def state_tensors(self) -> dict[str, np.ndarray]:
        return {name: p.value for name, p in self.params.items()}

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if name not in tensors:
                raise ValueError(f"checkpoint missing tensor {name}")
            if tensors[name].shape != p.value.shape:
                raise ValueError(
                    f"tensor {name}: checkpoint {tensors[name].shape} vs "
                    f"model {p.value.shape}")
            p.value[...] = tensors[name].astype(self.dtype)

    def save(self, path, step: int = 0, rng_state: dict | None = None) -> None:
        save_checkpoint(path, Checkpoint(
            kind=CHECKPOINT_KIND, tensors=self.state_tensors(), step=step,
            rng_state=rng_state, config=self.config.to_dict()))

    @staticmethod
    def load(path) -> "SpecVae":
        ckpt = load_checkpoint(path)
        if ckpt.kind != CHECKPOINT_KIND:
            raise ValueError(f"{path} holds a {ckpt.kind!r} checkpoint, "
                             f"expected {CHECKPOINT_KIND!r}")
        model = SpecVae(SpecVaeConfig.from_dict(ckpt.config))
        model.load_tensors(ckpt.tensors)
        return model


@dataclass
class SpecVaeTrainConfig:
    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-4
    tau: float = 1.0
    seed: int = 0


def train_spec_vae(data, model: SpecVae, cfg: SpecVaeTrainConfig,
                   out_path=None) -> TrainTrace:
    """Train on raw spectrogram arrays ([N, n_mels, n_frames] or a list).

    Per-epoch trace of (bce, kl, total); a non-finite loss aborts the run,
    restores the last epoch-end snapshot, and still writes the checkpoint.
    """
    x_all = model.fit_batch(list(data))
    n = x_all.shape[0]
    if n < 2 * cfg.batch_size:
        raise ValueError(
            f"{n} samples is fewer than two batches of {cfg.batch_size}")
    rng = new_generator(cfg.seed)
    opt = Adam(model.parameters(), lr=cfg.lr)
    trace = TrainTrace()
    snapshot = {k: p.value.copy() for k, p in model.params.items()}
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        sums = np.zeros(3)
        batches = 0
        for start in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            batch = x_all[order[start:start + cfg.batch_size]]
            opt.zero_grad()
            total, bce, kl = model.train_step(batch, cfg.tau, rng)
            if not np.isfinite(total):
                log.error("non-finite loss at step %d; restoring last good "
                          "epoch snapshot", step)
                model.load_tensors(snapshot)
                trace.aborted = True
                if out_path is not None:
                    model.save(out_path, step=step, rng_state=generator_state(rng))
                return trace
            opt.step()
            step += 1
            trace.steps.append({"step": step, "bce": bce, "kl": kl,
                                "total": total})
            sums += (bce, kl, total)
            batches += 1
        snapshot = {k: p.value.copy() for k, p in model.params.items()}
        mean = sums / max(batches, 1)
        trace.epochs.append({"epoch": epoch, "bce": float(mean[0]),
                             "kl": float(mean[1]), "total": float(mean[2])})
        log.info("spec-vae epoch %d: bce %.2f kl %.2f total %.2f",
                 epoch, mean[0], mean[1], mean[2])
    if out_path is not None:
        model.save(out_path, step=step, rng_state=generator_state(rng))
    return trace
