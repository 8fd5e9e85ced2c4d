"""Convolutional denoiser: conv, pool, 3D conv, conv, upsample.

The layer chain is conv1 (K kernels, k x k, zero-pad same) -> ReLU ->
2x2 max pool -> one 3D kernel collapsing the K feature maps into a
single plane -> ReLU -> conv2 -> 2x nearest upsample -> clamp. All
layers are bias free. Inference executes every convolution as a crossbar
readout on unfolded (im2col) patch matrices; kernels are rescaled by a
per-layer power-of-two gain so conductances stay inside [-1, 1]. Every
activation entering a crossbar is non-negative here (input pixels, ReLU
outputs), so single-phase readout suffices.

Training is plain SGD on the mean squared error of the pre-clamp output,
with gradients derived by hand: the pool routes its gradient to the
argmax position, the upsample sums over its 2x2 fan-out, and kernel
gradients accumulate over all patch positions. A central finite
difference oracle validates them in the test suite.
"""

import json

import numpy as np

from .. import crossbar
from ..device import DeviceModel
from .common import (TrainConfig, TrainingDivergence, corrupt_plane,
                     plane_samples, pow2_scale)

_MAGIC = b"MXCNN1__"


def conv_same(x, kern):
    """2-D correlation with zero padding keeping the spatial shape.

    x: (..., h, w) batch of planes; kern: (k, k). Vectorized over leading
    axes via an unfolded patch matrix.
    """
    k = kern.shape[0]
    pad = k // 2
    lead = x.shape[:-2]
    h, w = x.shape[-2:]
    xp = np.pad(x, [(0, 0)] * len(lead) + [(pad, pad), (pad, pad)])
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(-2, -1))
    return win.reshape(lead + (h, w, k * k)) @ kern.reshape(k * k)


def unfold(x, k=3):
    """im2col: (h, w) -> (h*w, k*k) zero-padded same-size patch matrix."""
    pad = k // 2
    xp = np.pad(x, pad)
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k))
    return win.reshape(x.shape[0] * x.shape[1], k * k)


def unfold_stack(x, k=3):
    """im2col over channels: (c, h, w) -> (h*w, c*k*k), channel-major."""
    c, h, w = x.shape
    pad = k // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    return win.transpose(1, 2, 0, 3, 4).reshape(h * w, c * k * k)


def _maxpool(a):
    # (c, h, w) -> pooled (c, h/2, w/2) plus flat argmax in each 2x2 cell
    c, h, w = a.shape
    cells = a.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4)
    cells = cells.reshape(c, h // 2, w // 2, 4)
    idx = np.argmax(cells, axis=3)
    out = np.take_along_axis(cells, idx[..., None], axis=3)[..., 0]
    return out, idx


def _maxpool_back(g, idx, shape):
    c, h, w = shape
    cells = np.zeros((c, h // 2, w // 2, 4))
    np.put_along_axis(cells, idx[..., None], g[..., None], axis=3)
    return cells.reshape(c, h // 2, w // 2, 2, 2).transpose(
        0, 1, 3, 2, 4).reshape(c, h, w)


def _upsample(y):
    return np.repeat(np.repeat(y, 2, axis=-2), 2, axis=-1)


def _upsample_back(g):
    h, w = g.shape
    return g.reshape(h // 2, 2, w // 2, 2).sum(axis=(1, 3))


class CnnDenoiser:
    """Trained kernels plus their crossbar-programmed unfoldings."""

    def __init__(self, k1, k3, k2, train_noise="", rmse_log=(),
                 device=None, program_seed=0):
        self.k1 = np.asarray(k1, dtype=np.float64)  # (K, k, k)
        self.k3 = np.asarray(k3, dtype=np.float64)  # (K, k, k)
        self.k2 = np.asarray(k2, dtype=np.float64)  # (k, k)
        self.kernels = self.k1.shape[0]
        self.ksize = self.k1.shape[1]
        self.train_noise = train_noise
        self.rmse_log = list(rmse_log)
        self.device = device if device is not None else DeviceModel()
        self.program_seed = int(program_seed)
        self._program()

    def _program(self):
        kk = self.ksize * self.ksize
        rng = np.random.default_rng([self.program_seed, 0x70])
        self.s1 = pow2_scale(np.abs(self.k1).max())
        m1 = (self.k1 / self.s1).reshape(self.kernels, kk).T  # (9, K)
        self.m1 = crossbar.program(m1, self.device, rng)
        self.s3 = pow2_scale(np.abs(self.k3).max())
        self.m3 = crossbar.program(
            (self.k3 / self.s3).reshape(self.kernels * kk, 1), self.device, rng)
        self.s2 = pow2_scale(np.abs(self.k2).max())
        self.m2 = crossbar.program(
            (self.k2 / self.s2).reshape(kk, 1), self.device, rng)

    @property
    def device_pairs(self):
        """Trainable device pairs across all kernel crossbars."""
        return (self.m1.devices_per_polarity + self.m3.devices_per_polarity
                + self.m2.devices_per_polarity)

    def _forward_linear(self, plane):
        # crossbar route: every convolution is a patch-matrix readout
        h, w = plane.shape
        x = np.clip(plane, 0.0, 1.0)
        a1 = crossbar.matmul(self.m1, unfold(x, self.ksize)) * self.s1
        a1 = np.maximum(a1, 0.0).T.reshape(self.kernels, h, w)
        p, _ = _maxpool(a1)
        y3 = crossbar.matmul(self.m3, unfold_stack(p, self.ksize)) * self.s3
        a3 = np.maximum(y3[:, 0], 0.0).reshape(h // 2, w // 2)
        y2 = crossbar.matmul(self.m2, unfold(a3, self.ksize)) * self.s2
        return _upsample(y2[:, 0].reshape(h // 2, w // 2))

    def forward(self, img):
        """Denoise one image (shape preserving; odd sizes reflect-padded)."""
        img = np.asarray(img, dtype=np.float64)
        if img.ndim == 3:
            out = np.empty_like(img)
            for c in range(img.shape[2]):
                out[:, :, c] = self.forward(img[:, :, c])
            return out
        h, w = img.shape
        ph, pw = h % 2, w % 2
        if ph or pw:
            img = np.pad(img, ((0, ph), (0, pw)), mode="reflect")
        y = self._forward_linear(img)
        return np.clip(y[:h, :w], 0.0, 1.0)

    def forward_stack(self, images):
        out = np.empty_like(np.asarray(images, dtype=np.float64))
        for i in range(len(images)):
            out[i] = self.forward(images[i])
        return out

    def forward_direct(self, img):
        """Reference route: direct sliding-window convolutions, no crossbar."""
        x = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
        out, _ = _float_forward(x, self.k1, self.k3, self.k2)
        return np.clip(out, 0.0, 1.0)

    def save(self, path):
        header = {
            "kind": "cnn", "kernels": self.kernels, "ksize": self.ksize,
            "train_noise": self.train_noise, "rmse_log": self.rmse_log,
            "levels": self.device.levels,
            "variation_sigma": self.device.variation_sigma,
            "program_seed": self.program_seed,
        }
        hdr = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as f:
            f.write(_MAGIC)
            f.write(len(hdr).to_bytes(4, "little"))
            f.write(hdr)
            f.write(self.k1.tobytes())
            f.write(self.k3.tobytes())
            f.write(self.k2.tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            blob = f.read()
        if blob[:8] != _MAGIC:
            raise ValueError("%s: not a cnn checkpoint" % path)
        n = int.from_bytes(blob[8:12], "little")
        header = json.loads(blob[12:12 + n])
        kk, ks = header["kernels"], header["ksize"]
        off = 12 + n
        sz1 = 8 * kk * ks * ks
        k1 = np.frombuffer(blob[off:off + sz1], dtype="<f8").reshape(kk, ks, ks)
        off += sz1
        k3 = np.frombuffer(blob[off:off + sz1], dtype="<f8").reshape(kk, ks, ks)
        off += sz1
        k2 = np.frombuffer(blob[off:off + 8 * ks * ks],
                           dtype="<f8").reshape(ks, ks)
        dev = DeviceModel(levels=header["levels"],
                          variation_sigma=header["variation_sigma"])
        return cls(k1.copy(), k3.copy(), k2.copy(),
                   train_noise=header["train_noise"],
                   rmse_log=header["rmse_log"], device=dev,
                   program_seed=header["program_seed"])


def _float_forward(x, k1, k3, k2):
    """Float forward pass returning the pre-clamp output and a cache."""
    kn = k1.shape[0]
    y1 = np.stack([conv_same(x, k1[k]) for k in range(kn)])
    a1 = np.maximum(y1, 0.0)
    p, idx = _maxpool(a1)
    y3 = np.zeros(p.shape[1:])
    for k in range(kn):
        y3 += conv_same(p[k], k3[k])
    a3 = np.maximum(y3, 0.0)
    y2 = conv_same(a3, k2)
    out = _upsample(y2)
    return out, (x, y1, a1, p, idx, y3, a3, y2)


def _float_backward(g_out, cache, k1, k3, k2):
    """Gradients of the summed loss wrt all three kernel tensors."""
    x, y1, a1, p, idx, y3, a3, y2 = cache
    kn = k1.shape[0]
    ks = k2.shape[0]
    g_y2 = _upsample_back(g_out)
    g_k2 = (unfold(a3, ks).T @ g_y2.reshape(-1)).reshape(ks, ks)
    g_a3 = conv_same(g_y2, k2[::-1, ::-1])
    g_y3 = g_a3 * (y3 > 0)
    g_k3 = np.empty_like(k3)
    g_p = np.empty_like(p)
    for k in range(kn):
        g_k3[k] = (unfold(p[k], ks).T @ g_y3.reshape(-1)).reshape(ks, ks)
        g_p[k] = conv_same(g_y3, k3[k][::-1, ::-1])
    g_a1 = _maxpool_back(g_p, idx, a1.shape)
    g_y1 = g_a1 * (y1 > 0)
    g_k1 = np.empty_like(k1)
    patches = unfold(x, ks)
    for k in range(kn):
        g_k1[k] = (patches.T @ g_y1[k].reshape(-1)).reshape(ks, ks)
    return g_k1, g_k3, g_k2


def cnn_loss_and_grads(x, target, k1, k3, k2):
    """Mean squared pre-clamp error and its kernel gradients, one sample."""
    out, cache = _float_forward(x, k1, k3, k2)
    err = out - target
    loss = float(np.mean(err * err))
    g_out = 2.0 * err / err.size
    return loss, _float_backward(g_out, cache, k1, k3, k2)


def cnn_train(cfg: TrainConfig, data, kernels=8, ksize=3):
    """SGD training of the convolutional denoiser.

    Kernel init is scaled Gaussian (seeded); updates average gradients
    over the batch. Divergence aborts as in dense training.
    """
    clean, shape = plane_samples(data.images)
    if cfg.limit is not None:
        clean = clean[:cfg.limit]
    n = clean.shape[0]
    rng = np.random.default_rng([cfg.seed, 0x31])
    # The 3D stage squeezes through one ReLU plane; a zero-mean start
    # leaves it dead, so k3 opens as a positive averaging kernel and k2
    # as a noisy center tap while k1 stays free to specialize.
    k1 = rng.normal(0.0, 0.3, size=(kernels, ksize, ksize))
    k3 = (1.0 / (kernels * ksize * ksize)
          + rng.normal(0.0, 0.02, size=(kernels, ksize, ksize)))
    k2 = rng.normal(0.0, 0.02, size=(ksize, ksize))
    k2[ksize // 2, ksize // 2] += 1.0
    shuffle_rng = np.random.default_rng([cfg.seed, 0x5F])
    rmse_log = []
    for epoch in range(1, cfg.epochs + 1):
        eta = cfg.learning_rate / np.sqrt(epoch)
        perm = shuffle_rng.permutation(n)
        sq_sum = 0.0
        count = 0
        for start in range(0, n, cfg.batch):
            idx = perm[start:start + cfg.batch]
            g1 = np.zeros_like(k1)
            g3 = np.zeros_like(k3)
            g2 = np.zeros_like(k2)
            for i in idx:
                noisy = corrupt_plane(
                    clean[i], shape, cfg.train_noise,
                    [cfg.seed, epoch, int(i)]).reshape(shape)
                loss, (d1, d3, d2) = cnn_loss_and_grads(
                    noisy, clean[i].reshape(shape), k1, k3, k2)
                sq_sum += loss
                count += 1
                g1 += d1
                g3 += d3
                g2 += d2
            if eta != 0.0:
                k1 -= (eta / len(idx)) * g1
                k3 -= (eta / len(idx)) * g3
                k2 -= (eta / len(idx)) * g2
        rmse = float(np.sqrt(sq_sum / count))
        rmse_log.append(rmse)
        if rmse > 2.0 * rmse_log[0]:
            raise TrainingDivergence(epoch, rmse, rmse_log[0], rmse_log)
    return CnnDenoiser(k1, k3, k2, train_noise=cfg.train_noise.text(),
                       rmse_log=rmse_log, device=cfg.device,
                       program_seed=cfg.seed)
