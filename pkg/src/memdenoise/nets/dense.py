"""Single-layer dense denoiser with delta-rule training.

One crossbar layer maps a noisy plane of P pixels plus a constant-1 bias
input to a denoised plane: y = clamp(scale * W^T [x; 1]). Training is the
online delta rule (LMS), matching the analog update primitive: the weight
change is the outer product of the input with the per-pixel error,
DW[i, j] = eta * e[j] * x[i], with the error taken on the linear readout
before the clamp. The root mean squared error of each epoch is logged and
a runaway epoch aborts training.

Weights live in float during training; afterwards (or each epoch when
device_in_loop is set) they are rescaled by a power-of-two readout gain
into [-1, 1] and programmed onto differential pairs through the device
model. RGB inputs are handled per channel plane with the same weights.
"""

import io
import json

import numpy as np

from .. import crossbar
from ..device import DeviceModel
from ..noise import NoiseSpec, parse_spec
from .common import (TrainConfig, TrainingDivergence, corrupt_plane,
                     plane_samples, pow2_scale)

_MAGIC = b"MXDENSE1"


class DenseDenoiser:
    """A programmed (P+1) x P crossbar layer plus its readout gain."""

    def __init__(self, weights, scale, shape, tiled=None, train_noise="",
                 rmse_log=(), device=None, program_seed=0):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.scale = float(scale)
        self.shape = tuple(shape)
        p = self.shape[0] * self.shape[1]
        if self.weights.shape != (p + 1, p):
            raise ValueError("weights %r, expected %r"
                             % (self.weights.shape, (p + 1, p)))
        self.train_noise = train_noise
        self.rmse_log = list(rmse_log)
        self.device = device if device is not None else DeviceModel()
        self.program_seed = int(program_seed)
        self.weights.setflags(write=False)
        if tiled is None:
            tiled = crossbar.program(
                self.weights / self.scale, self.device,
                np.random.default_rng([self.program_seed, 0x70]))
        self.tiled = tiled

    @classmethod
    def identity(cls, h, w):
        """Pass-through net: diagonal 1, bias row 0, unit gain."""
        p = h * w
        weights = np.zeros((p + 1, p))
        weights[:p] = np.eye(p)
        return cls(weights, 1.0, (h, w))

    def reprogram(self, dev, seed=0):
        """Same float weights, freshly programmed through another device."""
        return DenseDenoiser(self.weights, self.scale, self.shape,
                             train_noise=self.train_noise,
                             rmse_log=self.rmse_log, device=dev,
                             program_seed=seed)

    def with_sparsity(self, dropout_frac, prune_frac, seed=0):
        """Masked copy: dropout on input rows, pruning on device pairs."""
        tiled = crossbar.apply_sparsity(
            self.tiled, dropout_frac, prune_frac,
            np.random.default_rng([seed, 0x5A]))
        net = DenseDenoiser.__new__(DenseDenoiser)
        net.weights = self.weights
        net.scale = self.scale
        net.shape = self.shape
        net.train_noise = self.train_noise
        net.rmse_log = list(self.rmse_log)
        net.device = self.device
        net.program_seed = self.program_seed
        net.tiled = tiled
        return net

    def forward_flat(self, flat):
        """Denoise a batch of flattened planes, (n, P) -> (n, P)."""
        flat = np.clip(np.asarray(flat, dtype=np.float64), 0.0, 1.0)
        x = np.hstack([flat, np.ones((flat.shape[0], 1))])
        y = crossbar.matmul(self.tiled, x) * self.scale
        return np.clip(y, 0.0, 1.0)

    def forward(self, img):
        """Denoise one image; channels are independent planes."""
        img = np.asarray(img, dtype=np.float64)
        h, w = self.shape
        if img.shape[:2] != (h, w):
            raise ValueError("image %r, net expects %r" % (img.shape, self.shape))
        if img.ndim == 2:
            return self.forward_flat(img.reshape(1, -1))[0].reshape(h, w)
        out = np.empty_like(img)
        for c in range(img.shape[2]):
            out[:, :, c] = self.forward_flat(
                img[:, :, c].reshape(1, -1))[0].reshape(h, w)
        return out

    def forward_stack(self, images):
        """Denoise a stack of images in one batched readout."""
        images = np.asarray(images, dtype=np.float64)
        flat, _ = plane_samples(images)
        out = self.forward_flat(flat)
        if images.ndim == 3:
            return out.reshape(images.shape)
        n, h, w, c = images.shape
        return out.reshape(n, c, h, w).transpose(0, 2, 3, 1)

    def to_bytes(self) -> bytes:
        header = {
            "kind": "dense",
            "shape": list(self.shape),
            "scale": self.scale,
            "train_noise": self.train_noise,
            "rmse_log": self.rmse_log,
            "levels": self.device.levels,
            "variation_sigma": self.device.variation_sigma,
            "program_seed": self.program_seed,
        }
        hdr = json.dumps(header, sort_keys=True).encode()
        return b"".join([
            _MAGIC, len(hdr).to_bytes(4, "little"), hdr,
            self.weights.tobytes(), crossbar.tiled_to_bytes(self.tiled),
        ])

    @classmethod
    def from_bytes(cls, blob: bytes, source: str = "<bytes>"):
        if blob[:8] != _MAGIC:
            raise ValueError("%s: not a dense denoiser checkpoint" % source)
        n = int.from_bytes(blob[8:12], "little")
        header = json.loads(blob[12:12 + n])
        h, w = header["shape"]
        p = h * w
        off = 12 + n
        weights = np.frombuffer(
            blob[off:off + 8 * (p + 1) * p], dtype="<f8").reshape(p + 1, p)
        off += 8 * (p + 1) * p
        tiled = crossbar.tiled_from_bytes(blob[off:], source)
        dev = DeviceModel(levels=header["levels"],
                          variation_sigma=header["variation_sigma"])
        return cls(weights.copy(), header["scale"], (h, w), tiled=tiled,
                   train_noise=header["train_noise"],
                   rmse_log=header["rmse_log"], device=dev,
                   program_seed=header["program_seed"])

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            return cls.from_bytes(f.read(), str(path))


def dense_train(cfg: TrainConfig, data):
    """Train a dense denoiser on clean images with on-the-fly corruption.

    Every epoch draws fresh noise per sample from substream
    [seed, epoch, sample], shuffles with the config seed, and applies
    delta-rule updates (mean over the batch). Epoch RMSE is logged;
    exceeding twice the first epoch's RMSE raises TrainingDivergence.
    """
    clean, shape = plane_samples(data.images)
    if cfg.limit is not None:
        clean = clean[:cfg.limit]
    n, p = clean.shape
    weights = np.zeros((p + 1, p))
    if cfg.init == "identity":
        weights[:p] = np.eye(p)
    rng = np.random.default_rng([cfg.seed, 0x5F])
    rmse_log = []
    spec = cfg.train_noise
    for epoch in range(1, cfg.epochs + 1):
        eta = cfg.learning_rate / np.sqrt(epoch)
        perm = rng.permutation(n)
        sq_sum = 0.0
        for start in range(0, n, cfg.batch):
            idx = perm[start:start + cfg.batch]
            noisy = np.stack([
                corrupt_plane(clean[i], shape, spec, [cfg.seed, epoch, int(i)])
                for i in idx])
            x = np.hstack([noisy, np.ones((len(idx), 1))])
            err = clean[idx] - x @ weights
            sq_sum += float(np.sum(err * err))
            if eta != 0.0:
                weights += (eta / len(idx)) * (x.T @ err)
        rmse = float(np.sqrt(sq_sum / (n * p)))
        rmse_log.append(rmse)
        if rmse > 2.0 * rmse_log[0]:
            raise TrainingDivergence(epoch, rmse, rmse_log[0], rmse_log)
        if cfg.device_in_loop and not cfg.device.ideal:
            s = pow2_scale(np.abs(weights).max())
            tiled = crossbar.program(
                weights / s, cfg.device,
                np.random.default_rng([cfg.seed, 0x71, epoch]))
            weights = s * tiled.effective_weights()
    scale = pow2_scale(np.abs(weights).max())
    return DenseDenoiser(weights, scale, shape,
                         train_noise=spec.text(), rmse_log=rmse_log,
                         device=cfg.device, program_seed=cfg.seed)
