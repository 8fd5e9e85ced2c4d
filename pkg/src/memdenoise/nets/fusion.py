"""Noise-blind denoising: a bank of per-noise nets merged by 3D convolution.

Each member is a trained single-layer denoiser for one corruption
setting.  An input of unknown corruption runs through every member, the
member outputs are stacked into planes, and a single trained
depth x k x k kernel collapses the stack back to one image.  Only that
kernel is trainable here; members stay frozen.
"""

from __future__ import annotations

import json

import numpy as np

from .. import crossbar
from ..device import DeviceModel
from ..noise import NoiseSpec, corrupt, parse_spec
from .common import TrainConfig, TrainingDivergence, plane_samples, pow2_scale
from .cnn import conv_same, unfold_stack
from .dense import DenseDenoiser

_MAGIC = b"MXFUSE1_"


class FusionDenoiser:
    """Frozen member bank plus one programmed fusion kernel."""

    def __init__(self, members, kernel, member_noises=None, tiled=None,
                 rmse_log=(), device=None, program_seed=0):
        self.members = tuple(members)
        if not self.members:
            raise ValueError("at least one member is required")
        shapes = {m.shape for m in self.members}
        if len(shapes) != 1:
            raise ValueError(f"members disagree on plane shape: {shapes}")
        self.shape = self.members[0].shape
        self.kernel = np.asarray(kernel, dtype=np.float64)
        if (self.kernel.ndim != 3
                or self.kernel.shape[0] != len(self.members)
                or self.kernel.shape[1] != self.kernel.shape[2]
                or self.kernel.shape[1] % 2 == 0):
            raise ValueError(
                f"kernel must be (members, k, k) with odd k, got {self.kernel.shape}")
        if member_noises is None:
            member_noises = tuple(m.train_noise for m in self.members)
        self.member_noises = tuple(member_noises)
        if len(self.member_noises) != len(self.members):
            raise ValueError("one noise label per member is required")
        self.rmse_log = list(rmse_log)
        self.device = device if device is not None else DeviceModel()
        self.program_seed = int(program_seed)
        self.kernel.setflags(write=False)
        self.scale = pow2_scale(np.abs(self.kernel).max())
        if tiled is None:
            tiled = crossbar.program(
                self.kernel.reshape(-1, 1) / self.scale, self.device,
                np.random.default_rng([self.program_seed, 0x70]))
        self.tiled = tiled

    @property
    def fusion_size(self) -> int:
        return self.kernel.shape[1]

    def member_planes(self, img):
        """Stack of member outputs for one plane, (members, h, w)."""
        return np.stack([m.forward(img) for m in self.members])

    def _fuse(self, planes):
        # Member outputs sit in [0, 1], so the fusion readout runs in a
        # single non-negative input phase.
        patches = unfold_stack(planes, self.fusion_size)
        y = crossbar.matmul(self.tiled, patches)[:, 0] * self.scale
        return np.clip(y.reshape(self.shape), 0.0, 1.0)

    def forward(self, img):
        """Denoise one image; channels are independent planes."""
        img = np.asarray(img, dtype=np.float64)
        if img.shape[:2] != self.shape:
            raise ValueError(f"image {img.shape}, members expect {self.shape}")
        if img.ndim == 2:
            return self._fuse(self.member_planes(img))
        out = np.empty_like(img)
        for c in range(img.shape[2]):
            out[:, :, c] = self._fuse(self.member_planes(img[:, :, c]))
        return out

    def forward_stack(self, images):
        """Denoise a stack with batched member readouts.

        The crossbar readout is row independent, so concatenating patch
        rows across planes changes nothing but throughput; outputs agree
        with per-image forward() to floating point rounding (batched
        matrix products may differ from single-row ones in the last ulp).
        """
        images = np.asarray(images, dtype=np.float64)
        flat, _ = plane_samples(images)
        member_out = np.stack(
            [m.forward_flat(flat) for m in self.members], axis=1)
        h, w = self.shape
        k, m = self.fusion_size, len(self.members)
        out = np.empty((flat.shape[0], h * w))
        # Chunked so the patch matrix stays modest for large stacks.
        step = max(1, 131072 // (h * w) + 1)
        for lo in range(0, flat.shape[0], step):
            planes = member_out[lo:lo + step]
            patches = np.concatenate(
                [unfold_stack(planes[i].reshape(m, h, w), k)
                 for i in range(planes.shape[0])])
            y = crossbar.matmul(self.tiled, patches)[:, 0] * self.scale
            out[lo:lo + step] = np.clip(y, 0.0, 1.0).reshape(-1, h * w)
        if images.ndim == 4:
            n, h, w, c = images.shape
            return out.reshape(n, c, h, w).transpose(0, 2, 3, 1)
        return out.reshape(images.shape)

    def forward_direct(self, img):
        """Float reference path: explicit sliding-window fusion."""
        planes = self.member_planes(np.asarray(img, dtype=np.float64))
        y = sum(conv_same(planes[m], self.kernel[m])
                for m in range(len(self.members)))
        return np.clip(y, 0.0, 1.0)

    def reprogram(self, dev, seed=0):
        """Same members and float kernel, kernel freshly programmed."""
        return FusionDenoiser(self.members, self.kernel,
                              member_noises=self.member_noises,
                              rmse_log=self.rmse_log, device=dev,
                              program_seed=seed)

    def to_bytes(self) -> bytes:
        header = {
            "kind": "fusion",
            "shape": list(self.shape),
            "kernel_shape": list(self.kernel.shape),
            "member_noises": list(self.member_noises),
            "rmse_log": self.rmse_log,
            "levels": self.device.levels,
            "variation_sigma": self.device.variation_sigma,
            "program_seed": self.program_seed,
        }
        hdr = json.dumps(header, sort_keys=True).encode()
        parts = [_MAGIC, len(hdr).to_bytes(4, "little"), hdr,
                 self.kernel.tobytes()]
        tiled_blob = crossbar.tiled_to_bytes(self.tiled)
        parts.append(len(tiled_blob).to_bytes(8, "little"))
        parts.append(tiled_blob)
        for member in self.members:
            blob = member.to_bytes()
            parts.append(len(blob).to_bytes(8, "little"))
            parts.append(blob)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, blob: bytes, source: str = "<bytes>"):
        if blob[:8] != _MAGIC:
            raise ValueError(f"{source}: not a fusion denoiser checkpoint")
        n = int.from_bytes(blob[8:12], "little")
        header = json.loads(blob[12:12 + n])
        off = 12 + n
        kshape = tuple(header["kernel_shape"])
        count = int(np.prod(kshape))
        kernel = np.frombuffer(blob[off:off + 8 * count], dtype="<f8").reshape(kshape)
        off += 8 * count
        size = int.from_bytes(blob[off:off + 8], "little")
        off += 8
        tiled = crossbar.tiled_from_bytes(blob[off:off + size], source)
        off += size
        members = []
        for _ in range(kshape[0]):
            size = int.from_bytes(blob[off:off + 8], "little")
            off += 8
            members.append(DenseDenoiser.from_bytes(blob[off:off + size], source))
            off += size
        dev = DeviceModel(levels=header["levels"],
                          variation_sigma=header["variation_sigma"])
        return cls(members, kernel.copy(),
                   member_noises=header["member_noises"], tiled=tiled,
                   rmse_log=header["rmse_log"], device=dev,
                   program_seed=header["program_seed"])

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            return cls.from_bytes(f.read(), str(path))


def fusion_init(member_count: int, size: int = 3, kind: str = "zero"):
    """Starting kernel: all zeros, or the member average pass-through."""
    kernel = np.zeros((member_count, size, size))
    if kind == "identity":
        kernel[:, size // 2, size // 2] = 1.0 / member_count
    return kernel


def fusion_train(cfg: TrainConfig, members, data, size: int = 3, noises=None):
    """Train the fusion kernel over frozen members by the delta rule.

    cfg.clean_fraction of the samples pass through the members
    uncorrupted; the rest draw one of ``noises`` uniformly (default: the
    members' own recorded corruption settings).  The error is taken on
    the linear fusion output against the clean plane, and the kernel
    update is the pixel-mean of error times patch, which keeps the
    learning-rate scale of the single-layer rule.
    """
    members = tuple(members)
    if noises is not None:
        specs = [s if isinstance(s, NoiseSpec) else parse_spec(s) for s in noises]
    elif cfg.clean_fraction < 1.0:
        specs = [parse_spec(m.train_noise) for m in members]
    else:
        specs = []
    clean, shape = plane_samples(data.images)
    if cfg.limit is not None:
        clean = clean[:cfg.limit]
    n, p = clean.shape
    kflat = fusion_init(len(members), size, cfg.init).reshape(-1)
    rng = np.random.default_rng([cfg.seed, 0x5F])
    rmse_log = []
    for epoch in range(1, cfg.epochs + 1):
        eta = cfg.learning_rate / np.sqrt(epoch)
        perm = rng.permutation(n)
        sq_sum = 0.0
        for start in range(0, n, cfg.batch):
            idx = perm[start:start + cfg.batch]
            inputs = np.empty((len(idx), p))
            for row, i in enumerate(idx):
                sample_rng = np.random.default_rng([cfg.seed, epoch, int(i)])
                if sample_rng.random() < cfg.clean_fraction:
                    inputs[row] = clean[i]
                else:
                    spec = specs[sample_rng.integers(len(specs))]
                    inputs[row] = np.clip(
                        corrupt(clean[i].reshape(shape), spec, sample_rng),
                        0.0, 1.0).reshape(-1)
            # One batched readout per member; the kernel update stays
            # per sample since patches differ image by image.
            planes_all = np.stack([m.forward_flat(inputs) for m in members], axis=1)
            grad = np.zeros_like(kflat)
            for row, i in enumerate(idx):
                planes = planes_all[row].reshape(len(members), *shape)
                patches = unfold_stack(planes, size)
                err = clean[i] - patches @ kflat
                sq_sum += float(err @ err)
                grad += patches.T @ err / p
            if eta != 0.0:
                kflat += (eta / len(idx)) * grad
        rmse = float(np.sqrt(sq_sum / (n * p)))
        rmse_log.append(rmse)
        if rmse > 2.0 * rmse_log[0]:
            raise TrainingDivergence(epoch, rmse, rmse_log[0], rmse_log)
        if cfg.device_in_loop and not cfg.device.ideal:
            s = pow2_scale(np.abs(kflat).max())
            tiled = crossbar.program(
                kflat.reshape(-1, 1) / s, cfg.device,
                np.random.default_rng([cfg.seed, 0x71, epoch]))
            kflat = (s * tiled.effective_weights()).reshape(-1)
    kernel = kflat.reshape(len(members), size, size)
    return FusionDenoiser(members, kernel, rmse_log=rmse_log,
                          device=cfg.device, program_seed=cfg.seed)
