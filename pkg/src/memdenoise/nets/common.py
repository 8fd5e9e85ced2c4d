"""Shared training plumbing for the denoising networks."""

from dataclasses import dataclass, field

import numpy as np

from ..device import DeviceModel
from ..noise import NoiseSpec, corrupt


class TrainingDivergence(RuntimeError):
    """Raised when the epoch loss runs away from its starting value."""

    def __init__(self, epoch, rmse, initial_rmse, rmse_log):
        self.epoch = epoch
        self.rmse = rmse
        self.initial_rmse = initial_rmse
        self.rmse_log = list(rmse_log)
        super().__init__(
            "diverged at epoch %d: rmse %.6g > 2 x initial %.6g (log: %s)"
            % (epoch, rmse, initial_rmse,
               ", ".join("%.4g" % v for v in rmse_log)))


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by all trainers.

    learning_rate decays as 1/sqrt(epoch). batch=1 is the plain online
    delta rule; larger batches apply the mean update over the batch (the
    tuned recipes in the CLI use 64). init 'zero' starts from an empty
    array, 'identity' from a pass-through mapping. device_in_loop
    reprograms the weights through the device model after every epoch
    instead of once at the end.
    """

    # None trains on clean inputs (the classifier); denoiser trainers
    # require a corruption spec.
    train_noise: NoiseSpec | None
    learning_rate: float = 0.01
    epochs: int = 4
    batch: int = 1
    seed: int = 0
    limit: int | None = None
    init: str = "zero"
    clean_fraction: float = 0.5
    device: DeviceModel = field(default_factory=DeviceModel)
    device_in_loop: bool = False

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.init not in ("zero", "identity"):
            raise ValueError("init must be 'zero' or 'identity'")
        if not 0.0 <= self.clean_fraction <= 1.0:
            raise ValueError("clean_fraction must lie in [0, 1]")


def pow2_scale(max_abs):
    """Smallest power of two >= max_abs (1.0 for an empty/zero array).

    Used as the readout gain: dividing weights by a power of two and
    multiplying the readout back is exact in floating point, so ideal
    programming reproduces float inference bit for bit.
    """
    if max_abs == 0.0:
        return 1.0
    return float(2.0 ** np.ceil(np.log2(max_abs)))


def plane_samples(images):
    """Flatten an image stack to (n_planes, h*w) treating channels as planes."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        n, h, w = images.shape
        return images.reshape(n, h * w), (h, w)
    n, h, w, c = images.shape
    return images.transpose(0, 3, 1, 2).reshape(n * c, h * w), (h, w)


def corrupt_plane(flat, shape, spec, seed_seq, clip_input=True):
    """Corrupt one flattened plane with its own substream.

    The analog front end clamps inputs to its [0, 1] voltage window, so
    training and inference see clamped noisy planes by default.
    """
    img = corrupt(flat.reshape(shape), spec, np.random.default_rng(seed_seq))
    if clip_input:
        img = np.clip(img, 0.0, 1.0)
    return img.reshape(-1)
