"""Image quality scoring: MSE, PSNR, SSIM, and per-dataset aggregates.

Intensities are assumed to live in [0, 1], so PSNR uses MAX = 1. SSIM
follows the Wang et al. form with a 7x7 uniform window, C1 = 0.01^2,
C2 = 0.03^2, unbiased (sample) variances, and valid-window-only
averaging; the small uniform window suits 28x28 inputs. Window sums are
taken from integral images, deliberately a different computation route
than the usual uniform-filter implementations so the two can be checked
against each other.

Aggregate reports average SSIM and MSE over images and derive PSNR from
the mean MSE, so the psnr = 10 log10(1/mse) identity holds for every
emitted report.
"""

import json
from dataclasses import dataclass

import numpy as np

SSIM_WINDOW = 7
_C1 = 0.01 ** 2
_C2 = 0.03 ** 2

CSV_HEADER = "noise,method,ssim,mse,psnr,n"


def mse(a, b):
    """Mean squared error over all elements."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("shape mismatch %r vs %r" % (a.shape, b.shape))
    d = a - b
    return float(np.mean(d * d))


def psnr(a, b):
    """10 log10(1 / mse) in dB; inf when the images are identical."""
    m = mse(a, b)
    if m == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / m))


def _window_sums(x, k):
    # Integral image with a zero border; S[i, j] sums the k x k window
    # whose top-left corner is (i, j).
    ii = np.zeros((x.shape[0] + 1, x.shape[1] + 1), dtype=np.float64)
    np.cumsum(x, axis=0, out=ii[1:, 1:])
    np.cumsum(ii[1:, 1:], axis=1, out=ii[1:, 1:])
    return ii[k:, k:] - ii[:-k, k:] - ii[k:, :-k] + ii[:-k, :-k]


def _ssim_plane(a, b):
    k = SSIM_WINDOW
    if a.shape[0] < k or a.shape[1] < k:
        raise ValueError("image %r smaller than %dx%d window" % (a.shape, k, k))
    n = float(k * k)
    sa = _window_sums(a, k)
    sb = _window_sums(b, k)
    saa = _window_sums(a * a, k)
    sbb = _window_sums(b * b, k)
    sab = _window_sums(a * b, k)
    ua = sa / n
    ub = sb / n
    # unbiased variance/covariance, n/(n-1) on the centered second moments
    norm = n / (n - 1.0)
    va = (saa / n - ua * ua) * norm
    vb = (sbb / n - ub * ub) * norm
    cab = (sab / n - ua * ub) * norm
    s = ((2.0 * ua * ub + _C1) * (2.0 * cab + _C2)) / (
        (ua * ua + ub * ub + _C1) * (va + vb + _C2))
    return float(np.mean(s))


def ssim(a, b):
    """Mean structural similarity; RGB scores per channel, then averages."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("shape mismatch %r vs %r" % (a.shape, b.shape))
    if a.ndim == 2:
        return _ssim_plane(a, b)
    if a.ndim == 3 and a.shape[2] in (1, 3):
        vals = [_ssim_plane(a[:, :, c], b[:, :, c]) for c in range(a.shape[2])]
        return float(np.mean(vals))
    raise ValueError("bad image shape %r" % (a.shape,))


@dataclass(frozen=True)
class QualityReport:
    """Aggregate scores for one (noise, method) condition over a test set.

    psnr is None when mean mse is exactly 0 (printed as '-').
    """

    noise: str
    method: str
    ssim: float
    mse: float
    psnr: float | None
    n_images: int

    def to_json(self):
        return json.dumps({"noise": self.noise, "method": self.method,
                           "ssim": self.ssim, "mse": self.mse,
                           "psnr": self.psnr, "n": self.n_images})

    def csv_row(self):
        p = "-" if self.psnr is None else "%.6g" % self.psnr
        return "%s,%s,%.6g,%.6g,%s,%d" % (
            self.noise, self.method, self.ssim, self.mse, p, self.n_images)


def evaluate_pairs(reference, test, noise="", method=""):
    """Score a stack of test images against their references.

    Both stacks are (n, h, w) or (n, h, w, c). SSIM and MSE are averaged
    over images; PSNR is derived from the mean MSE.
    """
    reference = np.asarray(reference, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if reference.shape != test.shape:
        raise ValueError("shape mismatch %r vs %r" % (reference.shape, test.shape))
    if reference.ndim < 3:
        raise ValueError("expected an image stack")
    n = reference.shape[0]
    if n < 1:
        raise ValueError("empty stack")
    ssims = np.empty(n)
    mses = np.empty(n)
    for i in range(n):
        ssims[i] = ssim(reference[i], test[i])
        mses[i] = mse(reference[i], test[i])
    mean_mse = float(np.mean(mses))
    p = None if mean_mse == 0.0 else float(10.0 * np.log10(1.0 / mean_mse))
    return QualityReport(noise=noise, method=method, ssim=float(np.mean(ssims)),
                         mse=mean_mse, psnr=p, n_images=n)
