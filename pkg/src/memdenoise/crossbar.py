"""Differential crossbar mapping of weight matrices.

A real matrix W with |w| <= 1 is programmed onto pairs of memristors,
g_pos carrying w >= 0 and g_neg carrying -w for w < 0 (the unused device
of each pair stays at ground, so at most one side of a pair is nonzero).
The array is partitioned into 256x64 tiles; analog readout accumulates
per-tile partial sums in a fixed tile order so results are bit
reproducible no matter how callers parallelize.

Signed inputs (intermediate CNN activations) are handled by two-phase
input splitting: the positive and negative parts are applied in separate
read phases and subtracted at the readout.
"""

import struct

import numpy as np

from .device import DeviceModel, quantize

TILE_ROWS = 256
TILE_COLS = 64

_MAGIC = b"MXTM"
_VERSION = 1


def _ceil_div(a, b):
    return -(-a // b)


def tile_grid(rows, cols):
    """Tile grid dimensions (row blocks, col blocks) for a rows x cols array."""
    return _ceil_div(rows, TILE_ROWS), _ceil_div(cols, TILE_COLS)


class TiledMatrix:
    """An immutable programmed crossbar: conductance pair arrays plus masks.

    prune_mask marks device pairs read as g = 0 in both polarities;
    input_dropout_mask marks rows whose input never reaches the array.
    """

    def __init__(self, g_pos, g_neg, prune_mask=None, input_dropout_mask=None,
                 levels=None, variation_sigma=0.0):
        g_pos = np.ascontiguousarray(g_pos, dtype=np.float64)
        g_neg = np.ascontiguousarray(g_neg, dtype=np.float64)
        if g_pos.shape != g_neg.shape or g_pos.ndim != 2:
            raise ValueError("conductance arrays must share a 2-D shape")
        self.rows, self.cols = g_pos.shape
        self.g_pos = g_pos
        self.g_neg = g_neg
        if prune_mask is None:
            prune_mask = np.zeros(g_pos.shape, dtype=bool)
        if input_dropout_mask is None:
            input_dropout_mask = np.zeros(self.rows, dtype=bool)
        self.prune_mask = np.ascontiguousarray(prune_mask, dtype=bool)
        self.input_dropout_mask = np.ascontiguousarray(input_dropout_mask, dtype=bool)
        if self.prune_mask.shape != g_pos.shape:
            raise ValueError("prune mask shape mismatch")
        if self.input_dropout_mask.shape != (self.rows,):
            raise ValueError("dropout mask shape mismatch")
        self.levels = levels
        self.variation_sigma = float(variation_sigma)
        for a in (self.g_pos, self.g_neg, self.prune_mask, self.input_dropout_mask):
            a.setflags(write=False)
        self._eff = None

    @property
    def tiles_per_polarity(self):
        gr, gc = tile_grid(self.rows, self.cols)
        return gr * gc

    @property
    def devices_per_polarity(self):
        return self.rows * self.cols

    def effective_weights(self):
        """Readout-visible weight matrix: g_pos - g_neg with masks applied."""
        if self._eff is None:
            w = self.g_pos - self.g_neg
            if self.prune_mask.any():
                w = np.where(self.prune_mask, 0.0, w)
            if self.input_dropout_mask.any():
                w = np.where(self.input_dropout_mask[:, None], 0.0, w)
            w.setflags(write=False)
            self._eff = w
        return self._eff


def program(weights, dev, rng=None):
    """Program a weight matrix onto differential pairs through a device model.

    Each weight maps one-sidedly: w >= 0 goes to g_pos as
    apply_variation(quantize(w)), g_neg stays at 0; w < 0 mirrors onto
    g_neg. One variation draw is consumed per pair (its programmed
    device), so stream usage does not depend on the sign pattern.

    Raises ValueError naming the offending index if any |w| > 1.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError("weights must be 2-D")
    amax = np.abs(w).max(initial=0.0)
    if amax > 1.0:
        idx = tuple(int(i) for i in np.unravel_index(np.argmax(np.abs(w)), w.shape))
        raise ValueError("|w|=%g > 1 at index %r" % (amax, idx))
    pos = w >= 0
    qp = quantize(np.where(pos, w, 0.0), dev)
    qn = quantize(np.where(pos, 0.0, -w), dev)
    if dev.variation_sigma > 0.0:
        if rng is None:
            raise ValueError("variation_sigma > 0 requires an rng")
        eps = rng.normal(0.0, dev.variation_sigma, size=w.shape)
        qp = np.where(pos, np.clip(qp + eps, 0.0, 1.0), 0.0)
        qn = np.where(pos, 0.0, np.clip(qn + eps, 0.0, 1.0))
    return TiledMatrix(qp, qn, levels=dev.levels,
                       variation_sigma=dev.variation_sigma)


def _blocked_product(x, w, rows, cols):
    # Fixed tile order: row blocks outer, column blocks inner. Partial sums
    # land in the output in that order, independent of caller parallelism.
    y = np.zeros(x.shape[:-1] + (cols,), dtype=np.float64)
    for r0 in range(0, rows, TILE_ROWS):
        r1 = min(r0 + TILE_ROWS, rows)
        for c0 in range(0, cols, TILE_COLS):
            c1 = min(c0 + TILE_COLS, cols)
            y[..., c0:c1] += x[..., r0:r1] @ w[r0:r1, c0:c1]
    return y


def matvec(m, x):
    """Analog dot product y[j] = sum_i x[i] (g_pos[i,j] - g_neg[i,j]).

    Pruned pairs and dropped rows contribute nothing. Inputs with negative
    entries run as two read phases (positive part minus negative part).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.rows,):
        raise ValueError("input length %r, expected %d" % (x.shape, m.rows))
    return _apply(m, x)


def matmul(m, xs):
    """Batched matvec: xs has shape (n, rows), result (n, cols)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != m.rows:
        raise ValueError("batch shape %r, expected (n, %d)" % (xs.shape, m.rows))
    return _apply(m, xs)


def _apply(m, x):
    w = m.effective_weights()
    if x.min(initial=0.0) < 0.0:
        xp = np.maximum(x, 0.0)
        xn = np.maximum(-x, 0.0)
        return (_blocked_product(xp, w, m.rows, m.cols)
                - _blocked_product(xn, w, m.rows, m.cols))
    return _blocked_product(x, w, m.rows, m.cols)


def apply_sparsity(m, dropout_frac, prune_frac, rng):
    """Mask exactly round(frac * population) rows / device pairs.

    Selections are uniform without replacement from the given stream and
    replace any masks already present. Counts use round-half-up.
    """
    if not (0.0 <= dropout_frac < 1.0 and 0.0 <= prune_frac < 1.0):
        raise ValueError("fractions must lie in [0, 1)")
    n_drop = int(np.floor(dropout_frac * m.rows + 0.5))
    n_prune = int(np.floor(prune_frac * m.devices_per_polarity + 0.5))
    drop = np.zeros(m.rows, dtype=bool)
    if n_drop:
        drop[rng.choice(m.rows, size=n_drop, replace=False)] = True
    prune = np.zeros((m.rows, m.cols), dtype=bool)
    if n_prune:
        flat = rng.choice(m.devices_per_polarity, size=n_prune, replace=False)
        prune[np.unravel_index(flat, prune.shape)] = True
    return TiledMatrix(m.g_pos, m.g_neg, prune_mask=prune,
                       input_dropout_mask=drop, levels=m.levels,
                       variation_sigma=m.variation_sigma)


def tiled_to_bytes(m):
    """Serialize to a self-describing little-endian binary container."""
    levels = -1 if m.levels is None else int(m.levels)
    header = struct.pack("<4sHIIid", _MAGIC, _VERSION, m.rows, m.cols,
                         levels, m.variation_sigma)
    return b"".join([header, m.g_pos.tobytes(), m.g_neg.tobytes(),
                     np.packbits(m.prune_mask).tobytes(),
                     np.packbits(m.input_dropout_mask).tobytes()])


def save_tiled(m, path):
    with open(path, "wb") as f:
        f.write(tiled_to_bytes(m))


def tiled_from_bytes(blob, path="<bytes>"):
    """Inverse of tiled_to_bytes."""
    head_size = struct.calcsize("<4sHIIid")
    magic, version, rows, cols, levels, sigma = struct.unpack(
        "<4sHIIid", blob[:head_size])
    if magic != _MAGIC:
        raise ValueError("%s: not a crossbar container" % path)
    if version != _VERSION:
        raise ValueError("%s: unsupported version %d" % (path, version))
    n = rows * cols
    off = head_size
    g_pos = np.frombuffer(blob[off:off + 8 * n], dtype="<f8").reshape(rows, cols)
    off += 8 * n
    g_neg = np.frombuffer(blob[off:off + 8 * n], dtype="<f8").reshape(rows, cols)
    off += 8 * n
    nb = _ceil_div(n, 8)
    prune = np.unpackbits(
        np.frombuffer(blob[off:off + nb], dtype=np.uint8), count=n
    ).astype(bool).reshape(rows, cols)
    off += nb
    nb = _ceil_div(rows, 8)
    drop = np.unpackbits(
        np.frombuffer(blob[off:off + nb], dtype=np.uint8), count=rows
    ).astype(bool)
    return TiledMatrix(g_pos.copy(), g_neg.copy(), prune_mask=prune,
                       input_dropout_mask=drop,
                       levels=None if levels < 0 else levels,
                       variation_sigma=sigma)


def load_tiled(path):
    with open(path, "rb") as f:
        return tiled_from_bytes(f.read(), path)
