"""Anchor/auxiliary batch composition.

For a step, ``N`` anchor pairs are drawn (the anchor-only batch).  The mixed
batch keeps the first ``N - m`` of those and appends ``m`` auxiliary pairs
drawn from an independent stream, with ``m = rounding_rule(r, N)``.  Because
the prefix is shared, ``r = 0`` gives a mixed batch bitwise equal to the
anchor batch.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .errors import InvalidArgumentError
from .rng import substream

log = logging.getLogger(__name__)

SAMPLING_MODES = ("replacement", "epoch")
MIXING_MODES = ("fixed", "bernoulli")


def rounding_rule(r, n):
    """Auxiliary count ``m``: ``r*n`` rounded half away from zero, clamped to ``[0, n]``.

    The product is formed in decimal so that e.g. ``0.35 * 10`` rounds to 4.
    """
    if not 0 <= r <= 1:
        raise InvalidArgumentError(f"proportion must be in [0, 1], got {r}")
    m = int((Decimal(repr(float(r))) * int(n)).to_integral_value(rounding=ROUND_HALF_UP))
    m = min(max(m, 0), int(n))
    if r > 0 and m == 0:
        log.warning("proportion %s is not realizable with batch size %d (rounds to 0 auxiliary pairs)", r, n)
    return m


@dataclass
class BatchMix:
    anchor: tuple            # (degraded, clean) for X1, N pairs
    mixed: tuple             # (degraded, clean) for X12
    tags: np.ndarray         # 0 = anchor pair, 1 = auxiliary pair, per mixed position
    anchor_index: np.ndarray
    aux_index: np.ndarray
    proportion: float
    batch_size: int

    @property
    def aux_count(self):
        return int(self.tags.sum())


def _pool_len(pool):
    n = len(pool[0])
    if n == 0 or len(pool[1]) != n:
        raise InvalidArgumentError("pools must be nonempty (degraded, clean) arrays of equal length")
    return n


def _draw(pool_size, n, seed, step, name, sampling):
    if sampling == "replacement":
        return substream(seed, "batch", step, name).integers(0, pool_size, n)
    if n > pool_size:
        raise InvalidArgumentError(
            f"batch of {n} exceeds {name} pool of {pool_size} under no-replacement sampling")
    per_epoch = pool_size // n
    epoch, slot = divmod(step, per_epoch)
    perm = substream(seed, "epoch", epoch, name).permutation(pool_size)
    return perm[slot * n:(slot + 1) * n]


def compose_batch(anchor_pool, aux_pool, r, n, step, seed, sampling="replacement", mixing="fixed"):
    """Build ``(X1, X12)`` for one step; pools are ``(degraded, clean)`` array pairs."""
    if sampling not in SAMPLING_MODES:
        raise InvalidArgumentError(f"sampling must be one of {SAMPLING_MODES}, got {sampling!r}")
    if mixing not in MIXING_MODES:
        raise InvalidArgumentError(f"mixing must be one of {MIXING_MODES}, got {mixing!r}")
    if not 0 <= r <= 1:
        raise InvalidArgumentError(f"proportion must be in [0, 1], got {r}")
    if n < 1:
        raise InvalidArgumentError(f"batch size must be >= 1, got {n}")
    na = _pool_len(anchor_pool)
    nx = _pool_len(aux_pool)

    if mixing == "fixed":
        m = rounding_rule(r, n)
    else:
        m = int(substream(seed, "batch", step, "bernoulli").binomial(n, r))

    a_idx = _draw(na, n, seed, step, "anchor", sampling)
    x_idx = _draw(nx, m, seed, step, "aux", sampling) if m else np.empty(0, dtype=np.int64)

    x1 = (anchor_pool[0][a_idx], anchor_pool[1][a_idx])
    keep = n - m
    if m == 0:
        x12 = (x1[0].copy(), x1[1].copy())
    else:
        x12 = (np.concatenate([x1[0][:keep], aux_pool[0][x_idx]]),
               np.concatenate([x1[1][:keep], aux_pool[1][x_idx]]))
    tags = np.zeros(n, dtype=np.int8)
    tags[keep:] = 1
    return BatchMix(x1, x12, tags, a_idx, x_idx, float(r), int(n))
