"""Degradation Relationship Index.

At step ``t`` two SGD branches start from the same parameters ``theta_t``:
one trained on the anchor-only batch, one on the mixed batch.  With ``L`` the
anchor validation loss,

    D_t = (L(theta_anchor') - L(theta_mixed')) / L(theta_t)

i.e. how much more the mixed update lowered the anchor loss, relative to the
current loss.  The index is the mean of ``D_t`` over the sampled steps; a
positive value means the auxiliary data helped the anchor task at that step.

Which branch continues the trajectory is a modelling choice:

``mixed``   theta_{t+1} is the mixed branch (default: the run *is* the mixed
            training whose outcome is being predicted).
``anchor``  theta_{t+1} is the anchor-only branch.
``dual``    two independent trajectories; each branch's drop rate uses its own
            previous loss as denominator.

The carrier update runs every step; the other branch and the loss evaluations
run only at sampled steps, so the trajectory does not depend on the schedule.
"""
from __future__ import annotations

import csv
import io
import math
import time
from decimal import ROUND_CEILING, Decimal
from dataclasses import dataclass, field, replace

import numpy as np

from .degrade import PairedDataset, redraw
from .errors import DegenerateLossError, FormatError, InvalidArgumentError
from .mixer import MIXING_MODES, SAMPLING_MODES, compose_batch
from .models import ModelParams, train_step, validation_loss
from .numcore import SgdConfig
from .rng import substream

CARRIERS = ("mixed", "anchor", "dual")
LOSS_SOURCES = ("validation", "training")
PROBE_MODES = ("in-pool", "holdout")
SCHEDULE_KINDS = ("every", "first", "middle", "final")


@dataclass(frozen=True)
class Schedule:
    kind: str = "every"
    value: float = 1

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise InvalidArgumentError(f"schedule kind must be one of {SCHEDULE_KINDS}, got {self.kind!r}")
        if self.kind == "every":
            if int(self.value) != self.value or self.value < 1:
                raise InvalidArgumentError(f"every-k schedule needs an integer k >= 1, got {self.value}")
            object.__setattr__(self, "value", int(self.value))
        elif not 0 < self.value <= 1:
            raise InvalidArgumentError(f"schedule fraction must be in (0, 1], got {self.value}")

    @classmethod
    def parse(cls, text):
        kind, sep, val = str(text).partition(":")
        if not sep:
            raise InvalidArgumentError(f"schedule must look like 'every:5' or 'first:0.3', got {text!r}")
        try:
            num = float(val)
        except ValueError:
            raise InvalidArgumentError(f"bad schedule value in {text!r}") from None
        return cls(kind.strip(), int(num) if kind.strip() == "every" and num.is_integer() else num)

    def __str__(self):
        return f"{self.kind}:{self.value}"


def schedule_filter(schedule: Schedule, total):
    """1-based steps at which ``D_t`` is recorded."""
    if total < 1:
        raise InvalidArgumentError(f"total steps must be >= 1, got {total}")
    if schedule.kind == "every":
        if schedule.value > total:
            raise InvalidArgumentError(f"every-{schedule.value} sampling exceeds {total} total steps")
        return list(range(1, total + 1, schedule.value))
    # exact decimal ceiling so that 0.3 * 10 gives 3, not 4
    width = int((Decimal(repr(float(schedule.value))) * total).to_integral_value(rounding=ROUND_CEILING))
    width = min(max(width, 1), total)
    if schedule.kind == "first":
        start = 1
    elif schedule.kind == "final":
        start = total - width + 1
    else:
        start = (total - width) // 2 + 1
    return list(range(start, start + width))


@dataclass(frozen=True)
class DriConfig:
    sgd: SgdConfig
    proportion: float = 0.0
    carrier: str = "mixed"
    schedule: Schedule = Schedule()
    loss_source: str = "validation"
    epsilon: float = 1e-12
    sampling: str = "replacement"
    mixing: str = "fixed"
    probe_size: int = 32
    probe_mode: str = "holdout"

    def __post_init__(self):
        if self.carrier not in CARRIERS:
            raise InvalidArgumentError(f"carrier must be one of {CARRIERS}, got {self.carrier!r}")
        if self.loss_source not in LOSS_SOURCES:
            raise InvalidArgumentError(f"loss source must be one of {LOSS_SOURCES}, got {self.loss_source!r}")
        if not self.epsilon > 0:
            raise InvalidArgumentError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 <= self.proportion <= 1:
            raise InvalidArgumentError(f"proportion must be in [0, 1], got {self.proportion}")
        if self.sampling not in SAMPLING_MODES:
            raise InvalidArgumentError(f"sampling must be one of {SAMPLING_MODES}, got {self.sampling!r}")
        if self.mixing not in MIXING_MODES:
            raise InvalidArgumentError(f"mixing must be one of {MIXING_MODES}, got {self.mixing!r}")
        if self.probe_size < 1:
            raise InvalidArgumentError(f"probe size must be >= 1, got {self.probe_size}")
        if self.probe_mode not in PROBE_MODES:
            raise InvalidArgumentError(f"probe mode must be one of {PROBE_MODES}, got {self.probe_mode!r}")

    def echo(self):
        return [
            f"dri.proportion = {self.proportion!r}",
            f"dri.carrier = {self.carrier}",
            f"dri.schedule = {self.schedule}",
            f"dri.loss = {self.loss_source}",
            f"dri.epsilon = {self.epsilon!r}",
            f"dri.sampling = {self.sampling}",
            f"dri.mixing = {self.mixing}",
            f"dri.probe_size = {self.probe_size}",
            f"dri.probe_mode = {self.probe_mode}",
            f"sgd.lr = {self.sgd.learning_rate!r}",
            f"sgd.steps = {self.sgd.step_count}",
            f"sgd.batch = {self.sgd.batch_size}",
        ]


@dataclass
class DriData:
    """Pools for one anchor/auxiliary pairing; each is a ``(degraded, clean)`` pair of arrays."""
    anchor_train: tuple
    aux_train: tuple
    anchor_val: tuple
    anchor_test: tuple | None = None

    @classmethod
    def from_dataset(cls, ds: PairedDataset, anchor, auxiliary, self_auxiliary=False):
        if anchor == auxiliary and not self_auxiliary:
            raise InvalidArgumentError(
                f"anchor and auxiliary are both {anchor!r}; set self_auxiliary to use an independent redraw")
        if anchor == "adversarial":
            raise InvalidArgumentError("the adversarial control can only be an auxiliary kind")
        aux = (redraw(ds, auxiliary, "train", "self-aux") if anchor == auxiliary
               else ds.pairs(auxiliary, "train"))
        test = ds.pairs(anchor, "test") if len(ds.ids("test")) else None
        return cls(ds.pairs(anchor, "train"), aux, ds.pairs(anchor, "val"), test)


@dataclass
class TraceRow:
    step: int
    loss_base: float
    loss_anchor_branch: float
    loss_mixed_branch: float
    d_t: float
    loss_base_mixed: float | None = None   # dual trajectory only

    def recompute(self):
        if self.loss_base_mixed is None:
            return (self.loss_anchor_branch - self.loss_mixed_branch) / self.loss_base
        drop_mixed = (self.loss_base_mixed - self.loss_mixed_branch) / self.loss_base_mixed
        drop_anchor = (self.loss_base - self.loss_anchor_branch) / self.loss_base
        return drop_mixed - drop_anchor


TRACE_COLUMNS = ["step", "loss_base", "loss_anchor_branch", "loss_mixed_branch", "d_t"]


@dataclass
class DriTrace:
    rows: list = field(default_factory=list)
    echo: list = field(default_factory=list)

    @property
    def d_values(self):
        return [r.d_t for r in self.rows]

    def subsequence(self, steps):
        keep = set(steps)
        return DriTrace([r for r in self.rows if r.step in keep], list(self.echo))

    def mean(self):
        return dri_mean(self.d_values)

    def to_csv(self):
        dual = any(r.loss_base_mixed is not None for r in self.rows)
        out = io.StringIO()
        for line in self.echo:
            out.write(f"# {line}\n")
        cols = TRACE_COLUMNS + (["loss_base_mixed"] if dual else [])
        out.write(",".join(cols) + "\n")
        for r in self.rows:
            vals = [str(r.step), repr(r.loss_base), repr(r.loss_anchor_branch),
                    repr(r.loss_mixed_branch), repr(r.d_t)]
            if dual:
                vals.append(repr(r.loss_base_mixed))
            out.write(",".join(vals) + "\n")
        return out.getvalue()

    def write(self, path):
        with open(path, "w", newline="") as f:
            f.write(self.to_csv())

    @classmethod
    def from_csv(cls, text):
        echo, body, offset, body_offset = [], [], 0, None
        for line in text.splitlines(keepends=True):
            if line.startswith("#"):
                echo.append(line[1:].strip())
            elif line.strip():
                if body_offset is None:
                    body_offset = offset
                body.append(line)
            offset += len(line.encode())
        if not body:
            raise FormatError("trace has no header", offset)
        reader = csv.reader(body)
        header = next(reader)
        if header[:5] != TRACE_COLUMNS or header[5:] not in ([], ["loss_base_mixed"]):
            raise FormatError(f"unexpected trace header {header}", body_offset)
        rows = []
        for i, rec in enumerate(reader):
            if len(rec) != len(header):
                raise FormatError(f"trace row {i + 1} has {len(rec)} fields, expected {len(header)}", None)
            try:
                rows.append(TraceRow(int(rec[0]), float(rec[1]), float(rec[2]), float(rec[3]), float(rec[4]),
                                     float(rec[5]) if len(rec) > 5 else None))
            except ValueError as exc:
                raise FormatError(f"trace row {i + 1}: {exc}", None) from exc
        return cls(rows, echo)

    @classmethod
    def read(cls, path):
        with open(path, newline="") as f:
            return cls.from_csv(f.read())


def dri_mean(values):
    """Mean with compensated summation; ``dri_mean([]) `` is an error."""
    values = list(values)
    if not values:
        raise InvalidArgumentError("no D_t values to average")
    return math.fsum(values) / len(values)


@dataclass
class DriResult:
    dri: float
    steps_used: int
    total_steps: int
    config: DriConfig
    trace: DriTrace
    params: ModelParams                   # carrier parameters after the last step
    anchor_params: ModelParams | None = None   # anchor trajectory in dual mode
    bookkeeping_seconds: float = 0.0

    @property
    def loss_source(self):
        return self.config.loss_source

    @property
    def carrier(self):
        return self.config.carrier


def dri_step(theta, anchor_batch, mixed_batch, val_set, learning_rate, epsilon=1e-12, base_loss=None,
             loss=validation_loss, step=train_step):
    """One lockstep update from shared ``theta``.

    Returns ``(row, theta_anchor, theta_mixed)`` where ``row`` is a
    :class:`TraceRow` (step 0).  ``base_loss`` may be passed when already known.
    ``loss(params, pairs)`` and ``step(params, pairs, lr)`` default to the
    restoration model and can be swapped for any other differentiable model.
    """
    base = loss(theta, val_set) if base_loss is None else base_loss
    if not base >= epsilon:
        raise DegenerateLossError(f"base loss {base!r} is below epsilon {epsilon!r}")
    theta_a = step(theta, anchor_batch, learning_rate)
    theta_m = step(theta, mixed_batch, learning_rate)
    la = loss(theta_a, val_set)
    lm = loss(theta_m, val_set)
    return TraceRow(0, base, la, lm, (la - lm) / base), theta_a, theta_m


def _probe(data: DriData, config: DriConfig, seed):
    """Loss set and (possibly reduced) anchor pool for the configured loss source."""
    if config.loss_source == "validation":
        return data.anchor_val, data.anchor_train
    deg, clean = data.anchor_train
    n = len(deg)
    k = min(config.probe_size, n - 1 if config.probe_mode == "holdout" else n)
    if k < 1:
        raise InvalidArgumentError("anchor training pool too small for a held-out probe")
    order = substream(seed, "probe").permutation(n)
    pick = np.sort(order[:k])
    probe = (deg[pick], clean[pick])
    if config.probe_mode == "holdout":
        rest = np.sort(order[k:])
        return probe, (deg[rest], clean[rest])
    return probe, data.anchor_train


def run_dri(params: ModelParams, data: DriData, config: DriConfig, seed=0, echo=()):
    """Run ``sgd.step_count`` steps and average ``D_t`` over the scheduled steps."""
    steps = schedule_filter(config.schedule, config.sgd.step_count)
    if not steps:
        raise InvalidArgumentError("schedule selects no steps")
    sampled = set(steps)
    loss_set, anchor_pool = _probe(data, config, seed)
    aux_pool = data.aux_train
    eta = config.sgd.learning_rate
    n = config.sgd.batch_size
    eps = config.epsilon
    trace = DriTrace(echo=list(echo) + config.echo() + [f"seed = {seed}"])
    bookkeeping = 0.0

    def loss(p):
        return validation_loss(p, loss_set)

    def guard(value, t):
        if not value >= eps:
            raise DegenerateLossError(
                f"step {t}: base loss {value!r} below epsilon {eps!r}; training converged below measurable scale",
                trace=trace, step=t)

    theta = params
    theta_a = params  # dual mode: anchor trajectory
    cached = {}       # step -> base loss of the trajectory parameters entering that step
    for t in range(1, config.sgd.step_count + 1):
        mix = compose_batch(anchor_pool, aux_pool, config.proportion, n, t, seed,
                            sampling=config.sampling, mixing=config.mixing)
        record = t in sampled
        if config.carrier == "dual":
            next_m = train_step(theta, mix.mixed, eta)
            next_a = train_step(theta_a, mix.anchor, eta)
            if record:
                t0 = time.perf_counter()
                base_a, base_m = cached.get(("a", t)), cached.get(("m", t))
                base_a = loss(theta_a) if base_a is None else base_a
                base_m = loss(theta) if base_m is None else base_m
                guard(base_a, t)
                guard(base_m, t)
                la, lm = loss(next_a), loss(next_m)
                row = TraceRow(t, base_a, la, lm, 0.0, base_m)
                row.d_t = row.recompute()
                trace.rows.append(row)
                cached = {("a", t + 1): la, ("m", t + 1): lm}
                bookkeeping += time.perf_counter() - t0
            theta, theta_a = next_m, next_a
            continue

        carry_mixed = config.carrier == "mixed"
        nxt = train_step(theta, mix.mixed if carry_mixed else mix.anchor, eta)
        if record:
            t0 = time.perf_counter()
            base = cached.get(t)
            base = loss(theta) if base is None else base
            guard(base, t)
            other = train_step(theta, mix.anchor if carry_mixed else mix.mixed, eta)
            l_next, l_other = loss(nxt), loss(other)
            la, lm = (l_other, l_next) if carry_mixed else (l_next, l_other)
            trace.rows.append(TraceRow(t, base, la, lm, (la - lm) / base))
            cached = {t + 1: l_next}
            bookkeeping += time.perf_counter() - t0
        theta = nxt

    return DriResult(trace.mean(), len(trace.rows), config.sgd.step_count, config, trace, theta,
                     theta_a if config.carrier == "dual" else None, bookkeeping)


def dri_on_training_loss(params, data, config: DriConfig, seed=0, echo=()):
    """Same machinery with the loss measured on a fixed probe of anchor *training* pairs."""
    return run_dri(params, data, replace(config, loss_source="training"), seed, echo)


def continue_training(params, data: DriData, config: DriConfig, steps, seed, start_step):
    """Further mixed-batch SGD steps ``start_step+1 .. start_step+steps`` (no bookkeeping)."""
    _, anchor_pool = _probe(data, config, seed)
    theta = params
    for t in range(start_step + 1, start_step + steps + 1):
        mix = compose_batch(anchor_pool, data.aux_train, config.proportion, config.sgd.batch_size, t, seed,
                            sampling=config.sampling, mixing=config.mixing)
        theta = train_step(theta, mix.mixed, config.sgd.learning_rate)
    return theta
