"""Decisions, sweeps, image metrics and reports."""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .dri import DriConfig, DriData, DriTrace, continue_training, run_dri
from .errors import InvalidArgumentError, ReportError, ShapeError, UndefinedCorrelationError
from .models import ModelConfig, forward, init_model

PSNR_CAP = 99.0
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_SIGMA = 1.5
SSIM_WIN = 11


# --- metrics ------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    psnr: float
    ssim: float


def psnr(x, y, peak=1.0):
    """``10*log10(peak**2 / MSE)``; identical inputs give ``PSNR_CAP``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"psnr: shapes {x.shape} and {y.shape} differ")
    mse = np.mean((x - y) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(10.0 * math.log10(peak * peak / mse))


def _gauss_window():
    r = np.arange(SSIM_WIN) - SSIM_WIN // 2
    w = np.exp(-(r ** 2) / (2 * SSIM_SIGMA ** 2))
    return w / w.sum()


def _filt(img, w):
    # separable valid-mode filtering
    out = ndimage.correlate1d(img, w, axis=0, mode="constant")
    out = ndimage.correlate1d(out, w, axis=1, mode="constant")
    h = SSIM_WIN // 2
    return out[h:img.shape[0] - h, h:img.shape[1] - h]


def ssim(x, y, data_range=1.0):
    """Gaussian-window SSIM (11x11, sigma 1.5, K1=0.01, K2=0.03).

    Accepts ``[H, W]`` or ``[C, H, W]``; the map is averaged over valid window
    positions and then over channels.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"ssim: shapes {x.shape} and {y.shape} differ")
    if x.ndim == 2:
        x, y = x[None], y[None]
    if x.shape[-1] < SSIM_WIN or x.shape[-2] < SSIM_WIN:
        raise InvalidArgumentError(f"image {x.shape[-2]}x{x.shape[-1]} smaller than the {SSIM_WIN}x{SSIM_WIN} window")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    w = _gauss_window()
    vals = []
    for a, b in zip(x, y):
        mx, my = _filt(a, w), _filt(b, w)
        sxx = _filt(a * a, w) - mx * mx
        syy = _filt(b * b, w) - my * my
        sxy = _filt(a * b, w) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        vals.append(float(np.mean(num / den)))
    return float(np.mean(vals))


def pearson(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"pearson needs two equal-length sequences, got {a.shape} and {b.shape}")
    if len(a) < 2:
        raise InvalidArgumentError("pearson needs at least 2 points")
    da, db = a - a.mean(), b - b.mean()
    sa, sb = math.sqrt(np.dot(da, da) / len(a)), math.sqrt(np.dot(db, db) / len(b))
    if sa == 0 or sb == 0:
        raise UndefinedCorrelationError("correlation is undefined when either input has zero variance")
    r = float(np.dot(da, db) / (sa * sb * len(a)))
    return max(-1.0, min(1.0, r))


def evaluate(params, pairs):
    """Mean PSNR/SSIM of clipped restorations over a ``(degraded, clean)`` set."""
    deg, clean = pairs
    out = np.clip(forward(params, deg), 0.0, 1.0)
    ps = [psnr(o, c) for o, c in zip(out, clean)]
    ss = [ssim(o, c) for o, c in zip(out, clean)]
    return Metrics(float(np.mean(ps)), float(np.mean(ss)))


# --- DPD ---------------------------------------------------------------------------

@dataclass
class DpdDecision:
    beneficial: bool
    dri: float
    neutral: bool
    config: DriConfig
    trace: DriTrace | None = None

    def summary(self):
        verdict = "beneficial" if self.beneficial else ("neutral (not beneficial)" if self.neutral else "harmful")
        return f"DRI = {self.dri!r} -> {verdict}"


def decide(dri_value, config, trace=None):
    """Sign rule: beneficial iff DRI > 0; exactly 0 is reported as neutral."""
    return DpdDecision(dri_value > 0, dri_value, dri_value == 0, config, trace)


def dpd_decide(params, data: DriData, config: DriConfig, seed=0, echo=()):
    res = run_dri(params, data, config, seed, echo)
    return decide(res.dri, config, res.trace)


# --- sweeps --------------------------------------------------------------------------

@dataclass
class SweepRow:
    r: float
    dri: float
    psnr: float
    ssim: float
    delta_psnr: float = 0.0
    delta_ssim: float = 0.0


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)
    echo: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)   # r -> DriTrace

    def baseline(self):
        for row in self.rows:
            if row.r == 0:
                return row
        raise InvalidArgumentError("sweep has no r=0 baseline row")

    def fill_deltas(self):
        base = self.baseline()
        for row in self.rows:
            row.delta_psnr = row.psnr - base.psnr
            row.delta_ssim = row.ssim - base.ssim
        return self

    def to_csv(self):
        out = io.StringIO()
        for line in self.echo:
            out.write(f"# {line}\n")
        out.write("r,dri,psnr,ssim,delta_psnr,delta_ssim\n")
        for row in self.rows:
            out.write(",".join(repr(float(v)) for v in
                               (row.r, row.dri, row.psnr, row.ssim, row.delta_psnr, row.delta_ssim)) + "\n")
        return out.getvalue()

    @classmethod
    def from_csv(cls, text):
        echo = [ln[1:].strip() for ln in text.splitlines() if ln.startswith("#")]
        body = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        reader = csv.reader(body)
        header = next(reader, None)
        if header != ["r", "dri", "psnr", "ssim", "delta_psnr", "delta_ssim"]:
            raise ValueError(f"unexpected sweep header {header}")
        rows = [SweepRow(*(float(v) for v in rec)) for rec in reader]
        return cls(rows, echo)


def average_sweeps(sweeps, echo=()):
    """Row-wise mean of sweeps over the same proportions (typically one per seed).

    DRI, PSNR and SSIM are averaged with compensated summation and the deltas
    are recomputed against the averaged baseline.  Traces are not carried over.
    """
    sweeps = list(sweeps)
    if not sweeps:
        raise InvalidArgumentError("no sweeps to average")
    grid = [row.r for row in sweeps[0].rows]
    for sw in sweeps[1:]:
        if [row.r for row in sw.rows] != grid:
            raise InvalidArgumentError("sweeps cover different proportions")
    n = len(sweeps)
    rows = []
    for i, r in enumerate(grid):
        cells = [sw.rows[i] for sw in sweeps]
        rows.append(SweepRow(r, math.fsum(c.dri for c in cells) / n, math.fsum(c.psnr for c in cells) / n,
                             math.fsum(c.ssim for c in cells) / n))
    return SweepResult(rows, list(echo)).fill_deltas()


@dataclass
class SweepJob:
    r: float
    model: ModelConfig
    data: DriData
    config: DriConfig
    eval_steps: int
    seed: int
    echo: tuple = ()


def sweep_row(job: SweepJob):
    """One sweep cell: fresh init, DRI run, continued training, anchor-test metrics."""
    params = init_model(job.model)
    cfg = replace(job.config, proportion=job.r)
    res = run_dri(params, job.data, cfg, job.seed, list(job.echo) + [f"r = {job.r!r}"])
    final = res.params
    if job.eval_steps:
        final = continue_training(final, job.data, cfg, job.eval_steps, job.seed, cfg.sgd.step_count)
    if job.data.anchor_test is None:
        raise InvalidArgumentError("sweep needs an anchor test split")
    m = evaluate(final, job.data.anchor_test)
    return SweepRow(job.r, res.dri, m.psnr, m.ssim), res


def _single_thread_worker():
    os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")


def proportion_sweep(model: ModelConfig, data: DriData, r_list, config: DriConfig, eval_steps,
                     seed=0, jobs=1, echo=(), on_row=None):
    """Run every proportion from the same init seed; ``r_list`` must include 0.

    ``on_row(row, result)`` is called as rows finish so partial results can be
    persisted.  Rows come back sorted by ``r``.
    """
    r_list = sorted(float(r) for r in r_list)
    if not r_list:
        raise InvalidArgumentError("empty proportion list")
    if 0.0 not in r_list:
        raise InvalidArgumentError("proportion list must include 0 for the baseline")
    jobs_ = [SweepJob(r, model, data, config, eval_steps, seed, tuple(echo)) for r in r_list]
    sweep = SweepResult(echo=list(echo))
    if jobs <= 1:
        results = []
        for job in jobs_:
            row, res = sweep_row(job)
            results.append((row, res))
            if on_row:
                on_row(row, res)
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_single_thread_worker) as pool:
            results = []
            for row, res in pool.map(sweep_row, jobs_):
                results.append((row, res))
                if on_row:
                    on_row(row, res)
    for row, res in results:
        sweep.rows.append(row)
        sweep.traces[row.r] = res.trace
    return sweep.fill_deltas()


# --- reports -----------------------------------------------------------------------

def trace_filename(r):
    return f"trace_r{r!r}.csv"


def summary_text(sweep: SweepResult, carrier, extra=()):
    lines = [f"# {e}" for e in sweep.echo]
    lines.append(f"carrier mode: {carrier} (which branch continues the trajectory after each lockstep update)")
    lines.append("")
    lines.append("DPD verdict per proportion:")
    for row in sweep.rows:
        d = decide(row.dri, None)
        lines.append(f"  r = {row.r!r}: {d.summary()}; PSNR {row.psnr!r} (delta {row.delta_psnr!r}), "
                     f"SSIM {row.ssim!r} (delta {row.delta_ssim!r})")
    nonzero = [row for row in sweep.rows if row.r != 0]
    lines.append("")
    if len(nonzero) >= 2:
        try:
            p = pearson([r.dri for r in nonzero], [r.delta_psnr for r in nonzero])
            lines.append(f"Pearson(DRI, delta PSNR) over r > 0 rows: {p!r}")
        except UndefinedCorrelationError as exc:
            lines.append(f"Pearson(DRI, delta PSNR): undefined ({exc})")
    else:
        lines.append("Pearson(DRI, delta PSNR): omitted, needs at least 2 rows with r > 0")
    lines.extend(extra)
    return "\n".join(lines) + "\n"


def make_report(sweep: SweepResult, out_dir, carrier="mixed", extra=()):
    """Write ``sweep.csv``, ``trace_r<r>.csv`` per row and ``summary.txt`` under ``out_dir``."""
    if not sweep.rows:
        raise ReportError("refusing to write a report for an empty sweep")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(sweep.to_csv())
        for r, trace in sorted(sweep.traces.items()):
            trace.write(out / trace_filename(r))
        (out / "summary.txt").write_text(summary_text(sweep, carrier, extra))
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc}") from exc
    return out
