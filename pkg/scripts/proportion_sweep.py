"""Multi-seed proportion sweep with the training-loss comparison.

Runs the haze-anchor / noise-auxiliary sweep once per seed, writes a report
per seed plus a seed-averaged one, and appends the training-loss DRI at the
smallest nonzero proportion to the averaged summary.

    python scripts/proportion_sweep.py --out runs/trend --seeds 1 2 3
"""
import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from drikit.analysis import average_sweeps, make_report, pearson, proportion_sweep
from drikit.degrade import build_paired_dataset
from drikit.dri import DriConfig, DriData, dri_on_training_loss
from drikit.models import ModelConfig, init_model
from drikit.numcore import SgdConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--anchor", default="haze")
    ap.add_argument("--auxiliary", default="noise")
    ap.add_argument("--proportions", type=float, nargs="+", default=[0, 0.1, 0.3, 0.5, 0.7, 0.9])
    ap.add_argument("--size", type=int, default=16)
    ap.add_argument("--lr", type=float, default=0.01)
    ap.add_argument("--steps", type=int, default=2500)
    ap.add_argument("--eval-steps", type=int, default=2500)
    ap.add_argument("--batch", type=int, default=10)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    cfg = DriConfig(SgdConfig(args.lr, args.steps, args.batch))
    probe_r = min(r for r in args.proportions if r > 0)
    sweeps, training = [], []
    for seed in args.seeds:
        ds = build_paired_dataset([args.anchor, args.auxiliary], {"train": 200, "val": 32, "test": 32},
                                  args.size, seed)
        data = DriData.from_dataset(ds, args.anchor, args.auxiliary)
        echo = [f"anchor = {args.anchor}", f"auxiliary = {args.auxiliary}", f"size = {args.size}", f"seed = {seed}"]
        sw = proportion_sweep(ModelConfig(seed=seed), data, args.proportions, cfg, args.eval_steps,
                              seed=seed, jobs=args.jobs, echo=echo)
        make_report(sw, args.out / f"seed{seed}")
        sweeps.append(sw)
        train = dri_on_training_loss(init_model(ModelConfig(seed=seed)), data, replace(cfg, proportion=probe_r), seed)
        training.append(train.dri)
        print(f"seed {seed} done", flush=True)

    avg = average_sweeps(sweeps, [f"seed-averaged over {args.seeds}"])
    val = [sw.rows[[row.r for row in sw.rows].index(probe_r)].dri for sw in sweeps]
    extra = [f"training-loss DRI at r = {probe_r!r} per seed: {training!r}",
             f"validation-loss DRI at r = {probe_r!r} per seed: {val!r}",
             f"divergence |mean difference| = {abs(np.mean(training) - np.mean(val))!r}"]
    if len(sweeps) > 1:
        extra.append(f"seed sd: training {np.std(training, ddof=1)!r}, validation {np.std(val, ddof=1)!r}")
    nz = [row for row in avg.rows if row.r > 0]
    if len(nz) >= 2:
        extra.append("per-seed Pearson: " + repr([pearson([r.dri for r in sw.rows if r.r > 0],
                                                          [r.delta_psnr for r in sw.rows if r.r > 0])
                                                  for sw in sweeps]))
    make_report(avg, args.out / "average", extra=extra)
    print((args.out / "average" / "summary.txt").read_text(), end="")


if __name__ == "__main__":
    main()
