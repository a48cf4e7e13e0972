"""Compare sparse measurement schedules against measuring every step.

Every schedule follows the same training trajectory, so each sparse DRI is the
mean of a subsequence of the every-step trace.  The script checks that replay
and reports each schedule's DRI and bookkeeping time.

    python scripts/schedule_ablation.py --proportion 0.5 --steps 1000
"""
import argparse
from dataclasses import replace

from drikit.degrade import build_paired_dataset
from drikit.dri import DriConfig, DriData, Schedule, run_dri, schedule_filter
from drikit.models import ModelConfig, init_model
from drikit.numcore import SgdConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--proportion", type=float, default=0.5)
    ap.add_argument("--size", type=int, default=16)
    ap.add_argument("--lr", type=float, default=0.01)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--schedules", nargs="+", default=["first:0.3", "middle:0.3", "final:0.3", "every:5"])
    args = ap.parse_args()

    ds = build_paired_dataset(["noise", "haze"], {"train": 200, "val": 32, "test": 0}, args.size, args.seed)
    data = DriData.from_dataset(ds, "haze", "noise")
    cfg = DriConfig(SgdConfig(args.lr, args.steps, 10), proportion=args.proportion)
    full = run_dri(init_model(ModelConfig(seed=args.seed)), data, cfg, args.seed)
    print(f"{'every:1':>12}  DRI {full.dri:+.4e}  bookkeeping {full.bookkeeping_seconds:6.2f} s")
    for text in args.schedules:
        sched = Schedule.parse(text)
        res = run_dri(init_model(ModelConfig(seed=args.seed)), data, replace(cfg, schedule=sched), args.seed)
        sub = full.trace.subsequence(schedule_filter(sched, args.steps))
        replay = res.trace.rows == sub.rows and res.dri == sub.mean()
        print(f"{text:>12}  DRI {res.dri:+.4e}  bookkeeping {res.bookkeeping_seconds:6.2f} s  "
              f"({full.bookkeeping_seconds / res.bookkeeping_seconds:.2f}x cheaper)  replay exact: {replay}")


if __name__ == "__main__":
    main()
