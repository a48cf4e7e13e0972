"""Negative and neutral controls on a noise anchor.

The negative control mixes deranged pairs (each noisy input paired with a
different clean image) and should give a negative DRI and a lower anchor PSNR
than plain anchor training.  The neutral control mixes an independent draw of
the anchor's own noise and should give a DRI near zero.

    python scripts/controls.py --seeds 1 2 3
"""
import argparse
from dataclasses import replace

from drikit.analysis import evaluate
from drikit.degrade import build_paired_dataset
from drikit.dri import DriConfig, DriData, continue_training, run_dri
from drikit.models import ModelConfig, init_model
from drikit.numcore import SgdConfig

COUNTS = {"train": 200, "val": 32, "test": 32}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--size", type=int, default=24)
    ap.add_argument("--lr", type=float, default=0.01)
    ap.add_argument("--steps", type=int, default=1500)
    ap.add_argument("--batch", type=int, default=10)
    args = ap.parse_args()

    sgd = SgdConfig(args.lr, args.steps, args.batch)
    print("seed  adversarial DRI  PSNR mixed  PSNR anchor-only  self-aux DRI")
    for seed in args.seeds:
        ds = build_paired_dataset(["noise", "adversarial"], COUNTS, args.size, seed)
        data = DriData.from_dataset(ds, "noise", "adversarial")
        cfg = DriConfig(sgd, proportion=0.3)
        adv = run_dri(init_model(ModelConfig(seed=seed)), data, cfg, seed)
        base = continue_training(init_model(ModelConfig(seed=seed)), data, replace(cfg, proportion=0.0),
                                 args.steps, seed, 0)

        own = build_paired_dataset(["noise"], COUNTS, args.size, seed)
        self_data = DriData.from_dataset(own, "noise", "noise", self_auxiliary=True)
        neutral = run_dri(init_model(ModelConfig(seed=seed)), self_data, DriConfig(sgd, proportion=0.1), seed)
        print(f"{seed:4d}  {adv.dri:15.3e}  {evaluate(adv.params, data.anchor_test).psnr:10.2f}  "
              f"{evaluate(base, data.anchor_test).psnr:16.2f}  {neutral.dri:12.3e}", flush=True)


if __name__ == "__main__":
    main()
