"""Command-line front end.

Every subcommand reads an experiment config (see :mod:`drikit.config`) and
writes under the output root (``--out``, else ``output.dir``, else the
``DRIKIT_OUT`` environment variable, else ``./drikit-out``)::

    <out>/dataset/          synth      PNGs + manifest.txt
    <out>/dri/              dri        trace.csv, result.txt
    <out>/sweep/            sweep      sweep.csv, trace_r<r>.csv, summary.txt
    <out>/dpd/              dpd        trace.csv, decision.txt

Exit codes: 0 success (for ``dpd``: beneficial), 1 ``dpd`` not beneficial,
2 any error.  Artifacts contain the config echo and no timestamps, so reruns
with the same config and seed are byte-identical.
"""
from __future__ import annotations

import argparse
import logging
import shutil
import sys
from pathlib import Path

from .analysis import SweepResult, decide, make_report, proportion_sweep, summary_text, trace_filename
from .config import ExperimentConfig, load_config
from .degrade import MANIFEST, build_paired_dataset, load_dataset, save_dataset
from .dri import DriData, DriTrace, run_dri
from .errors import ConfigError, DegenerateLossError, FormatError, InvalidArgumentError, ReportError
from .models import init_model

EXIT_OK = 0
EXIT_NOT_BENEFICIAL = 1
EXIT_ERROR = 2

log = logging.getLogger("drikit")


class CliError(Exception):
    pass


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = cfg.with_output(args.out)
    return cfg


def _prepare(dir_: Path, force):
    """Create an output directory; refuse to overwrite a non-empty one without ``--force``."""
    if dir_.exists() and any(dir_.iterdir()):
        if not force:
            raise CliError(f"{dir_} already exists and is not empty; pass --force to overwrite")
        shutil.rmtree(dir_)
    dir_.mkdir(parents=True, exist_ok=True)
    return dir_


def _data(cfg: ExperimentConfig):
    root = cfg.dataset_root()
    if not (root / MANIFEST).is_file():
        raise CliError(f"no dataset at {root} (missing {MANIFEST}); run 'drikit synth' first")
    ds = load_dataset(root)
    expected = {"seed": cfg.seed, "size": cfg.size, "counts": cfg.counts, "params": cfg.dataset_params}
    found = {"seed": ds.seed, "size": ds.size, "counts": ds.counts(), "params": ds.params}
    stale = [k for k in expected if expected[k] != found[k]]
    if stale:
        detail = "; ".join(f"{k}: config {expected[k]!r}, dataset {found[k]!r}" for k in stale)
        raise CliError(f"dataset at {root} was synthesized with different settings ({detail}); "
                       "rerun 'drikit synth --force'")
    for kind in {cfg.anchor, cfg.auxiliary}:
        if kind not in ds.kinds:
            raise CliError(f"dataset at {root} has no {kind!r} images (kinds: {', '.join(ds.kinds)})")
    return DriData.from_dataset(ds, cfg.anchor, cfg.auxiliary, cfg.self_auxiliary)


def cmd_synth(cfg: ExperimentConfig, force=False):
    root = _prepare(cfg.dataset_root(), force)
    ds = build_paired_dataset(cfg.kinds, cfg.counts, cfg.size, cfg.seed, cfg.channels, cfg.dataset_params)
    save_dataset(ds, root, cfg.echo())
    print(f"wrote {len(ds.clean)} clean images x {len(ds.kinds)} kinds to {root}")
    return EXIT_OK


def cmd_dri(cfg: ExperimentConfig, force=False):
    data = _data(cfg)
    out = _prepare(cfg.out_root() / "dri", force)
    res = run_dri(init_model(cfg.model), data, cfg.dri, cfg.seed, cfg.echo())
    res.trace.write(out / "trace.csv")
    lines = [f"# {e}" for e in cfg.echo()]
    lines += [f"loss_source = {res.loss_source}", f"carrier = {res.carrier}",
              f"steps_used = {res.steps_used}", f"total_steps = {res.total_steps}", f"dri = {res.dri!r}"]
    (out / "result.txt").write_text("\n".join(lines) + "\n")
    print(f"DRI = {res.dri!r} over {res.steps_used} sampled steps ({res.loss_source} loss)")
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, force=False, jobs=1):
    data = _data(cfg)
    out = _prepare(cfg.out_root() / "sweep", force)
    partial = SweepResult(echo=cfg.echo())

    def persist(row, res):
        # partial results survive a later failure
        partial.rows.append(row)
        res.trace.write(out / trace_filename(row.r))
        (out / "sweep.partial.csv").write_text(partial.to_csv())

    sweep = proportion_sweep(cfg.model, data, cfg.proportions, cfg.dri, cfg.eval_steps,
                             seed=cfg.seed, jobs=jobs, echo=cfg.echo(), on_row=persist)
    make_report(sweep, out, cfg.dri.carrier)
    (out / "sweep.partial.csv").unlink(missing_ok=True)
    print(summary_text(sweep, cfg.dri.carrier), end="")
    return EXIT_OK


def cmd_dpd(cfg: ExperimentConfig, force=False):
    data = _data(cfg)
    out = _prepare(cfg.out_root() / "dpd", force)
    res = run_dri(init_model(cfg.model), data, cfg.dri, cfg.seed, cfg.echo())
    decision = decide(res.dri, cfg.dri, res.trace)
    res.trace.write(out / "trace.csv")
    lines = [f"# {e}" for e in cfg.echo()]
    lines += [f"proportion = {cfg.dri.proportion!r}", f"carrier = {cfg.dri.carrier}",
              f"dri = {decision.dri!r}", f"beneficial = {str(decision.beneficial).lower()}",
              f"neutral = {str(decision.neutral).lower()}"]
    (out / "decision.txt").write_text("\n".join(lines) + "\n")
    print(decision.summary())
    return EXIT_OK if decision.beneficial else EXIT_NOT_BENEFICIAL


def cmd_validate(cfg: ExperimentConfig):
    print("config OK")
    for line in cfg.echo():
        print(f"  {line}")
    return EXIT_OK


def cmd_report(cfg: ExperimentConfig):
    """Rebuild ``summary.txt`` from an existing sweep directory."""
    out = cfg.out_root() / "sweep"
    path = out / "sweep.csv"
    if not path.is_file():
        raise CliError(f"no sweep results at {path}; run 'drikit sweep' first")
    sweep = SweepResult.from_csv(path.read_text())
    for row in sweep.rows:
        tp = out / trace_filename(row.r)
        if tp.is_file():
            sweep.traces[row.r] = DriTrace.read(tp)
    make_report(sweep, out, cfg.dri.carrier)
    print(summary_text(sweep, cfg.dri.carrier), end="")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="drikit", description="Degradation relationship experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "synth": "synthesize the paired dataset",
        "dri": "run one DRI measurement and write its trace",
        "sweep": "sweep proportions, train, evaluate and report",
        "dpd": "decide whether the configured proportion helps (exit 0) or not (exit 1)",
        "validate": "check a config file and print its canonical form",
        "report": "rebuild the summary of an existing sweep",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", help="output root (overrides output.dir and $DRIKIT_OUT)")
        p.add_argument("--seed", type=int, help="override experiment.seed")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        p.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        if args.jobs < 1:
            raise CliError(f"--jobs must be >= 1, got {args.jobs}")
        cfg = _config(args)
        if args.command == "validate":
            return cmd_validate(cfg)
        if args.command == "report":
            return cmd_report(cfg)
        if args.command == "synth":
            return cmd_synth(cfg, args.force)
        if args.command == "dri":
            return cmd_dri(cfg, args.force)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.force, args.jobs)
        return cmd_dpd(cfg, args.force)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_ERROR
    except (CliError, InvalidArgumentError, FormatError, DegenerateLossError, ReportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
