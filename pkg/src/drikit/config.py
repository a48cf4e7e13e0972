"""Experiment configuration files.

Grammar (one entry per line)::

    # comment            blank lines and lines starting with '#' are ignored
    section.key = value  whitespace around '=' is ignored

Lists are comma separated (``sweep.proportions = 0, 0.1, 0.3``), booleans are
``true``/``false``.  Unknown keys, duplicate keys and out-of-range values are
all reported together, each tagged with its line number; nothing is applied
unless the whole file is valid.

Keys and defaults:

=========================  =====================  ==========================================
key                        default                meaning
=========================  =====================  ==========================================
experiment.anchor          (required)             anchor degradation kind
experiment.auxiliary       (required)             auxiliary degradation kind
experiment.self_auxiliary  false                  allow anchor == auxiliary (independent redraw)
experiment.seed            0                      global seed
data.dir                   <output.dir>/dataset   dataset directory
data.kinds                 anchor,auxiliary       kinds to synthesize
data.train/val/test        200 / 32 / 32          image counts per split
data.size                  24                     image side in pixels
data.channels              3                      1 or 3
data.sigma                 15                     noise sigma on the 0-255 scale
data.beta_range            0.6, 1.8               haze scattering range
data.airlight_range        0.7, 1.0               haze atmospheric light range
data.depth_mode            radial                 constant, linear or radial
model.widths               16, 16                 hidden conv widths
model.kernel_size          3                      odd kernel size
model.zero_final           true                   start as the identity restorer
model.centered             true                   feed x - 0.5 to the correction branch
sgd.lr                     0.01                   learning rate
sgd.steps                  2500                   DRI steps
sgd.batch                  10                     batch size
dri.proportion             0.1                    auxiliary proportion r
dri.carrier                mixed                  mixed, anchor or dual
dri.schedule               every:1                every:k, first:f, middle:f, final:f
dri.loss                   validation             validation or training
dri.epsilon                1e-12                  base-loss guard
dri.sampling               replacement            replacement or epoch
dri.mixing                 fixed                  fixed or bernoulli
dri.probe_size             32                     training-loss probe size
dri.probe_mode             holdout                holdout or in-pool
sweep.proportions          0,0.1,0.3,0.5,0.7,0.9  proportions; 0 is always added
sweep.eval_steps           2500                   extra training before evaluation
output.dir                 drikit-out             output root (falls back to $DRIKIT_OUT)
=========================  =====================  ==========================================
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .degrade import DEPTH_MODES, KINDS, DatasetParams
from .dri import CARRIERS, LOSS_SOURCES, PROBE_MODES, DriConfig, Schedule
from .errors import ConfigError, InvalidArgumentError
from .mixer import MIXING_MODES, SAMPLING_MODES
from .models import ModelConfig
from .numcore import SgdConfig

OUT_ENV = "DRIKIT_OUT"
DEFAULT_OUT = "drikit-out"


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _kinds(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


def _range(parse, lo=None, hi=None, lo_open=False):
    def check(text):
        v = parse(text)
        for x in (v if isinstance(v, tuple) else (v,)):
            if lo is not None and (x <= lo if lo_open else x < lo):
                raise ValueError(f"value {x!r} must be {'>' if lo_open else '>='} {lo}")
            if hi is not None and x > hi:
                raise ValueError(f"value {x!r} must be <= {hi}")
        return v
    return check


def _pair(parse):
    def check(text):
        v = parse(text)
        if len(v) != 2 or v[0] > v[1]:
            raise ValueError(f"expected 'low, high' with low <= high, got {text!r}")
        return v
    return check


def _schedule(text):
    try:
        return Schedule.parse(text)
    except InvalidArgumentError as exc:
        raise ValueError(str(exc)) from exc


# key -> (parser, default); ``None`` default means required
FIELDS = {
    "experiment.anchor": (_choice(KINDS), None),
    "experiment.auxiliary": (_choice(KINDS), None),
    "experiment.self_auxiliary": (_bool, False),
    "experiment.seed": (_range(int, 0), 0),
    "data.dir": (str, None),
    "data.kinds": (_kinds, None),
    "data.train": (_range(int, 1), 200),
    "data.val": (_range(int, 1), 32),
    "data.test": (_range(int, 0), 32),
    "data.size": (_range(int, 16), 24),
    "data.channels": (_choice(("1", "3")), "3"),
    "data.sigma": (_range(float, 0), 15.0),
    "data.beta_range": (_pair(_range(_floats, 0)), (0.6, 1.8)),
    "data.airlight_range": (_pair(_range(_floats, 0, 1, lo_open=True)), (0.7, 1.0)),
    "data.depth_mode": (_choice(DEPTH_MODES), "radial"),
    "model.widths": (_range(_ints, 1), (16, 16)),
    "model.kernel_size": (_range(int, 1), 3),
    "model.zero_final": (_bool, True),
    "model.centered": (_bool, True),
    "sgd.lr": (_range(float, 0, lo_open=True), 0.01),
    "sgd.steps": (_range(int, 1), 2500),
    "sgd.batch": (_range(int, 1), 10),
    "dri.proportion": (_range(float, 0, 1), 0.1),
    "dri.carrier": (_choice(CARRIERS), "mixed"),
    "dri.schedule": (_schedule, Schedule()),
    "dri.loss": (_choice(LOSS_SOURCES), "validation"),
    "dri.epsilon": (_range(float, 0, lo_open=True), 1e-12),
    "dri.sampling": (_choice(SAMPLING_MODES), "replacement"),
    "dri.mixing": (_choice(MIXING_MODES), "fixed"),
    "dri.probe_size": (_range(int, 1), 32),
    "dri.probe_mode": (_choice(PROBE_MODES), "holdout"),
    "sweep.proportions": (_range(_floats, 0, 1), (0.0, 0.1, 0.3, 0.5, 0.7, 0.9)),
    "sweep.eval_steps": (_range(int, 0), 2500),
    "output.dir": (str, None),
}
OPTIONAL_NONE = {"data.dir", "data.kinds", "output.dir"}


@dataclass(frozen=True)
class ExperimentConfig:
    anchor: str
    auxiliary: str
    self_auxiliary: bool = False
    seed: int = 0
    data_dir: str | None = None
    kinds: tuple = ()
    counts: dict = field(default_factory=lambda: {"train": 200, "val": 32, "test": 32})
    size: int = 24
    channels: int = 3
    dataset_params: DatasetParams = field(default_factory=DatasetParams)
    model: ModelConfig = field(default_factory=ModelConfig)
    dri: DriConfig = field(default_factory=lambda: DriConfig(SgdConfig(0.1, 1000, 10)))
    proportions: tuple = (0.0, 0.1, 0.3, 0.5, 0.7, 0.9)
    eval_steps: int = 1000
    output_dir: str | None = None
    values: dict = field(default_factory=dict, compare=False)  # canonical key -> text, for the echo

    def out_root(self):
        if self.output_dir is not None:
            return Path(self.output_dir)
        return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))

    def dataset_root(self):
        return Path(self.data_dir) if self.data_dir is not None else self.out_root() / "dataset"

    def with_seed(self, seed):
        return parse_config(_render({**self.values, "experiment.seed": str(int(seed))}))

    def with_output(self, out):
        return parse_config(_render({**self.values, "output.dir": str(out)}))

    def echo(self):
        """Canonical ``key = value`` lines, sorted; the output location is left out so
        artifacts do not depend on where they were written."""
        return [f"{k} = {self.values[k]}" for k in sorted(self.values) if k != "output.dir"]


def _render(values):
    return "\n".join(f"{k} = {v}" for k, v in values.items()) + "\n"


def _canonical(key, value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text, source="<config>"):
    """Parse and validate config text; raises :class:`ConfigError` listing every problem."""
    diags, raw, lines_of = [], {}, {}
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        key, sep, val = s.partition("=")
        key, val = key.strip(), val.strip()
        if not sep:
            diags.append(f"{source}:{no}: expected 'key = value', got {s!r}")
        elif key not in FIELDS:
            diags.append(f"{source}:{no}: unknown key {key!r}")
        elif key in raw:
            diags.append(f"{source}:{no}: duplicate key {key!r} (first set on line {lines_of[key]})")
        else:
            raw[key], lines_of[key] = val, no

    parsed = {}
    for key, (parse, default) in FIELDS.items():
        if key in raw:
            try:
                parsed[key] = parse(raw[key])
            except ValueError as exc:
                diags.append(f"{source}:{lines_of[key]}: {key}: {exc}")
        elif default is None and key not in OPTIONAL_NONE:
            diags.append(f"{source}: missing required key {key!r}")
        else:
            parsed[key] = default

    anchor, aux = parsed.get("experiment.anchor"), parsed.get("experiment.auxiliary")
    where = lambda k: f"{source}:{lines_of[k]}" if k in lines_of else source  # noqa: E731
    if anchor is not None and aux is not None:
        if anchor == aux and not parsed.get("experiment.self_auxiliary", False):
            diags.append(f"{where('experiment.auxiliary')}: anchor and auxiliary are both {anchor!r}; "
                         "set experiment.self_auxiliary = true to use an independent redraw")
        if anchor == "adversarial":
            diags.append(f"{where('experiment.anchor')}: 'adversarial' can only be the auxiliary kind")
        kinds = parsed.get("data.kinds")
        if kinds:
            for k in kinds:
                if k not in KINDS:
                    diags.append(f"{where('data.kinds')}: unknown kind {k!r}")
            for k in {anchor, aux} - set(kinds):
                diags.append(f"{where('data.kinds')}: kind {k!r} is referenced but not listed")

    built = None
    if not diags:
        try:
            built = _build(parsed)
        except (InvalidArgumentError, ValueError) as exc:
            diags.append(f"{source}: {exc}")
    if diags:
        raise ConfigError(diags)
    return built


def _build(p):
    kinds = p["data.kinds"] or tuple(dict.fromkeys((p["experiment.anchor"], p["experiment.auxiliary"])))
    model = ModelConfig(widths=p["model.widths"], kernel_size=p["model.kernel_size"],
                        in_channels=int(p["data.channels"]), seed=p["experiment.seed"],
                        zero_final=p["model.zero_final"], centered=p["model.centered"])
    sgd = SgdConfig(p["sgd.lr"], p["sgd.steps"], p["sgd.batch"])
    dri = DriConfig(sgd, proportion=p["dri.proportion"], carrier=p["dri.carrier"], schedule=p["dri.schedule"],
                    loss_source=p["dri.loss"], epsilon=p["dri.epsilon"], sampling=p["dri.sampling"],
                    mixing=p["dri.mixing"], probe_size=p["dri.probe_size"], probe_mode=p["dri.probe_mode"])
    params = DatasetParams(sigma=p["data.sigma"], beta_range=p["data.beta_range"],
                           airlight_range=p["data.airlight_range"], depth_mode=p["data.depth_mode"],
                           adversarial_sigma=p["data.sigma"])
    props = tuple(sorted(set(p["sweep.proportions"]) | {0.0}))
    values = {k: _canonical(k, v) for k, v in p.items() if v is not None}
    values["data.kinds"] = ", ".join(kinds)
    return ExperimentConfig(
        anchor=p["experiment.anchor"], auxiliary=p["experiment.auxiliary"],
        self_auxiliary=p["experiment.self_auxiliary"], seed=p["experiment.seed"],
        data_dir=p["data.dir"], kinds=kinds,
        counts={"train": p["data.train"], "val": p["data.val"], "test": p["data.test"]},
        size=p["data.size"], channels=int(p["data.channels"]), dataset_params=params,
        model=model, dri=dri, proportions=props, eval_steps=p["sweep.eval_steps"],
        output_dir=p["output.dir"], values=values)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config: {exc.strerror or exc}"]) from exc
    return parse_config(text, str(path))
