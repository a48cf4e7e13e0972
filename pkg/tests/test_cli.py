import hashlib

import pytest

from drikit.cli import EXIT_ERROR, EXIT_NOT_BENEFICIAL, EXIT_OK, main
from drikit.config import FIELDS, parse_config
from drikit.degrade import dataset_digest
from drikit.errors import ConfigError

MINIMAL = "experiment.anchor = haze\nexperiment.auxiliary = noise\n"

SMALL = MINIMAL + """
data.kinds = noise, haze, rain, snow
data.train = 12
data.val = 4
data.test = 4
data.size = 16
model.widths = 4
sgd.steps = 6
sgd.batch = 4
sweep.eval_steps = 3
"""


def write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def digest_dir(path):
    h = hashlib.sha256()
    for p in sorted(q for q in path.rglob("*") if q.is_file()):
        h.update(p.relative_to(path).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()


class TestConfig:
    def test_minimal(self):
        cfg = parse_config(MINIMAL)
        assert cfg.anchor == "haze" and cfg.kinds == ("haze", "noise")
        assert cfg.dri.carrier == "mixed" and cfg.dri.proportion == 0.1

    def test_every_key_in_echo(self):
        cfg = parse_config(MINIMAL)
        keys = {line.split(" = ")[0] for line in cfg.echo()}
        assert keys == set(FIELDS) - {"data.dir", "output.dir"}

    def test_echo_reparses_to_same(self):
        cfg = parse_config(SMALL + "dri.schedule = first:0.3\n")
        again = parse_config("\n".join(cfg.echo()))
        assert again == cfg and again.echo() == cfg.echo()

    def test_range_diagnostic(self):
        with pytest.raises(ConfigError) as info:
            parse_config(MINIMAL + "dri.proportion = 1.2\n")
        assert "<config>:3" in info.value.diagnostics[0] and "dri.proportion" in info.value.diagnostics[0]

    def test_self_aux_flag_named(self):
        with pytest.raises(ConfigError) as info:
            parse_config("experiment.anchor = noise\nexperiment.auxiliary = noise\n")
        assert "experiment.self_auxiliary" in str(info.value)
        parse_config("experiment.anchor = noise\nexperiment.auxiliary = noise\nexperiment.self_auxiliary = true\n")

    def test_all_problems_reported(self):
        text = MINIMAL + "bogus.key = 1\nsgd.lr = -1\nmodel.kernel_size = 4\nnot a pair\nsgd.lr = 2\n"
        with pytest.raises(ConfigError) as info:
            parse_config(text)
        msgs = "\n".join(info.value.diagnostics)
        assert "unknown key 'bogus.key'" in msgs and ":3:" in msgs
        assert "expected 'key = value'" in msgs and "duplicate key 'sgd.lr'" in msgs
        assert "sgd.lr" in msgs

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="experiment.auxiliary"):
            parse_config("experiment.anchor = haze\n")

    def test_unlisted_kind(self):
        with pytest.raises(ConfigError, match="'noise' is referenced"):
            parse_config(MINIMAL + "data.kinds = haze, rain\n")

    def test_comments_and_blanks(self):
        cfg = parse_config("# header\n\n" + MINIMAL + "  sgd.lr   =   0.25  \n")
        assert cfg.dri.sgd.learning_rate == 0.25

    def test_adversarial_anchor_refused(self):
        with pytest.raises(ConfigError):
            parse_config("experiment.anchor = adversarial\nexperiment.auxiliary = noise\n")

    def test_proportions_include_baseline(self):
        assert parse_config(MINIMAL + "sweep.proportions = 0.5, 0.1\n").proportions == (0.0, 0.1, 0.5)


class TestCli:
    def test_validate(self, tmp_path, capsys):
        assert main(["validate", "--config", write(tmp_path, MINIMAL)]) == EXIT_OK
        assert "config OK" in capsys.readouterr().out

    def test_validate_bad(self, tmp_path, capsys):
        assert main(["validate", "--config", write(tmp_path, MINIMAL + "dri.proportion = 1.2\n")]) == EXIT_ERROR
        assert "dri.proportion" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["validate", "--config", str(tmp_path / "nope.cfg")]) == EXIT_ERROR

    def test_synth_counts_and_refusal(self, tmp_path, capsys):
        cfg = write(tmp_path, SMALL)
        out = tmp_path / "o"
        assert main(["synth", "--config", cfg, "--out", str(out)]) == EXIT_OK
        files = [p for p in (out / "dataset").rglob("*.png")]
        assert len(files) == 20 + 4 * 20
        assert (out / "dataset" / "manifest.txt").is_file()
        assert main(["synth", "--config", cfg, "--out", str(out)]) == EXIT_ERROR
        assert "--force" in capsys.readouterr().err

    def test_synth_regenerates_bitwise(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        main(["synth", "--config", cfg, "--out", str(tmp_path / "a")])
        first = dataset_digest(tmp_path / "a" / "dataset")
        assert main(["synth", "--config", cfg, "--out", str(tmp_path / "a"), "--force"]) == EXIT_OK
        assert dataset_digest(tmp_path / "a" / "dataset") == first

    def test_missing_dataset(self, tmp_path, capsys):
        assert main(["dri", "--config", write(tmp_path, SMALL), "--out", str(tmp_path / "o")]) == EXIT_ERROR
        assert str(tmp_path / "o" / "dataset") in capsys.readouterr().err

    def test_dpd_r0_exit_1_neutral(self, tmp_path, capsys):
        cfg = write(tmp_path, SMALL + "dri.proportion = 0\n")
        out = str(tmp_path / "o")
        main(["synth", "--config", cfg, "--out", out])
        assert main(["dpd", "--config", cfg, "--out", out]) == EXIT_NOT_BENEFICIAL
        text = (tmp_path / "o" / "dpd" / "decision.txt").read_text()
        assert "neutral = true" in text and "beneficial = false" in text
        assert text.startswith("# ")

    def test_out_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DRIKIT_OUT", str(tmp_path / "env"))
        assert main(["synth", "--config", write(tmp_path, SMALL)]) == EXIT_OK
        assert (tmp_path / "env" / "dataset" / "manifest.txt").is_file()

    def test_sweep_six_rows_and_replay(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        for out in ("a", "b"):
            o = str(tmp_path / out)
            assert main(["synth", "--config", cfg, "--out", o]) == EXIT_OK
            assert main(["sweep", "--config", cfg, "--out", o]) == EXIT_OK
        lines = [ln for ln in (tmp_path / "a" / "sweep" / "sweep.csv").read_text().splitlines()
                 if not ln.startswith("#")]
        assert len(lines) == 1 + 6
        assert digest_dir(tmp_path / "a" / "sweep") == digest_dir(tmp_path / "b" / "sweep")
        assert not (tmp_path / "a" / "sweep" / "sweep.partial.csv").exists()

    def test_report_rebuilds_summary(self, tmp_path):
        cfg = write(tmp_path, SMALL + "sweep.proportions = 0.5\n")
        o = str(tmp_path / "o")
        main(["synth", "--config", cfg, "--out", o])
        main(["sweep", "--config", cfg, "--out", o])
        summary = tmp_path / "o" / "sweep" / "summary.txt"
        before = summary.read_text()
        summary.unlink()
        assert main(["report", "--config", cfg, "--out", o]) == EXIT_OK
        assert summary.read_text() == before

    def test_dri_seed_override(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        o = str(tmp_path / "o")
        main(["synth", "--config", cfg, "--out", o])
        assert main(["dri", "--config", cfg, "--out", o]) == EXIT_OK
        first = (tmp_path / "o" / "dri" / "trace.csv").read_text()
        assert main(["dri", "--config", cfg, "--out", o, "--force", "--seed", "0"]) == EXIT_OK
        assert (tmp_path / "o" / "dri" / "trace.csv").read_text() == first

    def test_dataset_seed_mismatch(self, tmp_path, capsys):
        cfg = write(tmp_path, SMALL)
        o = str(tmp_path / "o")
        main(["synth", "--config", cfg, "--out", o])
        assert main(["dri", "--config", cfg, "--out", o, "--seed", "5"]) == EXIT_ERROR
        assert "seed" in capsys.readouterr().err

    def test_dataset_untouched(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        o = str(tmp_path / "o")
        main(["synth", "--config", cfg, "--out", o])
        before = dataset_digest(tmp_path / "o" / "dataset")
        for cmd in ("dri", "dpd", "sweep"):
            main([cmd, "--config", cfg, "--out", o])
        assert dataset_digest(tmp_path / "o" / "dataset") == before

    def test_bad_jobs(self, tmp_path):
        assert main(["sweep", "--config", write(tmp_path, SMALL), "--jobs", "0"]) == EXIT_ERROR
