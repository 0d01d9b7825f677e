"""Config files: parsing, validation anchors, mode rules, provenance echo."""

import dataclasses

import pytest

from svebm.config import (IB_DEFAULT_LAM, RunConfig, parse_config,
                          write_config)
from svebm.errors import ConfigError


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


FULL = """\
# training run for the two-dimensional mixture
run.mode = ib-ebm
run.out = runs/eight

data.train = data/eight.tsv
data.labeled_fraction = 0.1

model.modality = points
model.latent_dim = 2
model.n_categories = 8
model.enc_hidden = 64,32

train.iterations = 3000
train.lam = 25
train.batch_unlabeled = 128

langevin.step_size = 0.08
langevin.n_steps = 40

eval.metrics = homogeneity,matched_accuracy
eval.sample_count = 500
"""


class TestParsing:

    def test_full_file(self, tmp_path):
        rc, seen = parse_config(write(tmp_path, FULL))
        assert rc.mode == "ib-ebm"
        assert rc.out == "runs/eight"
        assert rc.data.train == "data/eight.tsv"
        assert rc.data.labeled_fraction == 0.1
        assert rc.model.n_categories == 8
        assert rc.model.enc_hidden == (64, 32)
        assert rc.train.iterations == 3000
        assert rc.train.lam == 25.0
        assert rc.train.langevin.step_size == 0.08
        assert rc.train.langevin.n_steps == 40
        assert rc.eval.metrics == ("homogeneity", "matched_accuracy")
        assert rc.eval.sample_count == 500
        assert "train.lam" in seen and "run.mode" in seen

    def test_empty_file_is_all_defaults(self, tmp_path):
        rc, seen = parse_config(write(tmp_path, "# nothing here\n\n"))
        assert seen == set()
        assert rc == RunConfig()

    def test_unparsed_keys_keep_defaults(self, tmp_path):
        rc, _ = parse_config(write(tmp_path, "model.latent_dim = 5\n"))
        assert rc.model.latent_dim == 5
        assert rc.model.n_categories == RunConfig().model.n_categories
        assert rc.train.iterations == RunConfig().train.iterations

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            parse_config(tmp_path / "absent.cfg")
        assert "absent.cfg" in str(err.value)

    def test_boolean_values(self, tmp_path):
        rc, _ = parse_config(write(tmp_path, "train.labeled_elbo = true\n"))
        assert rc.train.labeled_elbo is True
        rc, _ = parse_config(write(tmp_path, "train.labeled_elbo = no\n"))
        assert rc.train.labeled_elbo is False
        with pytest.raises(ConfigError) as err:
            parse_config(write(tmp_path, "train.labeled_elbo = maybe\n"))
        assert "boolean" in str(err.value)


class TestAnchors:
    """Every rejection names the file and the offending line."""

    def check(self, tmp_path, text, bad_line, *needles):
        p = write(tmp_path, text)
        with pytest.raises(ConfigError) as err:
            parse_config(p)
        msg = str(err.value)
        assert f"{p}:{bad_line}" in msg
        for needle in needles:
            assert needle in msg

    def test_line_without_assignment(self, tmp_path):
        self.check(tmp_path, "run.mode = svebm\njust words\n", 2)

    def test_key_without_section(self, tmp_path):
        self.check(tmp_path, "iterations = 50\n", 1, "section")

    def test_unknown_section(self, tmp_path):
        self.check(tmp_path, "\nsolver.tol = 3\n", 2, "solver")

    def test_unknown_key_lists_valid_names(self, tmp_path):
        self.check(tmp_path, "train.momentum = 0.9\n", 1,
                   "train.momentum", "iterations", "lam")

    def test_duplicate_key(self, tmp_path):
        self.check(tmp_path, "run.out = a\nrun.out = b\n", 2, "duplicate")

    def test_malformed_int(self, tmp_path):
        self.check(tmp_path, "train.iterations = soon\n", 1)

    def test_malformed_float(self, tmp_path):
        self.check(tmp_path, "langevin.step_size = fast\n", 1)

    def test_field_validation_names_the_file(self, tmp_path):
        p = write(tmp_path, "model.latent_dim = 0\n")
        with pytest.raises(ConfigError) as err:
            parse_config(p)
        assert str(p) in str(err.value)


class TestModeRules:

    def test_ib_mode_defaults_lam(self, tmp_path):
        rc, _ = parse_config(write(tmp_path, "run.mode = ib-ebm\n"))
        assert rc.train.lam == IB_DEFAULT_LAM

    def test_ib_mode_keeps_explicit_lam(self, tmp_path):
        rc, _ = parse_config(
            write(tmp_path, "run.mode = ib-ebm\ntrain.lam = 7\n"))
        assert rc.train.lam == 7.0

    def test_ib_mode_rejects_zero_lam(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            parse_config(write(tmp_path, "run.mode = ib-ebm\ntrain.lam = 0\n"))
        assert "lam" in str(err.value)

    def test_plain_mode_rejects_nonzero_lam(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            parse_config(write(tmp_path, "train.lam = 3\n"))
        assert "ib-ebm" in str(err.value)

    def test_unknown_mode(self, tmp_path):
        with pytest.raises(ConfigError) as err:
            parse_config(write(tmp_path, "run.mode = mystery\n"))
        assert "mystery" in str(err.value)


class TestEcho:

    def test_roundtrip_preserves_everything(self, tmp_path):
        rc, _ = parse_config(write(tmp_path, FULL))
        out = tmp_path / "echo.cfg"
        write_config(out, rc)
        back, _ = parse_config(out)
        assert back == rc

    def test_echo_covers_every_field(self, tmp_path):
        rc, _ = parse_config(write(tmp_path, ""))
        out = tmp_path / "echo.cfg"
        write_config(out, rc)
        keys = {line.split("=")[0].strip()
                for line in out.read_text().splitlines()}
        expect = {"run.mode", "run.out",
                  "langevin.step_size", "langevin.n_steps"}
        for sec, obj in (("data", rc.data), ("model", rc.model),
                         ("train", rc.train), ("eval", rc.eval)):
            for f in dataclasses.fields(obj):
                if f.name != "langevin":
                    expect.add(f"{sec}.{f.name}")
        assert keys == expect
