import json
from pathlib import Path

import pytest

from branchsim import __version__
from branchsim.cli import (EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, audit_run, bundled_configs, main,
                           new_run_dir, resolve_config)
from branchsim.config import ConfigError, MarkovModulated, MDependentBlockSum, parse_config

MINIMAL = """
[experiment]
kind = variance
seed = 3
n_list = 20
replicates = 50

[offspring]
law = poisson
a = 0.5

[immigration]
model = block_sum
m = 2
alpha = 1.0
"""


class TestParse:
    def test_minimal(self):
        cfg = parse_config(MINIMAL)
        assert cfg.kind == "variance" and cfg.seed == 3 and cfg.n_list == (20,)
        assert isinstance(cfg.process.immigration, MDependentBlockSum)
        assert cfg.process.drift.a == 0.5 and cfg.process.m == 2

    @pytest.mark.parametrize("name", sorted(["example1", "example2", "theorem2", "lemma1", "markov",
                                             "critical", "lemmas456", "smoke"]))
    def test_bundled_configs_load(self, name):
        assert name in bundled_configs()
        assert resolve_config(name).process is not None

    def test_markov_targets(self):
        cfg = resolve_config("markov")
        imm = cfg.process.immigration
        assert isinstance(imm, MarkovModulated)
        assert cfg.process.beta_seq.index == 2.0

    @pytest.mark.parametrize("edit, where", [
        (("kind = variance", "kind = fourier"), "experiment.kind"),
        (("seed = 3", "seed = -1"), "experiment.seed"),
        (("n_list = 20", "n_list = 40, 20"), "experiment.n_list"),
        (("n_list = 20", "n_list = 2.5"), "experiment.n_list"),
        (("law = poisson", "law = cauchy"), "offspring.law"),
        (("model = block_sum", "model = fractal"), "immigration.model"),
        (("alpha = 1.0", "alpha = -1.0"), "immigration.alpha"),
        (("m = 2", "m = 2\nbogus = 1"), "immigration"),
        (("replicates = 50", "replicates = many"), "experiment.replicates"),
    ])
    def test_errors_name_the_key(self, edit, where):
        with pytest.raises(ConfigError) as exc:
            parse_config(MINIMAL.replace(*edit))
        assert exc.value.where.startswith(where)

    def test_missing_seed(self):
        with pytest.raises(ConfigError, match="seed"):
            parse_config(MINIMAL.replace("seed = 3\n", ""))

    def test_markov_validation_surfaces_as_config_error(self):
        text = MINIMAL.replace("model = block_sum", "model = markov\ntransition = 1 0 | 0 1\nlevels = 1 2")
        with pytest.raises(ConfigError, match="Doeblin"):
            parse_config(text)

    def test_canonical_text_carries_effective_seed(self):
        cfg = parse_config(MINIMAL)
        other = cfg.with_overrides(seed=99)
        assert "seed = 99" in other.canonical_text()
        assert cfg.sha256() != other.sha256()
        assert cfg.sha256() == parse_config(MINIMAL).sha256()

    def test_unknown_reference(self):
        with pytest.raises(ConfigError, match="bundled"):
            resolve_config("no-such-config")


class TestRunDirectory:
    def test_append_only(self, tmp_path):
        a, b = new_run_dir(tmp_path), new_run_dir(tmp_path)
        assert (a.name, b.name) == ("run-0001", "run-0002")
        (tmp_path / "run-0007").mkdir()
        assert new_run_dir(tmp_path).name == "run-0008"


class TestMain:
    def write_cfg(self, tmp_path, text=MINIMAL):
        p = tmp_path / "exp.cfg"
        p.write_text(text)
        return str(p)

    def test_run_pass_and_manifest(self, tmp_path, capsys):
        code = main(["run", "--config", self.write_cfg(tmp_path), "--out", str(tmp_path / "out")])
        assert code == EXIT_PASS
        run = tmp_path / "out" / "run-0001"
        manifest = json.loads((run / "manifest.json").read_text())
        assert manifest["verdict"] == "pass" and manifest["tool_version"] == __version__
        assert {f["path"] for f in manifest["files"]} == {
            "config.cfg", "reports.csv", "summary.txt", "moment_tables_n20.csv"}
        assert audit_run(run) == []
        header = (run / "reports.csv").read_text().splitlines()[0]
        assert header == f"# seed=3 config_sha256={manifest['config_sha256']}"
        assert "PASS" in capsys.readouterr().out

    def test_audit_detects_tampering(self, tmp_path):
        main(["run", "--config", self.write_cfg(tmp_path), "--out", str(tmp_path)])
        run = tmp_path / "run-0001"
        (run / "extra.csv").write_text("x\n")
        with open(run / "reports.csv", "a") as fh:
            fh.write("tampered\n")
        problems = audit_run(run)
        assert "orphan file extra.csv" in problems and "hash mismatch reports.csv" in problems
        (run / "manifest.json").unlink()
        assert audit_run(run) == ["missing manifest (incomplete run)"]

    def test_seed_override(self, tmp_path):
        main(["run", "--config", self.write_cfg(tmp_path), "--out", str(tmp_path), "--seed", "11"])
        assert "seed = 11" in (tmp_path / "run-0001" / "config.cfg").read_text()

    def test_failure_exit_code(self, tmp_path):
        # theorem1 with an unreachable threshold fails honestly
        text = MINIMAL.replace("kind = variance", "kind = theorem1").replace(
            "n_list = 20", "n_list = 50, 100\nthreshold = 1e-9\nprobes = 100, 1000, 10000")
        assert main(["run", "--config", self.write_cfg(tmp_path, text), "--out", str(tmp_path)]) == EXIT_FAIL
        assert json.loads((tmp_path / "run-0001" / "manifest.json").read_text())["verdict"] == "fail"
        assert list((tmp_path / "run-0001").glob("*.svg"))

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = self.write_cfg(tmp_path, MINIMAL.replace("law = poisson", "law = cauchy"))
        assert main(["run", "--config", bad, "--out", str(tmp_path)]) == EXIT_CONFIG
        assert "offspring.law" in capsys.readouterr().err

    def test_precondition_exit_code(self, tmp_path):
        text = resolve_config("example1").text.replace("kind = theorem1", "kind = theorem2")
        assert main(["run", "--config", self.write_cfg(tmp_path, text), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_curves(self, tmp_path):
        assert main(["curves", "--config", "theorem2", "--out", str(tmp_path)]) == EXIT_PASS
        run = tmp_path / "run-0001"
        assert len(list(run.glob("curve_*.csv"))) == 7 and len(list(run.glob("*.svg"))) == 7
        assert audit_run(run) == []

    def test_conditions(self, tmp_path):
        assert main(["conditions", "--config", "example1", "--out", str(tmp_path)]) == EXIT_FAIL
        rows = (tmp_path / "run-0001" / "conditions.csv").read_text()
        assert "C5" in rows and "violated" in rows
        assert main(["conditions", "--config", "example2", "--out", str(tmp_path)]) == EXIT_PASS

    def test_bad_thread_count(self, tmp_path):
        assert main(["run", "--config", self.write_cfg(tmp_path), "--out", str(tmp_path),
                     "--threads", "0"]) == EXIT_CONFIG
