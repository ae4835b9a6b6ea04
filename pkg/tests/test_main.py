"""Tests for the densketch command line."""

import io
import json
from pathlib import Path

import pytest

from densketch.__main__ import (
    EXIT_DATA,
    EXIT_OK,
    EXIT_SAMPLER,
    EXIT_USAGE,
    build_parser,
    build_run_config,
    main,
    run,
)
from densketch.config import Config, RunConfig
from densketch.report import ReportWriter, read_records
from densketch.sketch import RecoveryFailure, SparseRecovery

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def _isolated_config(monkeypatch, tmp_path):
    """Keep the user's config file and seed variable out of CLI runs."""
    monkeypatch.delenv("DENSKETCH_SEED", raising=False)
    monkeypatch.setenv("HOME", str(tmp_path))


def _run(**kwargs) -> tuple[int, list[dict]]:
    buf = io.StringIO()
    status = run(RunConfig(**kwargs), ReportWriter(stream=buf))
    return status, [json.loads(line) for line in buf.getvalue().splitlines()]


def _main(argv: list[str], capsys) -> tuple[int, str]:
    with pytest.raises(SystemExit) as exc:
        main(argv)
    return exc.value.code, capsys.readouterr().out


class TestParser:
    """Tests for build_parser and build_run_config."""

    def test_flags_override_config(self):
        """Test explicit flags win over config values."""
        config = Config(seed=3, epsilon=0.25)
        args = build_parser().parse_args(["densest", "g.txt", "--seed", "0x2a", "--solver", "charikar"])
        run_config = build_run_config(args, config)
        assert run_config.seed == 42
        assert run_config.epsilon == 0.25
        assert run_config.solver == "charikar"
        assert run_config.input_path == "g.txt"

    def test_merge_collects_all_sketches(self):
        """Test every positional of merge is a sketch file."""
        args = build_parser().parse_args(["merge", "a.dskt", "b.dskt", "c.dskt"])
        run_config = build_run_config(args, Config())
        assert run_config.sketch_paths == ["a.dskt", "b.dskt", "c.dskt"]
        assert run_config.input_path is None

    def test_bench_rates(self):
        """Test --rates parses a comma-separated list into the bench config."""
        args = build_parser().parse_args(["bench", "g.txt", "--rates", "0.1,0.5", "--trials", "3"])
        run_config = build_run_config(args, Config())
        assert run_config.config.bench.rates == [0.1, 0.5]
        assert run_config.trials == 3


class TestExitCodes:
    """Tests for the mapping of failures to exit statuses."""

    def test_unknown_flag_is_usage_error(self, capsys):
        """Test argparse errors exit 1."""
        code, _ = _main(["densest", "--bogus"], capsys)
        assert code == EXIT_USAGE

    def test_no_input_is_usage_error(self):
        """Test a run without a stream or generator exits 1."""
        status, _ = _run(command="densest")
        assert status == EXIT_USAGE

    def test_missing_file_is_data_error(self, tmp_path):
        """Test an unreadable stream file exits 2."""
        status, _ = _run(command="densest", input_path=str(tmp_path / "missing.txt"))
        assert status == EXIT_DATA

    def test_malformed_stream_is_data_error(self, tmp_path):
        """Test a parse error exits 2."""
        path = tmp_path / "bad.txt"
        path.write_text("n 3\n+ 0 0\n")
        status, _ = _run(command="densest", input_path=str(path))
        assert status == EXIT_DATA

    def test_turnstile_violation_is_data_error(self):
        """Test commands other than validate refuse a bad delete with exit 2."""
        status, records = _run(command="densest", input_path=str(FIXTURES / "bad_delete.txt"))
        assert status == EXIT_DATA
        assert records == []

    def test_sampler_failure(self, monkeypatch):
        """Test a sampler that cannot decode exits 3."""

        def stalled(self):
            raise RecoveryFailure("stalled", self.support)

        monkeypatch.setattr(SparseRecovery, "decode", stalled)
        status, _ = _run(command="sample", gen="er:n=20,p=0.3", sample_size=5)
        assert status == EXIT_SAMPLER


class TestValidate:
    """Tests for the validate command."""

    def test_valid_stream(self):
        """Test a strict-turnstile file validates with exit 0."""
        status, records = _run(command="validate", input_path=str(FIXTURES / "k4_tail.txt"))
        assert status == EXIT_OK
        assert records[0]["valid"] is True
        assert records[0]["events"] == 10

    def test_bad_delete_reports_index(self):
        """Test the first violation's index, reason and event are reported with exit 2."""
        status, records = _run(command="validate", input_path=str(FIXTURES / "bad_delete.txt"))
        assert status == EXIT_DATA
        record = records[0]
        assert record["valid"] is False
        assert record["index"] == 2
        assert record["event"] == ["-", 2, 3]
        assert "absent" in record["reason"]

    def test_generator_input_refused(self):
        """Test validate needs a file."""
        status, _ = _run(command="validate", gen="er:n=5,p=0.5")
        assert status == EXIT_USAGE


class TestCommands:
    """End-to-end runs of each command."""

    def test_densest_on_file(self):
        """Test the K4-with-tail fixture returns K4 at density 3/2."""
        status, records = _run(command="densest", input_path=str(FIXTURES / "k4_tail.txt"))
        assert status == EXIT_OK
        record = records[0]
        assert record["vertices"] == [0, 1, 2, 3]
        assert record["density"] == "3/2"
        assert record["p"] == "1"
        assert record["m"] == 8

    def test_densest_planted_cli(self, capsys):
        """Test the planted example run reports size, den_G and p."""
        code, out = _main(
            ["densest", "--gen", "planted:n=500,p=0.05,clique=30", "--C", "2000", "--seed", "1"],
            capsys,
        )
        assert code == EXIT_OK
        record = json.loads(out)
        assert record["C"] == 2000
        assert record["size"] == len(record["vertices"])
        assert record["density"] is not None
        assert record["p"] != "1"

    def test_densest_stream_mode(self):
        """Test --stream samples through the sketch and still reports den_G."""
        status, records = _run(
            command="densest", gen="churn:n=40,events=1500,live=200", sample_size=60, stream=True, seed=4
        )
        assert status == EXIT_OK
        record = records[0]
        assert record["stream"] is True
        assert record["C"] == 60
        assert record["density"] is not None

    def test_densest_stream_mode_formula_c(self):
        """Test --stream without --C keeps every edge of a small graph through one level."""
        status, records = _run(command="densest", gen="er:n=30,p=0.2", stream=True, seed=4)
        assert status == EXIT_OK
        record = records[0]
        assert record["stream"] is True
        assert record["p"] == "1"
        assert record["C"] >= 30 * 29 // 2

    def test_deterministic_output(self, tmp_path):
        """Test the same seed gives byte-identical report files."""
        outputs = []
        for name in ("a.jsonl", "b.jsonl"):
            path = tmp_path / name
            status = run(
                RunConfig(
                    command="densest",
                    gen="planted:n=80,p=0.1,clique=12",
                    sample_size=150,
                    seed=9,
                    output_path=str(path),
                )
            )
            assert status == EXIT_OK
            outputs.append(path.read_bytes())
        assert outputs[0] == outputs[1]

    def test_estimate_formula_stores_everything(self):
        """Test the formula C on a small graph keeps every edge, so p = 1."""
        status, records = _run(
            command="estimate", gen="er:n=8,p=0.5", problem="d-max-cut", seed=2
        )
        assert status == EXIT_OK
        record = records[0]
        assert record["p"] == "1"
        assert record["exact_solver"] is True
        assert record["C"] > record["m"]

    def test_estimate_c_conflict(self, capsys):
        """Test --C with --C-from-formula is a usage error."""
        code, _ = _main(
            ["estimate", "--gen", "er:n=8,p=0.5", "--problem", "d-max-cut", "--C", "5", "--C-from-formula"],
            capsys,
        )
        assert code == EXIT_USAGE

    def test_oracle_densest_and_problem(self):
        """Test the oracle reports the exact densest set and a γ-bound check."""
        status, records = _run(command="oracle", input_path=str(FIXTURES / "k4_tail.txt"))
        assert status == EXIT_OK
        assert records[0]["density"] == "3/2"
        status, records = _run(
            command="oracle", input_path=str(FIXTURES / "k4_tail.txt"), problem="d-max-cut"
        )
        assert status == EXIT_OK
        assert records[0]["gamma_bound_holds"] is True
        assert records[0]["value"] == "6"

    def test_bench_writes_file(self, tmp_path):
        """Test bench writes header, trial and summary records."""
        path = tmp_path / "bench.jsonl"
        status = run(
            RunConfig(
                command="bench",
                gen="planted:n=40,p=0.15,clique=8",
                trials=2,
                seed=1,
                output_path=str(path),
            )
        )
        assert status == EXIT_OK
        kinds = [r["kind"] for r in read_records(path)]
        assert kinds[0] == "bench"
        assert kinds.count("summary") == 4

    def test_sample_then_merge(self, tmp_path):
        """Test sketches saved by sample merge into a sketch of the summed streams."""
        head = tmp_path / "head.txt"
        tail = tmp_path / "tail.txt"
        head.write_text("n 6\n+ 0 1\n+ 1 2\n+ 2 3\n")
        tail.write_text("n 6\n+ 3 4\n+ 4 5\n")
        for path in (head, tail):
            status, _ = _run(
                command="sample",
                input_path=str(path),
                sample_size=4,
                seed=3,
                sketch_out=str(path.with_suffix(".dskt")),
            )
            assert status == EXIT_OK
        status, records = _run(
            command="merge",
            sketch_paths=[str(head.with_suffix(".dskt")), str(tail.with_suffix(".dskt"))],
        )
        assert status == EXIT_OK
        record = records[0]
        assert record["m"] == 5
        assert len(record["edges"]) == 4
        assert record["p"] == "4/5"
