import hashlib
import json

import numpy as np
import pytest

from abqp import qp as qpmod
from abqp.cli import main


def _write_two_block(tmp_path):
    from abqp.blocks import BlockMatrix, BlockPartition, BlockVector
    from abqp.qp import Box, QuadraticProgram

    p = BlockPartition((1, 1))
    qp = QuadraticProgram(
        BlockMatrix([[2.0, 1.0], [1.0, 2.0]], p),
        BlockVector([-1.0, -1.0], p),
        [Box([-1.0], [1.0]), Box([-1.0], [1.0])],
    )
    path = tmp_path / "two_block.json"
    qpmod.save(qp, path)
    return path


class TestGenerateCommand:
    def test_writes_qp_and_report(self, tmp_path, capsys):
        out = tmp_path / "qp.json"
        report = tmp_path / "report.json"
        code = main([
            "generate", "--blocks", "8", "--q-target", "0.6", "--seed", "7",
            "--out", str(out), "--report", str(report),
        ])
        assert code == 0
        problem = qpmod.load(out)
        assert problem.partition.num_blocks == 8
        rep = json.loads(report.read_text())
        assert rep["network_rate"] == pytest.approx(0.6, abs=1e-3)
        assert len(rep["gaps"]) == 8
        assert "network rate" in capsys.readouterr().out

    def test_bad_target_exits_two(self, tmp_path, capsys):
        code = main([
            "generate", "--blocks", "4", "--q-target", "1.5",
            "--out", str(tmp_path / "x.json"),
        ])
        assert code == 2

    def test_single_block_instance_valid(self, tmp_path):
        out = tmp_path / "one.json"
        code = main([
            "generate", "--blocks", "1", "--block-size", "3",
            "--q-target", "0.5", "--seed", "1", "--out", str(out),
        ])
        assert code == 0
        assert qpmod.validate(qpmod.load(out)).ok

    def test_missing_out_exits_two(self):
        assert main(["generate", "--blocks", "4"]) == 2


class TestAnalyzeCommand:
    def test_rate_rule_worked_example(self, tmp_path):
        qp_path = _write_two_block(tmp_path)
        out = tmp_path / "analysis.json"
        code = main(["analyze", str(qp_path), "--q-star", "0.25", "--json", str(out)])
        assert code == 0
        result = json.loads(out.read_text())
        alphas = [b["alpha_for_rate"] for b in result["blocks"]]
        gammas = [b["gamma_for_rate"] for b in result["blocks"]]
        assert alphas == pytest.approx([2.0, 2.0])
        assert gammas == pytest.approx([0.25, 0.25])
        assert result["regularized_rate"] == pytest.approx(0.25)

    def test_epsilon_caps_worked_example(self, tmp_path):
        qp_path = _write_two_block(tmp_path)
        out = tmp_path / "analysis.json"
        code = main(["analyze", str(qp_path), "--epsilon", "0.25", "--json", str(out)])
        assert code == 0
        result = json.loads(out.read_text())
        caps = [b["alpha_cap_cost"] for b in result["blocks"]]
        assert caps == pytest.approx([1.0, 1.0])

    def test_no_flags_rates_only(self, tmp_path, capsys):
        qp_path = _write_two_block(tmp_path)
        code = main(["analyze", str(qp_path)])
        assert code == 0
        text = capsys.readouterr().out
        assert "network rate q = 0.500000" in text

    def test_invalid_file_exits_two(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["analyze", str(bad)]) == 2

    def test_non_dominant_qp_rejected(self, tmp_path):
        bad = tmp_path / "bad_qp.json"
        bad.write_text(json.dumps({
            "partition": [1, 1],
            "Q": [1.0, 2.0, 2.0, 1.0],
            "r": [0.0, 0.0],
            "constraints": [{"type": "unconstrained"}] * 2,
        }))
        assert main(["analyze", str(bad)]) == 2


class TestSimulateCommand:
    def test_zero_ticks_initial_only(self, tmp_path):
        qp_path = _write_two_block(tmp_path)
        trace = tmp_path / "trace.csv"
        code = main([
            "simulate", str(qp_path), "--ticks", "0",
            "--trace", str(trace),
        ])
        assert code == 0
        lines = trace.read_text().strip().split("\n")
        assert len(lines) == 2  # header + initial state
        assert lines[1].startswith("0,0,")

    def test_synchronous_ratio(self, tmp_path):
        qp_path = _write_two_block(tmp_path)
        trace = tmp_path / "trace.csv"
        summary = tmp_path / "summary.json"
        code = main([
            "simulate", str(qp_path), "--ticks", "8",
            "--p-update", "1.0", "--p-transmit", "1.0",
            "--trace", str(trace), "--summary", str(summary),
        ])
        assert code == 0
        rows = [line.split(",") for line in trace.read_text().strip().split("\n")[1:]]
        errors = np.array([float(c[2]) for c in rows])
        ratios = errors[1:] / errors[:-1]
        np.testing.assert_allclose(ratios, 0.5, rtol=1e-9)
        s = json.loads(summary.read_text())
        assert s["envelope_violations"] == 0
        assert s["cycles_completed"] == 8

    def test_determinism_and_seed_precedence(self, tmp_path, monkeypatch):
        qp_path = _write_two_block(tmp_path)
        args = lambda out: [  # noqa: E731
            "simulate", str(qp_path), "--ticks", "300",
            "--p-update", "0.4", "--p-transmit", "0.3",
            "--trace", str(out),
        ]
        a, b, c, d = (tmp_path / f"t{i}.csv" for i in range(4))
        assert main(args(a) + ["--seed", "5"]) == 0
        assert main(args(b) + ["--seed", "5"]) == 0
        assert hashlib.sha256(a.read_bytes()).hexdigest() == hashlib.sha256(
            b.read_bytes()
        ).hexdigest()
        monkeypatch.setenv("ABQP_SEED", "6")
        assert main(args(c)) == 0  # env seed applies
        assert a.read_bytes() != c.read_bytes()
        assert main(args(d) + ["--seed", "5"]) == 0  # flag beats env
        assert a.read_bytes() == d.read_bytes()

    def test_explicit_alphas(self, tmp_path):
        qp_path = _write_two_block(tmp_path)
        trace = tmp_path / "trace.csv"
        code = main([
            "simulate", str(qp_path), "--ticks", "50",
            "--alphas", "1.0,1.0", "--trace", str(trace),
        ])
        assert code == 0

    def test_conflicting_reg_flags(self, tmp_path):
        qp_path = _write_two_block(tmp_path)
        code = main([
            "simulate", str(qp_path), "--ticks", "10",
            "--q-star", "0.3", "--alphas", "1,1",
            "--trace", str(tmp_path / "t.csv"),
        ])
        assert code == 2

    def test_config_file_with_flag_override(self, tmp_path):
        qp_path = _write_two_block(tmp_path)
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"ticks": 5, "p_update": 1.0, "p_transmit": 1.0,
                                   "seed": 3}))
        trace = tmp_path / "t.csv"
        code = main([
            "simulate", str(qp_path), "--config", str(cfg),
            "--ticks", "2", "--trace", str(trace),
        ])
        assert code == 0
        rows = trace.read_text().strip().split("\n")
        assert rows[-1].startswith("2,")  # flag won over config's 5


class TestSweepFig1Command:
    def test_small_sweep_properties(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main([
            "sweep-fig1", "--blocks", "12", "--q-initials", "0.85,0.5",
            "--reduction-steps", "11", "--seed", "3", "--out", str(out),
        ])
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "q_initial,reduction_percent,implied_epsilon"
        rows = [tuple(float(v) for v in line.split(",")) for line in lines[1:]]
        assert len(rows) == 2 * 11
        by_q = {}
        for q0, red, eps in rows:
            by_q.setdefault(q0, []).append((red, eps))
        for q0, pts in by_q.items():
            eps_vals = [e for _, e in sorted(pts)]
            assert eps_vals[0] == 0.0
            assert eps_vals[-1] == 1.0
            assert all(b >= a - 1e-12 for a, b in zip(eps_vals, eps_vals[1:]))
        # larger initial rate gives larger certified error at equal reduction
        for (r1, e1), (r2, e2) in zip(sorted(by_q[0.85]), sorted(by_q[0.5])):
            assert e1 >= e2 - 1e-12


class TestCompareFig2Command:
    def test_small_instance_runs(self, tmp_path):
        outdir = tmp_path / "fig2"
        code = main([
            "compare-fig2", "--blocks", "8", "--q-initial", "0.7",
            "--reductions", "10,40", "--ticks", "1500",
            "--p-update", "0.4", "--p-transmit", "0.2",
            "--record-every", "5", "--seed", "11", "--outdir", str(outdir),
        ])
        assert code == 0
        summary = json.loads((outdir / "summary.json").read_text())
        assert set(summary["runs"]) == {"unregularized", "reduce10", "reduce40"}
        assert (outdir / "trace_unregularized.csv").exists()
        assert (outdir / "trace_reduce10.csv").exists()
        r10 = summary["runs"]["reduce10"]
        r40 = summary["runs"]["reduce40"]
        assert r10["envelope_violations"] == 0
        assert r40["final_error_to_unregularized"] >= r10["final_error_to_unregularized"]
        assert r40["state_error_bound"] >= r40["final_error_to_unregularized"]
