"""Text formats and the batch command-line interface (including exit
codes, which are part of the interface)."""
import json

import numpy as np
import pytest

from jtoric.cli import main
from jtoric.io import (RunConfig, dump_run_config, fmt, load_run_config,
                       parse_polytope_text, potential_from_config, write_csv)
from jtoric.polytope import polytope_volume

TRAP_B2 = """\
dim 2
# facet lines: normal entries then offset
1 0 0
0 1 0
1 1 -1
-1 -1 2
"""

TRAP_A11 = """\
dim 2
1 0 0
0 1 0
1 1 -1
-1 -1 11/10
"""

SQUARE = """\
dim 2
1 0 0
0 1 0
-1 0 1
0 -1 1
"""


@pytest.fixture
def trap_files(tmp_path):
    p = tmp_path / "p.poly"
    q = tmp_path / "q.poly"
    p.write_text(TRAP_B2)
    q.write_text(TRAP_A11)
    return str(p), str(q)


class TestPolytopeText:
    def test_parse_trapezoid(self):
        P = parse_polytope_text(TRAP_B2)
        assert P.dim == 2
        assert P.num_facets == 4
        assert polytope_volume(P) == pytest.approx(1.5, rel=1e-12)

    def test_rational_offsets(self):
        Q = parse_polytope_text(TRAP_A11)
        got = sorted(map(tuple, np.round(Q.vertices, 12)))
        assert (0.0, 1.1) in got

    def test_rejects_bad_header(self):
        with pytest.raises(ValueError):
            parse_polytope_text("polytope 2\n1 0 0\n")

    def test_rejects_short_facet_line(self):
        with pytest.raises(ValueError):
            parse_polytope_text("dim 2\n1 0\n")


class TestConfig:
    def test_potential_from_config(self):
        P = parse_polytope_text(TRAP_B2)
        u = potential_from_config(P, {"canonical": True})
        assert u.polytope is P
        v = potential_from_config(P, {"v": "0.1*y1*y2"})
        y = np.array([0.8, 0.6])
        assert (v.correction.value(y[None, :])[0]
                == pytest.approx(0.048, rel=1e-12))
        with pytest.raises(ValueError):
            potential_from_config(P, {})

    def test_run_config_roundtrip(self, tmp_path):
        cfg = RunConfig(command="flow", p_path="p", q_path="q", h=0.05,
                        t_end=1.0, diag_every=0.1).validate()
        path = tmp_path / "cfg.json"
        path.write_text(dump_run_config(cfg))
        cfg2 = load_run_config(str(path))
        assert cfg2.to_dict() == cfg.to_dict()

    def test_flow_config_requires_h(self):
        with pytest.raises(ValueError):
            RunConfig(command="flow", t_end=1.0, diag_every=0.1).validate()


class TestCsv:
    def test_deterministic_format(self, tmp_path):
        path = tmp_path / "x.csv"
        write_csv(str(path), ["a", "b"], [(1 / 3, 2.0), (0.1, -5e-17)])
        text = path.read_text()
        assert text.splitlines()[1] == "0.33333333333333331,2"
        assert fmt(0.1) == "0.10000000000000001"
        # identical on rewrite
        write_csv(str(path), ["a", "b"], [(1 / 3, 2.0), (0.1, -5e-17)])
        assert path.read_text() == text


class TestCliStability:
    def test_stable_pair_exit_zero(self, trap_files, tmp_path, capsys):
        p, _ = trap_files
        q = tmp_path / "q2.poly"
        q.write_text(TRAP_B2)
        out = tmp_path / "rep.json"
        code = main(["stability", "--p", p, "--q", str(q),
                     "--out", str(out)])
        assert code == 0
        rep = json.loads(out.read_text())
        assert rep["verdict"] == "pass"
        assert rep["nc"] == pytest.approx(2.0, rel=1e-12)

    def test_unstable_pair_exit_two(self, trap_files, tmp_path):
        p, q = trap_files
        out = tmp_path / "rep.json"
        code = main(["stability", "--p", p, "--q", q, "--out", str(out)])
        assert code == 2
        rep = json.loads(out.read_text())
        assert rep["verdict"] == "violated"
        bad = [f for f in rep["faces"] if f["verdict"] == "violated"]
        assert len(bad) == 1

    def test_fan_mismatch_exit_one(self, trap_files, tmp_path):
        p, _ = trap_files
        q = tmp_path / "sq.poly"
        q.write_text(SQUARE)
        assert main(["stability", "--p", p, "--q", str(q)]) == 1

    def test_missing_file_exit_one(self, tmp_path):
        assert main(["stability", "--p", str(tmp_path / "no.poly"),
                     "--q", str(tmp_path / "no.poly")]) == 1


class TestCliCalabi:
    def test_case3_summary(self, tmp_path):
        out = tmp_path / "run.csv"
        summ = tmp_path / "summary.json"
        code = main(["calabi", "--n", "2", "--a", "1.1", "--b", "2",
                     "--grid", "257", "--t-end", "5",
                     "--out", str(out), "--summary", str(summ)])
        assert code == 0
        s = json.loads(summ.read_text())
        assert s["case"] == "Case3"
        assert s["nc"] == pytest.approx(0.8, rel=1e-12)
        assert s["lambda"] == pytest.approx(
            (4.4 - np.sqrt(4.4 ** 2 - 16)) / 2, abs=1e-10)
        header = out.read_text().splitlines()[0]
        assert header == "t,B,f,trace,det"

    def test_bad_parameters_exit_one(self):
        assert main(["calabi", "--n", "1", "--a", "1.5", "--b", "2"]) == 1


class TestCliFlow:
    def test_short_flow_run(self, trap_files, tmp_path):
        p, q = trap_files
        cfg = {
            "command": "flow", "p": p, "q": q,
            "u0": {"canonical": True}, "g": {"canonical": True},
            "h": 2.0 / 16, "t_end": 0.005, "diag_every": 0.005,
            "out_csv": str(tmp_path / "trace.csv"),
            "out_outcome": str(tmp_path / "outcome.json"),
            "out_state": str(tmp_path / "state.json"),
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        code = main(["flow", "--config", str(cfg_path)])
        outcome = json.loads((tmp_path / "outcome.json").read_text())
        assert outcome["tag"] == "Undecided"
        assert code == 5
        rows = (tmp_path / "trace.csv").read_text().splitlines()
        assert rows[0].startswith("t,energy,max_trace")
        assert len(rows) >= 3
        state = json.loads((tmp_path / "state.json").read_text())
        assert len(state["nodes"]) == len(state["trace"])

    def test_identity_flow_converged_exit_zero(self, trap_files, tmp_path):
        p, _ = trap_files
        cfg = {"command": "flow", "p": p, "q": p,
               "h": 2.0 / 16, "t_end": 0.01, "diag_every": 0.01}
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        assert main(["flow", "--config", str(cfg_path)]) == 0


class TestCliReport:
    def test_report_roundtrip(self, tmp_path, capsys):
        cfg = {"command": "flow", "p": "p", "q": "q", "h": 0.1,
               "t_end": 1.0, "diag_every": 0.5}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        assert main(["report", "--config", str(path)]) == 0
        echoed = json.loads(capsys.readouterr().out)
        assert echoed["h"] == 0.1
        assert echoed["command"] == "flow"
