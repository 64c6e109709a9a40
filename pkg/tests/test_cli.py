import io
import json

from kanforge.cli import (
    RunConfig,
    balanced_additive_tree,
    cmd_compile,
    cmd_fuzz,
    cmd_sweep_rate,
    cmd_table_products,
    cmd_verify,
    main,
    random_tree,
)
from kanforge.exprtree import tree_stats

FAST = RunConfig(samples=2000)


class TestCompileCommand:
    def test_writes_net_and_cert(self, tmp_path, capsys):
        out = tmp_path / "kan"
        rc = main(["compile", "-e", "x1*x2", "--samples", "2000", "-o", str(out)])
        assert rc == 0
        assert (tmp_path / "kan.net.json").exists()
        cert = json.loads((tmp_path / "kan.cert.json").read_text())
        assert cert["p_bound"] == 1.0
        assert "N" in capsys.readouterr().out

    def test_parse_error_exit_2(self, tmp_path, capsys):
        rc = main(["compile", "-e", "x1*", "-o", str(tmp_path / "k")])
        assert rc == 2
        assert "offset" in capsys.readouterr().err

    def test_json_format(self, tmp_path):
        buf = io.StringIO()
        rc = cmd_compile("sin(x1*x2)", FAST, out=str(tmp_path / "k"), fmt="json", stream=buf)
        assert rc == 0
        row = json.loads(buf.getvalue())[0]
        assert row["N"] == 2
        assert row["L"] == 4

    def test_grid_must_be_sane(self, tmp_path, capsys):
        rc = main(["compile", "-e", "x1", "--grid", "1", "-o", str(tmp_path / "k")])
        assert rc == 2


class TestVerifyCommand:
    def test_verify_round_trip(self, tmp_path):
        prefix = tmp_path / "kan"
        assert cmd_compile("sin(x1*x2)", FAST, out=str(prefix), fmt="json", stream=io.StringIO()) == 0
        buf = io.StringIO()
        rc = cmd_verify(str(prefix) + ".net.json", "sin(x1*x2)", FAST,
                        cert_path=str(prefix) + ".cert.json", fmt="json", stream=buf)
        assert rc == 0
        report = json.loads(buf.getvalue())[0]
        assert report["P_ok"] and report["error_ok"] and report["range_ok"]

    def test_tampered_net_fails(self, tmp_path):
        prefix = tmp_path / "kan"
        cmd_compile("x1*x2", FAST, out=str(prefix), fmt="json", stream=io.StringIO())
        doc = json.loads((tmp_path / "kan.net.json").read_text())
        # double an edge: the measured product must now exceed the certificate
        edge = doc["layers"][0]["edges"][0]
        edge["spline"]["coefficients"] = [2 * c for c in edge["spline"]["coefficients"]]
        (tmp_path / "tampered.net.json").write_text(json.dumps(doc))
        rc = cmd_verify(str(tmp_path / "tampered.net.json"), "x1*x2", FAST,
                        fmt="json", stream=io.StringIO())
        assert rc == 3

    def test_hash_mismatch_detected(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        cmd_compile("x1*x2", FAST, out=str(a), fmt="json", stream=io.StringIO())
        cmd_compile("x1+x2", FAST, out=str(b), fmt="json", stream=io.StringIO())
        rc = cmd_verify(str(a) + ".net.json", "x1+x2", FAST,
                        cert_path=str(b) + ".cert.json", fmt="json", stream=io.StringIO())
        assert rc == 4

    def test_expression_mismatch_detected(self, tmp_path):
        a = tmp_path / "a"
        cmd_compile("x1*x2", FAST, out=str(a), fmt="json", stream=io.StringIO())
        rc = cmd_verify(str(a) + ".net.json", "x1+x2", FAST,
                        cert_path=str(a) + ".cert.json", fmt="json", stream=io.StringIO())
        assert rc == 4

    def test_missing_net_file(self, capsys):
        assert cmd_verify("/nonexistent.json", "x1", FAST) == 2


class TestTableProducts:
    def test_all_rows_exactly_one(self, tmp_path):
        buf = io.StringIO()
        rc = cmd_table_products(RunConfig(), out=str(tmp_path / "t.csv"), fmt="csv", stream=buf)
        assert rc == 0
        lines = (tmp_path / "t.csv").read_text().strip().splitlines()
        assert lines[0] == "f,n,N,P_measured,P_bound"
        assert len(lines) == 13
        for line in lines[1:]:
            f, n, N, p, bound = line.split(",")
            assert p == "1.0"
            assert bound == "1.0"
        by_name = {line.split(",")[0]: line.split(",") for line in lines[1:]}
        assert by_name["xy"][1:3] == ["2", "1"]
        assert by_name["sin(xy)"][1:3] == ["2", "2"]
        assert by_name["x1..x10"][1:3] == ["10", "9"]


class TestSweepRate:
    def test_values_and_ratio(self, tmp_path):
        buf = io.StringIO()
        rc = cmd_sweep_rate(RunConfig(), out=str(tmp_path / "s.csv"), fmt="csv", stream=buf)
        assert rc == 0
        rows = [line.split(",") for line in (tmp_path / "s.csv").read_text().strip().splitlines()[1:]]
        errors = {int(g): float(e) for g, e, _, _ in rows}
        for G, expected in ((5, 7.25e-5), (12, 1.52e-6), (35, 1.74e-8)):
            assert expected / 10 < errors[G] < expected * 10
        ratios = [float(r) for _, _, _, r in rows]
        assert max(ratios) / min(ratios) < 2.0


class TestFuzz:
    def test_small_run_passes(self, capsys):
        rc = cmd_fuzz(RunConfig(samples=1500, seed=5), trees=40, max_depth=4)
        assert rc == 0
        assert "0 failure(s)" in capsys.readouterr().out

    def test_rejects_bad_counts(self, capsys):
        assert cmd_fuzz(RunConfig(), trees=0) == 2

    def test_random_tree_distribution_bounds(self, rng):
        for _ in range(200):
            stats = tree_stats(random_tree(rng, 5))
            assert stats.depth <= 5
            assert 1 <= stats.n <= 6

    def test_additive_tree_builder(self):
        for depth in range(1, 6):
            stats = tree_stats(balanced_additive_tree(depth))
            assert stats.internal == 2**depth - 1
            assert stats.depth == depth


class TestDeterminism:
    def test_identical_seed_identical_bytes(self, tmp_path):
        cfg = RunConfig(samples=1000, seed=123)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        cmd_table_products(cfg, out=str(a), fmt="csv", stream=io.StringIO())
        cmd_table_products(cfg, out=str(b), fmt="csv", stream=io.StringIO())
        assert a.read_bytes() == b.read_bytes()
        ja, jb = tmp_path / "ja", tmp_path / "jb"
        cmd_compile("sin((x1+x2)*x3)", cfg, out=str(ja), fmt="json", stream=io.StringIO())
        cmd_compile("sin((x1+x2)*x3)", cfg, out=str(jb), fmt="json", stream=io.StringIO())
        assert (tmp_path / "ja.net.json").read_bytes() == (tmp_path / "jb.net.json").read_bytes()
        assert (tmp_path / "ja.cert.json").read_bytes() == (tmp_path / "jb.cert.json").read_bytes()

    def test_env_seed_overrides_flag(self, monkeypatch, tmp_path):
        monkeypatch.setenv("KANFORGE_SEED", "777")
        out = io.StringIO()
        rc = main(["compile", "-e", "x1", "--seed", "1", "--samples", "100",
                   "-o", str(tmp_path / "k"), "--format", "json"])
        assert rc == 0
