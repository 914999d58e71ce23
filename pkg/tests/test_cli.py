"""End-to-end tests for the command line."""
import json
import os

import pytest

from pourl.cli import EXIT_FAILURE, EXIT_INPUT, EXIT_OK, main
from pourl.hashchain import canonical_bytes
from pourl.persistence import load_chain

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")
SINGLE = os.path.join(CONFIG_DIR, "single.json")


def _run_single(tmp_path, name="out", *extra):
    out = str(tmp_path / name)
    assert main(["run", "--config", SINGLE, "--out", out, *extra]) == EXIT_OK
    return out


def _chain_path(out):
    return os.path.join(out, "chains", "node_0.chain")


def _tree(root):
    files = {}
    for folder, _, names in os.walk(root):
        for name in names:
            path = os.path.join(folder, name)
            with open(path, "rb") as f:
                files[os.path.relpath(path, root)] = f.read()
    return files


class TestRun:
    def test_single_node_run(self, tmp_path, capsys):
        out = _run_single(tmp_path)
        assert "OK mine" in capsys.readouterr().out
        chain, _ = load_chain(_chain_path(out))
        assert len(chain) == 51
        for name in ("report.json", "metrics.csv", "ledger.csv", os.path.join("params", "node_0.qnet")):
            assert os.path.exists(os.path.join(out, name))
        with open(os.path.join(out, "report.json"), encoding="utf-8") as f:
            report = json.load(f)
        assert report["scenario"] == "mine"
        assert report["result"]["consensus_height"] == 50
        assert "output_dir" not in report["config"]

    def test_reruns_are_byte_identical(self, tmp_path):
        first = _tree(_run_single(tmp_path, "a"))
        second = _tree(_run_single(tmp_path, "b"))
        assert first == second

    @pytest.mark.slow
    @pytest.mark.parametrize("name", ["converge.json", "partition.json"])
    def test_multi_node_reruns_are_byte_identical(self, tmp_path, name):
        trees = []
        for out in ("a", "b"):
            target = str(tmp_path / out)
            assert main(["run", "--config", os.path.join(CONFIG_DIR, name), "--out", target]) == EXIT_OK
            trees.append(_tree(target))
        assert trees[0] == trees[1]

    def test_seed_override(self, tmp_path):
        base = _run_single(tmp_path, "a")
        other = _run_single(tmp_path, "b", "--seed", "5")
        with open(_chain_path(base), "rb") as f, open(_chain_path(other), "rb") as g:
            assert f.read() != g.read()

    def test_seed_out_of_range(self, tmp_path):
        assert main(["run", "--config", SINGLE, "--out", str(tmp_path), "--seed", "-1"]) == EXIT_INPUT

    def test_missing_config(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "none.json")]) == EXIT_INPUT

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"scenario": "mine", "simulation": {"nodes": 3}}))
        assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_INPUT

    def test_fractional_node_count(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"scenario": "mine", "simulation": {"node_count": 2.5}}))
        assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_INPUT

    @pytest.mark.slow
    def test_partition_config(self, tmp_path):
        out = str(tmp_path / "p")
        assert main(["run", "--config", os.path.join(CONFIG_DIR, "partition.json"), "--out", out]) == EXIT_OK
        with open(os.path.join(out, "report.json"), encoding="utf-8") as f:
            result = json.load(f)["result"]
        assert result["converged"]
        assert result["convergence_time_after_heal"] > 0


class TestVerify:
    def test_valid_chain(self, tmp_path, capsys):
        out = _run_single(tmp_path)
        capsys.readouterr()
        assert main(["verify", _chain_path(out)]) == EXIT_OK
        assert capsys.readouterr().out.startswith("OK 51 blocks")

    def test_flipped_reward_byte(self, tmp_path, capsys):
        path = _chain_path(_run_single(tmp_path))
        chain, _ = load_chain(path)
        with open(path, "rb") as f:
            data = bytearray(f.read())
        # the reward field starts 32 bytes into a two-coordinate block record
        offset = data.find(canonical_bytes(chain[3])) + 32
        data[offset] ^= 0xFF
        with open(path, "wb") as f:
            f.write(bytes(data))
        capsys.readouterr()
        assert main(["verify", path]) == EXIT_FAILURE
        assert "height 4" in capsys.readouterr().out

    def test_truncated_file(self, tmp_path):
        path = _chain_path(_run_single(tmp_path))
        with open(path, "rb") as f:
            data = f.read()
        with open(path, "wb") as f:
            f.write(data[:-7])
        assert main(["verify", path]) == EXIT_INPUT

    def test_file_cut_after_a_whole_record(self, tmp_path):
        path = _chain_path(_run_single(tmp_path))
        chain, _ = load_chain(path)
        with open(path, "rb") as f:
            data = f.read()
        with open(path, "wb") as f:
            f.write(data[:-(4 + len(canonical_bytes(chain.tip)))])
        assert main(["verify", path]) == EXIT_INPUT

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.chain"
        path.write_bytes(b"")
        assert main(["verify", str(path)]) == EXIT_INPUT


class TestInspect:
    def test_one_line_per_block(self, tmp_path, capsys):
        path = _chain_path(_run_single(tmp_path))
        capsys.readouterr()
        assert main(["inspect", path]) == EXIT_OK
        assert len(capsys.readouterr().out.splitlines()) == 51

    def test_json_lines(self, tmp_path, capsys):
        path = _chain_path(_run_single(tmp_path))
        capsys.readouterr()
        assert main(["inspect", path, "--json"]) == EXIT_OK
        rows = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
        assert len(rows) == 51
        assert all("digest" in row for row in rows)
