import json
import subprocess
import sys

import pytest
from click.testing import CliRunner

from chainaudit import ingest
from chainaudit.cli import main
from conftest import mk_block, mk_tx


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    from chainaudit.sim import SimConfig, generate
    out = tmp_path_factory.mktemp("simchain")
    cfg = SimConfig(seed=2, pools=[("alpha", 0.6), ("bravo", 0.4)],
                    n_blocks=60, tx_rate=0.05, block_capacity=20_000,
                    vsize_model={"kind": "fixed", "value": 200})
    res = generate(cfg, out_dir=str(out))
    return out, res


def chain_args(out):
    return ["--txs", str(out / "transactions.jsonl"),
            "--blocks", str(out / "blocks.jsonl"),
            "--pools", str(out / "pools.json")]


def invoke(args):
    runner = CliRunner()
    return runner.invoke(main, args, catch_exceptions=False)


class TestCommands:
    def test_ingest_check(self, sim_dir):
        out, res = sim_dir
        r = invoke(["ingest-check"] + chain_args(out))
        assert r.exit_code == 0
        assert "blocks: 60" in r.output

    def test_baseline_closed_loop(self, sim_dir):
        out, _ = sim_dir
        r = invoke(["baseline"] + chain_args(out))
        assert r.exit_code == 0
        lines = [json.loads(line) for line in r.output.splitlines()]
        assert len(lines) == 60
        assert all(rec["overlap_ratio"] == 1.0 for rec in lines)

    def test_positions_all_zero(self, sim_dir):
        out, _ = sim_dir
        r = invoke(["positions"] + chain_args(out))
        rows = r.output.strip().splitlines()
        assert rows[0] == "height,n,ppe"
        assert all(row.endswith(",0.000000") for row in rows[1:])

    def test_violations_deterministic_and_zero(self, sim_dir):
        out, _ = sim_dir
        args = ["violations"] + chain_args(out) + ["--seed", "5",
                                                   "--snapshots", "6"]
        r1, r2 = invoke(args), invoke(args)
        assert r1.output == r2.output
        for row in r1.output.strip().splitlines()[1:]:
            assert row.split(",")[3] == "0"

    def test_difftest_table_format(self, sim_dir, tmp_path):
        out, res = sim_dir
        chain = res.chain
        confirmed = sorted(t for t in chain.txs
                           if chain.confirm_height(t) is not None)
        txset = tmp_path / "set.txt"
        txset.write_text("\n".join(confirmed[:50]) + "\n")
        r = invoke(["difftest"] + chain_args(out)
                   + ["--pool", "alpha", "--pool", "bravo",
                      "--txset", str(txset)])
        rows = r.output.strip().splitlines()
        assert rows[0] == "pool,theta0,x,y,p_accel,p_decel,sppe"
        assert len(rows) == 3
        first = rows[1].split(",")
        assert first[0] in ("alpha", "bravo")
        float(first[1]), int(first[2]), int(first[3])
        assert 0.0 <= float(first[4]) <= 1.0

    def test_selfinterest_without_wallet_touches_is_data_error(self, sim_dir):
        from chainaudit.errors import NoCBlocks
        out, _ = sim_dir
        # null chain has no wallet-touching txs -> NoCBlocks (exit 1 via run())
        with pytest.raises(NoCBlocks):
            invoke(["selfinterest"] + chain_args(out) + ["--pool", "alpha"])

    def test_darkfee_buckets(self, sim_dir):
        out, _ = sim_dir
        r = invoke(["darkfee"] + chain_args(out) + ["--pool", "alpha"])
        doc = json.loads(r.output)
        assert [b["threshold"] for b in doc["buckets"]] == \
            [100.0, 99.0, 90.0, 50.0, 1.0]
        assert all(b["count"] == 0 for b in doc["buckets"])

    def test_congestion_and_feeshare(self, sim_dir):
        out, _ = sim_dir
        r = invoke(["congestion"] + chain_args(out))
        doc = json.loads(r.output)
        assert 0.0 <= doc["congested_fraction"] <= 1.0
        r2 = invoke(["feeshare"] + chain_args(out))
        assert r2.output.splitlines()[-1].startswith("aggregate,")

    def test_simulate_then_replay(self, tmp_path):
        config = {"seed": 11, "pools": [["a", 1.0]], "n_blocks": 20,
                  "tx_rate": 0.05, "block_capacity": 20000,
                  "vsize_model": {"kind": "fixed", "value": 200}}
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(config))
        out_dir = tmp_path / "sim"
        r = invoke(["simulate", "--config", str(cfg_path),
                    "--out-dir", str(out_dir)])
        assert r.exit_code == 0
        assert "blocks: 20" in r.output
        r2 = invoke(["replay-check", "--dir", str(out_dir)])
        assert r2.exit_code == 0
        assert "ok" in r2.output

    def test_report_no_meta_deterministic(self, sim_dir, tmp_path):
        out, _ = sim_dir
        args = (["report"] + chain_args(out)
                + ["--seed", "3", "--snapshots", "4", "--no-meta"])
        r1, r2 = invoke(args), invoke(args)
        assert r1.output == r2.output
        doc = json.loads(r1.output)
        assert "meta" not in doc
        assert set(doc) == {"baseline", "positions", "violations",
                            "diff_tests", "darkfee", "congestion"}
        with_meta = invoke(["report"] + chain_args(out)
                           + ["--seed", "3", "--snapshots", "4"])
        assert "meta" in json.loads(with_meta.output)


class TestExitCodes:
    def run_cli(self, args):
        return subprocess.run([sys.executable, "-m", "chainaudit.cli"] + args,
                              capture_output=True, text=True)

    def test_unknown_subcommand_exits_2(self):
        proc = self.run_cli(["definitely-not-a-command"])
        assert proc.returncode == 2

    def test_usage_error_exits_2(self, sim_dir):
        out, _ = sim_dir
        proc = self.run_cli(["baseline", "--txs", "missing.jsonl",
                             "--blocks", "x", "--pools", "y"])
        assert proc.returncode == 2
        assert proc.stderr

    def test_data_error_exits_1(self, tmp_path):
        # block references an unknown txid -> DanglingTxid -> exit 1
        ingest.write_transactions(tmp_path / "t.jsonl", [mk_tx(1, received=0)])
        ingest.write_blocks(tmp_path / "b.jsonl", [mk_block(0, [1, 2])])
        ingest.write_pool_config(tmp_path / "p.json", {"solo": ["solo"]})
        proc = self.run_cli(["ingest-check", "--txs", str(tmp_path / "t.jsonl"),
                             "--blocks", str(tmp_path / "b.jsonl"),
                             "--pools", str(tmp_path / "p.json")])
        assert proc.returncode == 1
        assert "unresolvable" in proc.stderr

    def test_success_exits_0(self, sim_dir):
        out, _ = sim_dir
        proc = self.run_cli(["ingest-check"] + chain_args(out))
        assert proc.returncode == 0


class TestJobs:
    def test_jobs_env_and_flag_agree(self, sim_dir, monkeypatch):
        out, _ = sim_dir
        serial = invoke(["baseline"] + chain_args(out) + ["--jobs", "1"])
        parallel = invoke(["baseline"] + chain_args(out) + ["--jobs", "2"])
        assert serial.output == parallel.output
        monkeypatch.setenv("CHAIN_AUDIT_JOBS", "2")
        via_env = invoke(["baseline"] + chain_args(out))
        assert via_env.output == serial.output
