"""Batch command surface: ingestion checks, audits, and simulation.

All commands read static capture files and write deterministic reports;
randomized analyses (snapshot sampling) require an explicit --seed. Exit
codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import csv
import json
import os
import random
import sys
from datetime import datetime, timezone

import click

from . import __version__, audit, baseline, ingest, ordering, sim, stats
from .errors import ChainAuditError
from .model import UNKNOWN_POOL

_JOBS_ENV = "CHAIN_AUDIT_JOBS"


def _default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(_JOBS_ENV, "1")))
    except ValueError:
        return 1


def _load(txs_path, blocks_path, pools_path):
    pool_dir = ingest.load_pool_directory(pools_path)
    chain = ingest.parse_chain(txs_path, blocks_path, pool_dir=pool_dir)
    return chain, pool_dir


def _window(chain, spec: str | None) -> tuple[int, int]:
    if spec is None:
        return chain.height_span()
    try:
        lo, hi = spec.split(":")
        return int(lo), int(hi)
    except ValueError:
        raise click.UsageError(f"--window must be LO:HI, got {spec!r}")


def _read_txset(path) -> set[str]:
    out = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                out.add(line)
    return out


def _open_out(path):
    return open(path, "w", encoding="utf-8", newline="") if path else sys.stdout


def _chain_options(fn):
    fn = click.option("--txs", "txs_path", required=True,
                      type=click.Path(exists=True),
                      help="transactions JSONL file")(fn)
    fn = click.option("--blocks", "blocks_path", required=True,
                      type=click.Path(exists=True),
                      help="blocks JSONL file")(fn)
    fn = click.option("--pools", "pools_path", required=True,
                      type=click.Path(exists=True),
                      help="pool marker config JSON")(fn)
    return fn


def _report_dict(rep: baseline.BaselineReport) -> dict:
    return {
        "height": rep.height,
        "overlap_ratio": rep.overlap_ratio,
        "byte_overlap_ratio": rep.byte_overlap_ratio,
        "actual_count": rep.actual_count,
        "capacity_vbytes": rep.capacity_vbytes,
        "baseline": list(rep.baseline),
        "both": sorted(rep.both),
        "only_actual": sorted(rep.only_actual),
        "only_baseline": sorted(rep.only_baseline),
        "only_actual_unobserved": sorted(rep.only_actual_unobserved),
    }


def _difftest_row(r: stats.DiffTestResult) -> list[str]:
    sppe = f"{r.sppe:.4f}" if r.sppe is not None else ""
    return [r.pool, f"{r.theta0:.4f}", str(r.x), str(r.y),
            f"{r.p_accel:.4f}", f"{r.p_decel:.4f}", sppe]


def _test_pools(chain, pool_dir, window, min_share):
    shares = []
    for pool in pool_dir.pool_names():
        try:
            share = ingest.hash_rate(chain, pool, window)
        except ChainAuditError:
            continue
        if 0.0 < share < 1.0 and share >= min_share:
            shares.append((share, pool))
    shares.sort(key=lambda p: (-p[0], p[1]))
    return [pool for _, pool in shares]


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(version=__version__, prog_name="chain-audit")
def main():
    """Audit transaction-prioritization norms on chain capture files."""


@main.command("ingest-check")
@_chain_options
def ingest_check(txs_path, blocks_path, pools_path):
    """Validate capture files and print a summary."""
    chain, pool_dir = _load(txs_path, blocks_path, pools_path)
    unknown = sum(1 for p in chain.pool_of.values() if p == UNKNOWN_POOL)
    n_blocks = len(chain.blocks)
    click.echo(f"blocks: {n_blocks}")
    click.echo(f"transactions: {len(chain.txs)}")
    confirmed = len(chain.confirmed_in)
    click.echo(f"confirmed: {confirmed}")
    click.echo(f"pools: {len(pool_dir.markers)}")
    frac = unknown / n_blocks if n_blocks else 0.0
    click.echo(f"unattributed blocks: {unknown} ({frac:.2%})")


@main.command("baseline")
@_chain_options
@click.option("--window", "window_spec", default=None, help="height window LO:HI")
@click.option("--jobs", type=int, default=None, help="worker processes")
@click.option("--out", "out_path", default=None, help="output JSONL path")
@click.option("--cdf-dir", default=None,
              help="directory for per-category delay/fee-rate CDF CSVs")
def baseline_cmd(txs_path, blocks_path, pools_path, window_spec, jobs,
                 out_path, cdf_dir):
    """Baseline-block reports, one JSON line per block."""
    chain, _ = _load(txs_path, blocks_path, pools_path)
    lo, hi = _window(chain, window_spec)
    heights = [b.height for b in chain.blocks_in(lo, hi)]
    reports = baseline.baseline_reports(chain, heights,
                                        jobs=jobs or _default_jobs())
    out = _open_out(out_path)
    try:
        for rep in reports:
            out.write(json.dumps(_report_dict(rep), sort_keys=True) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    if cdf_dir:
        os.makedirs(cdf_dir, exist_ok=True)
        dists = baseline.category_delay_feerate(chain, reports=reports)
        for cat in dists.delays:
            for metric, values in (("delay", dists.delays[cat]),
                                   ("feerate", dists.feerates[cat])):
                path = os.path.join(cdf_dir, f"{metric}_{cat}.csv")
                with open(path, "w", encoding="utf-8", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["value", "cumulative_fraction"])
                    for v, f in baseline.cdf_points(values):
                        w.writerow([v, f])


@main.command("positions")
@_chain_options
@click.option("--window", "window_spec", default=None)
@click.option("--out", "out_path", default=None, help="per-block PPE CSV")
@click.option("--txset", "txset_path", default=None,
              type=click.Path(exists=True),
              help="txid list for an SPPE summary")
@click.option("--pool", "pool", default=None,
              help="pool whose blocks the SPPE summary covers")
def positions_cmd(txs_path, blocks_path, pools_path, window_spec, out_path,
                  txset_path, pool):
    """Per-block position prediction error (and optional SPPE summary)."""
    chain, _ = _load(txs_path, blocks_path, pools_path)
    lo, hi = _window(chain, window_spec)
    out = _open_out(out_path)
    try:
        w = csv.writer(out)
        w.writerow(["height", "n", "ppe"])
        for block in chain.blocks_in(lo, hi):
            st = ordering.position_stats(block, chain)
            w.writerow([st.height, st.n, f"{st.ppe:.6f}"])
    finally:
        if out is not sys.stdout:
            out.close()
    if txset_path:
        if not pool:
            raise click.UsageError("--txset requires --pool")
        c_txs = _read_txset(txset_path)
        blocks = [b for b in chain.blocks_in(lo, hi)
                  if chain.pool_of.get(b.height) == pool]
        value = ordering.sppe(blocks, c_txs, chain)
        click.echo(f"sppe,{pool},{value:.4f}")


@main.command("violations")
@_chain_options
@click.option("--epsilon", type=int, default=0, show_default=True,
              help="time slack in seconds")
@click.option("--snapshots", "n_snapshots", type=int, default=30,
              show_default=True, help="number of sampled snapshots")
@click.option("--seed", type=int, required=True,
              help="seed for snapshot sampling")
@click.option("--snapshot-file", default=None, type=click.Path(exists=True),
              help="explicit snapshots JSONL (overrides derived mempool)")
@click.option("--non-cpfp", is_flag=True, help="exclude CPFP transactions")
@click.option("--out", "out_path", default=None)
def violations_cmd(txs_path, blocks_path, pools_path, epsilon, n_snapshots,
                   seed, snapshot_file, non_cpfp, out_path):
    """Norm-violating transaction pairs over sampled mempool snapshots."""
    chain, _ = _load(txs_path, blocks_path, pools_path)
    series = (ingest.parse_snapshots(snapshot_file) if snapshot_file
              else ingest.SnapshotSeries())
    lo, hi = series.span(chain)
    rng = random.Random(seed)
    times = sorted(rng.randint(lo, hi) for _ in range(n_snapshots))
    out = _open_out(out_path)
    try:
        w = csv.writer(out)
        w.writerow(["snapshot_time", "epsilon", "pairs_checked", "violations",
                    "fraction"])
        for t in times:
            snap = series.snapshot(chain, t)
            st = ordering.violation_pairs(snap, chain, epsilon,
                                          snapshot_time=t, non_cpfp=non_cpfp)
            w.writerow([st.snapshot_time, st.epsilon_seconds, st.pairs_checked,
                        st.violations, f"{float(st.fraction):.8f}"])
    finally:
        if out is not sys.stdout:
            out.close()


@main.command("difftest")
@_chain_options
@click.option("--pool", "pools", multiple=True, required=True,
              help="pool to test (repeatable)")
@click.option("--txset", "txset_path", required=True,
              type=click.Path(exists=True), help="file with one txid per line")
@click.option("--alpha", type=float, default=0.01, show_default=True)
@click.option("--window", "window_spec", default=None)
@click.option("--out", "out_path", default=None)
def difftest_cmd(txs_path, blocks_path, pools_path, pools, txset_path, alpha,
                 window_spec, out_path):
    """Differential acceleration/deceleration tests for a transaction set."""
    chain, _ = _load(txs_path, blocks_path, pools_path)
    window = _window(chain, window_spec)
    c_txs = _read_txset(txset_path)
    results = audit.audit_tx_set(chain, c_txs, list(pools), window, alpha=alpha)
    out = _open_out(out_path)
    try:
        w = csv.writer(out)
        w.writerow(["pool", "theta0", "x", "y", "p_accel", "p_decel", "sppe"])
        for r in results:
            w.writerow(_difftest_row(r))
    finally:
        if out is not sys.stdout:
            out.close()


@main.command("selfinterest")
@_chain_options
@click.option("--pool", required=True, help="pool whose wallets define the set")
@click.option("--match", type=click.Choice(["both", "spend", "receive"]),
              default="both", show_default=True)
@click.option("--test-pool", "test_pools", multiple=True,
              help="pools to test (default: hash rate >= --min-share)")
@click.option("--min-share", type=float, default=0.04, show_default=True)
@click.option("--alpha", type=float, default=0.01, show_default=True)
@click.option("--window", "window_spec", default=None)
@click.option("--out", "out_path", default=None)
def selfinterest_cmd(txs_path, blocks_path, pools_path, pool, match,
                     test_pools, min_share, alpha, window_spec, out_path):
    """Audit a pool's self-interest transactions across mining pools."""
    chain, pool_dir = _load(txs_path, blocks_path, pools_path)
    window = _window(chain, window_spec)
    c_txs = audit.self_interest_txs(chain, pool_dir, pool, mode=match)
    targets = list(test_pools) or _test_pools(chain, pool_dir, window, min_share)
    results = audit.audit_tx_set(chain, c_txs, targets, window, alpha=alpha)
    out = _open_out(out_path)
    try:
        w = csv.writer(out)
        w.writerow(["txset_of", "pool", "theta0", "x", "y", "p_accel",
                    "p_decel", "sppe"])
        for r in results:
            w.writerow([pool] + _difftest_row(r))
    finally:
        if out is not sys.stdout:
            out.close()


@main.command("darkfee")
@_chain_options
@click.option("--pool", required=True)
@click.option("--thresholds", default="100,99,90,50,1", show_default=True)
@click.option("--out", "out_path", default=None)
def darkfee_cmd(txs_path, blocks_path, pools_path, pool, thresholds, out_path):
    """Flag transactions by signed position error in a pool's blocks."""
    chain, _ = _load(txs_path, blocks_path, pools_path)
    try:
        thr = [float(t) for t in thresholds.split(",") if t]
    except ValueError:
        raise click.UsageError(f"bad --thresholds {thresholds!r}")
    flags = audit.darkfee_flags(chain, pool, thr)
    doc = {"pool": pool,
           "buckets": [{"threshold": t, "count": len(flags[t]),
                        "txids": flags[t]} for t in thr]}
    out = _open_out(out_path)
    try:
        out.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()


@main.command("congestion")
@_chain_options
@click.option("--interval", type=int, default=15, show_default=True)
@click.option("--cap", "cap_vbytes", type=int, default=1_000_000,
              show_default=True, help="congestion capacity in vbytes")
@click.option("--snapshot-file", default=None, type=click.Path(exists=True))
@click.option("--out", "out_path", default=None)
def congestion_cmd(txs_path, blocks_path, pools_path, interval, cap_vbytes,
                   snapshot_file, out_path):
    """Mempool congestion series and fee/delay distributions."""
    chain, _ = _load(txs_path, blocks_path, pools_path)
    series = (ingest.parse_snapshots(snapshot_file) if snapshot_file
              else ingest.SnapshotSeries())
    rep = audit.congestion_report(chain, series, interval=interval,
                                  cap_vbytes=cap_vbytes)
    doc = {
        "interval": rep.interval,
        "cap_vbytes": rep.cap_vbytes,
        "congested_fraction": rep.congested_fraction,
        "samples": len(rep.series),
        "series": [[t, v] for t, v in rep.series],
        "bin_feerate_cdfs": rep.bin_feerate_cdfs,
        "class_delay_cdfs_seconds": rep.class_delay_cdfs_seconds,
        "class_delay_cdfs_blocks": rep.class_delay_cdfs_blocks,
    }
    out = _open_out(out_path)
    try:
        out.write(json.dumps(doc, sort_keys=True) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()


@main.command("feeshare")
@_chain_options
@click.option("--window", "window_spec", default=None)
@click.option("--out", "out_path", default=None)
def feeshare_cmd(txs_path, blocks_path, pools_path, window_spec, out_path):
    """Fee share of miner revenue, per block and aggregate."""
    chain, _ = _load(txs_path, blocks_path, pools_path)
    window = _window(chain, window_spec)
    share = audit.fee_revenue_share(chain, window)
    out = _open_out(out_path)
    try:
        w = csv.writer(out)
        w.writerow(["height", "fee_share_percent"])
        for h, pct in share.per_block:
            w.writerow([h, f"{pct:.6f}"])
        w.writerow(["aggregate", f"{share.aggregate_percent:.6f}"])
    finally:
        if out is not sys.stdout:
            out.close()


@main.command("simulate")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="simulation config JSON")
@click.option("--out-dir", required=True, help="output directory")
def simulate_cmd(config_path, out_dir):
    """Generate a synthetic chain with ground-truth labels."""
    config = sim.SimConfig.load(config_path)
    result = sim.generate(config, out_dir=out_dir)
    click.echo(f"blocks: {len(result.chain.blocks)}")
    click.echo(f"transactions: {len(result.chain.txs)}")
    for name, path in (result.paths or {}).items():
        click.echo(f"{name}: {path}")


@main.command("replay-check")
@click.option("--dir", "sim_dir", required=True, type=click.Path(exists=True),
              help="directory produced by `simulate`")
@click.option("--lenient", is_flag=True,
              help="report mismatches without failing")
def replay_check_cmd(sim_dir, lenient):
    """Verify candidate-set reconstruction against simulator ground truth."""
    chain = ingest.parse_chain(os.path.join(sim_dir, "transactions.jsonl"),
                               os.path.join(sim_dir, "blocks.jsonl"),
                               pool_config=os.path.join(sim_dir, "pools.json"))
    gt = sim.load_ground_truth(os.path.join(sim_dir, "ground_truth.jsonl"))
    report = sim.replay_check(chain, gt, strict=not lenient)
    if report.ok:
        click.echo(f"ok: {len(gt.mempools)} mining events verified")
    else:
        click.echo(f"mismatches at {len(report.mismatched_heights)} heights: "
                   f"{list(report.mismatched_heights)[:10]}")


@main.command("report")
@_chain_options
@click.option("--window", "window_spec", default=None)
@click.option("--seed", type=int, required=True,
              help="seed for violation snapshot sampling")
@click.option("--epsilon", type=int, default=0, show_default=True)
@click.option("--snapshots", "n_snapshots", type=int, default=30,
              show_default=True)
@click.option("--txset", "txset_path", default=None,
              type=click.Path(exists=True),
              help="optional txid set for differential tests")
@click.option("--darkfee-pool", "darkfee_pools", multiple=True,
              help="pools for dark-fee buckets (default: all attributed)")
@click.option("--min-share", type=float, default=0.04, show_default=True)
@click.option("--alpha", type=float, default=0.01, show_default=True)
@click.option("--jobs", type=int, default=None)
@click.option("--no-meta", is_flag=True, help="omit the meta block")
@click.option("--out", "out_path", default=None)
def report_cmd(txs_path, blocks_path, pools_path, window_spec, seed, epsilon,
               n_snapshots, txset_path, darkfee_pools, min_share, alpha, jobs,
               no_meta, out_path):
    """Full JSON report bundle."""
    chain, pool_dir = _load(txs_path, blocks_path, pools_path)
    window = _window(chain, window_spec)
    lo, hi = window
    heights = [b.height for b in chain.blocks_in(lo, hi)]
    reports = baseline.baseline_reports(chain, heights,
                                        jobs=jobs or _default_jobs())
    positions = []
    for block in chain.blocks_in(lo, hi):
        st = ordering.position_stats(block, chain)
        positions.append({"height": st.height, "n": st.n, "ppe": st.ppe})
    series = ingest.SnapshotSeries()
    s_lo, s_hi = series.span(chain)
    rng = random.Random(seed)
    times = sorted(rng.randint(s_lo, s_hi) for _ in range(n_snapshots))
    violations = []
    for t in times:
        snap = series.snapshot(chain, t)
        st = ordering.violation_pairs(snap, chain, epsilon, snapshot_time=t)
        violations.append({"snapshot_time": st.snapshot_time,
                           "epsilon": st.epsilon_seconds,
                           "pairs_checked": st.pairs_checked,
                           "violations": st.violations,
                           "fraction": float(st.fraction)})
    diff_tests = []
    if txset_path:
        c_txs = _read_txset(txset_path)
        targets = _test_pools(chain, pool_dir, window, min_share)
        for r in audit.audit_tx_set(chain, c_txs, targets, window, alpha=alpha):
            diff_tests.append({
                "pool": r.pool, "theta0": r.theta0, "x": r.x, "y": r.y,
                "p_accel": r.p_accel, "p_decel": r.p_decel, "sppe": r.sppe,
                "accel_flagged": r.accel_flagged,
                "decel_flagged": r.decel_flagged,
            })
    pools_for_darkfee = (list(darkfee_pools)
                         or _test_pools(chain, pool_dir, window, min_share))
    darkfee = {}
    for pool in pools_for_darkfee:
        flags = audit.darkfee_flags(chain, pool)
        darkfee[pool] = {str(t): {"count": len(v), "txids": v}
                         for t, v in flags.items()}
    congestion = audit.congestion_report(chain)
    bundle = {
        "baseline": [_report_dict(r) for r in reports],
        "positions": positions,
        "violations": violations,
        "diff_tests": diff_tests,
        "darkfee": darkfee,
        "congestion": {
            "congested_fraction": congestion.congested_fraction,
            "cap_vbytes": congestion.cap_vbytes,
            "samples": len(congestion.series),
        },
    }
    if not no_meta:
        bundle["meta"] = {
            "tool": "chain-audit",
            "version": __version__,
            "generated_at": datetime.now(timezone.utc).isoformat(),
            "window": [lo, hi],
            "seed": seed,
        }
    out = _open_out(out_path)
    try:
        out.write(json.dumps(bundle, sort_keys=True) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()


def run():
    """Console entry point; maps data errors to exit code 1 (click already
    maps usage errors to 2)."""
    try:
        main()
    except ChainAuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(1)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    run()
