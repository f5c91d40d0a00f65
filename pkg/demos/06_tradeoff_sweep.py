"""Mapping the accuracy/diversity frontier on a synthetic world.

Runs the full command pipeline in-process on one seed, sweeps the
trade-off weight alpha for the joint selector and both baselines
(a frozen-score determinant selector and maximal marginal relevance),
then prints the frontier so the trade each method offers is visible in
one table.

Run: python3 demos/06_tradeoff_sweep.py
"""

import csv
import tempfile
from pathlib import Path

from diverank import cli


def section(title):
    print("\n" + "-" * 64)
    print(title)
    print("-" * 64)


def main():
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        fix = root / "fix"
        model = root / "model"

        section("1. Generate, cluster, train (one seed end to end)")
        cli.main(["synth", "--out", str(fix), "--seed", "7"])
        cli.main([
            "cluster",
            "--items", str(fix / "items.jsonl"),
            "--behaviors", str(fix / "behaviors.jsonl"),
            "--out", str(fix / "clusters.jsonl"),
        ])
        cli.main([
            "train-scorer",
            "--items", str(fix / "items.jsonl"),
            "--behaviors", str(fix / "behaviors.jsonl"),
            "--clusters", str(fix / "clusters.jsonl"),
            "--out", str(model),
        ])

        section("2. Sweep alpha for all three methods")
        sweep_csv = root / "sweep.csv"
        cli.main([
            "sweep",
            "--candidates", str(fix / "candidates.jsonl"),
            "--labels", str(fix / "labels.jsonl"),
            "--profiles", str(model / "profiles.jsonl"),
            "--checkpoint", str(model / "checkpoint.json"),
            "--out", str(sweep_csv),
        ])

        section("3. The frontier, method by method")
        rows = list(csv.DictReader(sweep_csv.open()))
        methods = {}
        for row in rows:
            methods.setdefault(row["method"], []).append(row)
        for method, mrows in methods.items():
            print(f"\n  {method}")
            print("    alpha   mean nDCG@10   mean ILAD")
            for row in sorted(mrows, key=lambda r: float(r["alpha"])):
                print(f"    {float(row['alpha']):>5.1f}   "
                      f"{float(row['mean_ndcg']):>12.4f}   "
                      f"{float(row['mean_ilad']):>9.4f}")

        section("4. Reading the table")
        bs = sorted(methods["bs_dpp"], key=lambda r: float(r["alpha"]))
        lo, hi = bs[0], bs[-1]
        print(f"for the joint selector, alpha {float(lo['alpha']):.0f} -> "
              f"{float(hi['alpha']):.0f} moves ILAD "
              f"{float(lo['mean_ilad']):.3f} -> {float(hi['mean_ilad']):.3f} "
              f"while nDCG moves "
              f"{float(lo['mean_ndcg']):.3f} -> {float(hi['mean_ndcg']):.3f}")
        print("alpha buys diversity monotonically, and the endpoints matter:")
        print(f"at alpha 0 the trained scorer alone reaches nDCG "
              f"{float(lo['mean_ndcg']):.3f}, above the baselines' best "
              f"{max(float(r['mean_ndcg']) for r in rows if r['method'] != 'bs_dpp'):.3f}")

        def ilad_at(method, target_ndcg):
            pts = sorted(
                (float(r["mean_ndcg"]), float(r["mean_ilad"]))
                for r in methods[method]
            )
            if target_ndcg <= pts[0][0]:
                return pts[0][1]
            for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
                if target_ndcg <= x1:
                    f = (target_ndcg - x0) / (x1 - x0)
                    return y0 + f * (y1 - y0)
            return pts[-1][1]

        mid = bs[2]
        target = float(mid["mean_ndcg"])
        print(f"at matched accuracy (nDCG {target:.3f}) the joint selector")
        print(f"offers ILAD {float(mid['mean_ilad']):.3f} vs "
              f"{ilad_at('fixed_dpp', target):.3f} for the frozen-score "
              f"selector and {ilad_at('mmr', target):.3f} for MMR:")
        print("recomputing scores against the growing list buys spread")
        print("at a lower accuracy price than either baseline pays")


if __name__ == "__main__":
    main()
