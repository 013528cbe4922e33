"""Exact ensemble averages at growing n next to the predicted exponents.

    python demos/finite_n.py
"""
import math

from slotsync.cli import RunConfig, cmd_compare, cmd_simulate

CFG = {
    "channel": {"W": [[0.95, 0.05], [0.8, 0.2], [0.2, 0.8]], "silent_index": 0},
    "P": [0.5, 0.5], "M": 2, "n": [6, 8, 10, 12, 14], "alpha": 0.0, "beta": 0.3,
    "method": "exact-y", "codebooks": 100, "seed": 1,
}


def main():
    cfg = RunConfig.from_dict(CFG)
    _, sims = cmd_simulate(cfg)
    print(f"{'n':>3} {'-ln P_FA/n':>11} {'-ln P_MD/n':>11} {'-ln P_DE/n':>11}")
    for r in sims:
        print(f"{r['n']:3d}" + "".join(f" {-r['log_' + k] / r['n']:11.4f}" for k in ("fa", "md", "de")))
    status, rows = cmd_compare(cfg, sims)
    for r in rows:
        flag = "ok" if r["within"] else "outside tolerance"
        print(f"{r['kind']}: fitted slope {r['slope']:.4f}, predicted {r['predicted']:.4f} ({flag})")
    return status


if __name__ == "__main__":
    raise SystemExit(main())
