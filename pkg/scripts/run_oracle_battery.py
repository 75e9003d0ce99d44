"""Run the aligned and misaligned synthetic batteries and print their summaries.

    python3 scripts/run_oracle_battery.py [--seeds 0 1 2 3 4] [--n-rollouts 64] [--json out.json]
"""

import argparse
import json
import time

from reasoning_entropy.battery import BatteryConfig, run_battery


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--questions", type=int, default=8)
    ap.add_argument("--traces", type=int, default=4, help="trajectories per question (M)")
    ap.add_argument("--n-rollouts", type=int, default=64, help="rollouts per checkpoint (N)")
    ap.add_argument("--json", help="also write the summaries here")
    args = ap.parse_args()

    out = {}
    for kind in ("aligned", "misaligned"):
        t = time.perf_counter()
        bc = BatteryConfig(kind, tuple(args.seeds), args.questions, args.traces, args.n_rollouts,
                           shuffle=kind == "aligned", mc_fidelity=kind == "aligned")
        summary = run_battery(bc).summary()
        summary["seconds"] = round(time.perf_counter() - t, 2)
        out[kind] = summary
        print(f"[{kind}]")
        for k, v in summary.items():
            print(f"  {k:22s} {v:.4f}" if isinstance(v, float) else f"  {k:22s} {v}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(out, fh, indent=2)


if __name__ == "__main__":
    main()
