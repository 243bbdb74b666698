#!/usr/bin/env python3
"""Run the full experiment battery into an output directory.

Covers the decoder comparison, the oracle FOV study, both sampling-bound
verifications, the hallucination-vs-length curve, the cost model and the
token likelihood profile curve. Each scenario writes its own subdirectory
with a manifest; rerunning with the same seed reproduces every file.
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from halc.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results", help="output directory")
    parser.add_argument("--seed", type=int, default=21)
    parser.add_argument("--scenes", type=int, default=100)
    args = parser.parse_args()

    out = Path(args.out)
    config = {
        "seed": args.seed,
        "corpus": {"count": args.scenes, "trap_fraction": 0.5},
        "length_curve": {"grid": [16, 32, 64]},
    }
    oracle_config = {
        "seed": args.seed,
        "corpus": {"count": 200, "trap_fraction": 1.0, "correctable_fraction": 0.845},
    }

    with tempfile.TemporaryDirectory() as tmp:
        base = Path(tmp) / "base.json"
        base.write_text(json.dumps(config))
        oracle = Path(tmp) / "oracle.json"
        oracle.write_text(json.dumps(oracle_config))

        runs = [
            ("decode", base),
            ("compare", base),
            ("oracle-study", oracle),
            ("theorem-verify", base),
            ("length-curve", base),
            ("ablate", base),
            ("cost-model", base),
            ("emit-curve", base),
        ]
        for scenario, cfg in runs:
            target = out / scenario
            print(f"running {scenario} -> {target}")
            rc = cli_main([scenario, "--config", str(cfg), "--out", str(target)])
            if rc != 0:
                print(f"{scenario} failed with exit code {rc}", file=sys.stderr)
                return rc
    print(f"\nall scenarios written under {out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
