"""Run every job in configs/ and print a one-line summary per job.

    python3 scripts/run_all_configs.py [--out out] [--threads 4] [--only brownian_cx,jump_cx]
"""

import argparse
import json
import time
from pathlib import Path

from levycomp.cli import run_job
from levycomp.config import load_config

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--only", help="comma-separated job names")
    args = ap.parse_args()
    wanted = set(args.only.split(",")) if args.only else None
    rows = []
    for path in sorted((ROOT / "configs").glob("*.json")):
        cfg = load_config(path)
        if wanted and cfg.name not in wanted:
            continue
        cfg = cfg.with_overrides(output_dir=str(Path(args.out) / cfg.name), threads=args.threads)
        start = time.perf_counter()
        res = run_job(cfg)
        s = res.summary
        rows.append({"job": cfg.name, "exit": res.exit_code, "seconds": round(time.perf_counter() - start, 1),
                     "dominance_min": s.get("dominance", {}).get("min_margin"),
                     "mc": s.get("mc", {}).get("overall"), "spectral": s.get("spectral", {}).get("overall")})
        print(json.dumps(rows[-1]), flush=True)
    (Path(args.out)).mkdir(parents=True, exist_ok=True)
    (Path(args.out) / "all_jobs.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
