"""Run every config in configs/ through the CLI and print the final slopes of each convergence table."""
import argparse
import sys
from pathlib import Path

from surfafem.afem import loglog_slope, read_records
from surfafem.cli import load_config, main

ROOT = Path(__file__).resolve().parent.parent


def summarize(csv_path, window=5):
    data = read_records(csv_path)
    out = [f"{len(data['dof'])} rows, final DOF {int(data['dof'][-1])}"]
    if len(data["dof"]) >= 2:
        for col in ("eta", "h1_error", "mu"):
            try:
                out.append(f"{col} {loglog_slope(data['dof'], data[col], window):+.3f}")
            except ValueError:
                pass
    return ", ".join(out)


def run(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("configs", nargs="*", help="config files (default: all in configs/)")
    args = p.parse_args(argv)
    paths = [Path(c) for c in args.configs] or sorted((ROOT / "configs").glob("*.json"))
    status = 0
    for path in paths:
        command = "check" if path.name.startswith("check_") else "run"
        print(f"== {command} {path.name}", flush=True)
        code = main([command, str(path)])
        status = max(status, code)
        out = Path(load_config(path).output_dir)
        if command == "run" and code == 0 and (out / "convergence.csv").exists():
            print("   " + summarize(out / "convergence.csv"))
    return status


if __name__ == "__main__":
    sys.exit(run())
