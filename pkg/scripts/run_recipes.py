"""Run every bundled figure recipe (configs/*.json) through the CLI.

    python3 scripts/run_recipes.py [--out OUT] [name ...]

Each config names its subcommand in ``recipe_command``; outputs go to OUT/<name>/.
"""
import argparse
import time
from pathlib import Path

from cavitrans import config
from cavitrans.cli import main as cli_main

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def recipes():
    return sorted(CONFIG_DIR.glob("*.json"))


def run(path: Path, out: Path) -> int:
    cfg = config.load(path)
    return cli_main([cfg.recipe_command, "--config", str(path), "--out", str(out / path.stem)])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("names", nargs="*", help="recipe names (default: all)")
    args = ap.parse_args()
    failed = []
    for path in recipes():
        if args.names and path.stem not in args.names:
            continue
        t0 = time.perf_counter()
        code = run(path, args.out)
        print(f"{path.stem}: exit {code} in {time.perf_counter() - t0:.1f} s")
        if code:
            failed.append(path.stem)
    if failed:
        raise SystemExit(f"failed: {', '.join(failed)}")


if __name__ == "__main__":
    main()
