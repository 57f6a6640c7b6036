#!/usr/bin/env python3
"""Development and testing script for Quad Residual Lab."""

import argparse
import subprocess
import sys

PACKAGE = "quad_residual_lab"
SOURCES = f"{PACKAGE}/ tests/ scripts/"
PROFILE = "quick,drag"

# name -> (description, shell commands)
CHECKS = {
    "format": ("Formatting", [f"black {SOURCES}", f"isort {SOURCES} --profile black"]),
    "lint": ("Linting", [f"flake8 {PACKAGE}/ --max-line-length=110 --extend-ignore=E203,W503"]),
    "typecheck": ("Type checking", [f"mypy {PACKAGE}/"]),
    "build": ("Building", ["rm -rf build/ dist/ *.egg-info/", "python -m build"]),
    "install": ("Installing", ['pip install -e ".[dev]"']),
}

ARTIFACTS = [
    "build/",
    "dist/",
    "*.egg-info/",
    "__pycache__/",
    "*.pyc",
    ".pytest_cache/",
    ".mypy_cache/",
    ".coverage",
]


def run_command(command, cwd=None):
    """Run a shell command and return (ok, output)."""
    try:
        result = subprocess.run(
            command, shell=True, cwd=cwd, capture_output=True, text=True, check=True
        )
        return True, result.stdout
    except subprocess.CalledProcessError as e:
        return False, e.stderr or e.stdout


def run_check(name):
    """Run one entry of CHECKS, stopping at the first failing command."""
    description, commands = CHECKS[name]
    print(f"{description}...")
    for command in commands:
        success, output = run_command(command)
        if not success:
            print(f"{name} failed on `{command}`:\n{output}")
            return False
    print(f"{name}: ok")
    return True


def run_tests(fast=False, integration=False):
    """Run pytest; fast skips slow tests, integration runs only the pipeline tests."""
    if integration:
        selection = ' -m "integration"'
    elif fast:
        selection = ' -m "not slow"'
    else:
        selection = ""
    print(f"Running tests{selection or ' (all)'}...")
    success, output = run_command(f"pytest tests/ -v{selection}")
    if not success:
        print(f"Tests failed:\n{output}")
        return False
    print("tests: ok")
    return True


def run_pipeline(out_dir):
    """Quick collect -> label -> train -> eval run with the drag profile."""
    steps = [
        f"quad-lab collect --profile {PROFILE} --out {out_dir}/flights",
        f"quad-lab label {out_dir}/flights --profile {PROFILE} --out {out_dir}",
        f"quad-lab train {out_dir}/dataset.csv --profile {PROFILE} --out {out_dir}",
        f"quad-lab eval --profile {PROFILE} --model {out_dir}/model.bin --out {out_dir}/results",
    ]
    for step in steps:
        print(f"$ {step}")
        success, output = run_command(step)
        if not success:
            print(f"Pipeline step failed:\n{output}")
            return False
        print(output)
    return True


def clean():
    """Remove build, cache and coverage artifacts."""
    for artifact in ARTIFACTS:
        run_command(f"find . -path ./examples -prune -o -name '{artifact}' -exec rm -rf {{}} +")
    print("clean: ok")
    return True


def main():
    parser = argparse.ArgumentParser(description="Development script for Quad Residual Lab")
    parser.add_argument(
        "command",
        choices=[*CHECKS, "test", "clean", "pipeline", "all"],
        help="Command to run",
    )
    parser.add_argument("--fast", action="store_true", help="Skip slow tests")
    parser.add_argument("--integration", action="store_true", help="Only run pipeline tests")
    parser.add_argument("--out", default="out/pipeline", help="Output directory for pipeline")
    args = parser.parse_args()

    if args.command in CHECKS:
        success = run_check(args.command)
    elif args.command == "test":
        success = run_tests(args.fast, args.integration)
    elif args.command == "clean":
        success = clean()
    elif args.command == "pipeline":
        success = run_pipeline(args.out)
    else:
        success = all(
            step()
            for step in (
                lambda: run_check("format"),
                lambda: run_check("lint"),
                lambda: run_check("typecheck"),
                lambda: run_tests(args.fast),
                lambda: run_check("build"),
            )
        )
        print("All checks passed!" if success else "Some checks failed!")

    if not success:
        sys.exit(1)


if __name__ == "__main__":
    main()
