#!/usr/bin/env python
"""
Run kinetic-gmsfem evaluations and generate a report.

Usage:
    python -m evals.scripts.run_evals
    python -m evals.scripts.run_evals --verbose
    python -m evals.scripts.run_evals --slow
"""

import argparse
import subprocess
import sys
from datetime import datetime
from pathlib import Path

from evals.config import RESULTS_DIR


def run_pytest(verbose: bool = False, slow: bool = False) -> tuple[int, str]:
    """
    Run pytest and capture results.

    Args:
        verbose: Whether to run in verbose mode
        slow: Run only the full-scale acceptance tests

    Returns:
        Tuple of (return_code, output)
    """
    cmd = ["pytest", "evals/tests/", "-v", "--tb=short"]

    if verbose:
        cmd.append("-vv")
    if slow:
        cmd.extend(["-m", "slow"])

    result = subprocess.run(cmd, capture_output=True, text=True)

    return result.returncode, result.stdout + result.stderr


def generate_report(output: str, return_code: int, slow: bool) -> str:
    """
    Generate a markdown report from pytest output.

    Args:
        output: pytest output text
        return_code: pytest return code
        slow: Whether the acceptance suite was run

    Returns:
        Markdown formatted report
    """
    timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")

    summary_line = ""
    for line in reversed(output.split("\n")):
        if "passed" in line or "failed" in line:
            summary_line = line.strip("= ")
            break

    suite = "Acceptance (full scale)" if slow else "Unit and invariant"

    report = f"""# kinetic-gmsfem Evaluation Report

**Date:** {timestamp}
**Suite:** {suite}
**Status:** {"✅ PASSED" if return_code == 0 else "❌ FAILED"}

## Summary

{summary_line}

## Test Categories

### 1. Discretization
- Mesh and ordinate combinatorics
- Assembled DG matrices against a quadrature oracle
- Bilinear form identities and fine-solve stability

### 2. Offline Stage
- Snapshot dimensions, determinism and local residuals
- Extension optimality, pencil symmetry and definiteness
- Spectral gap monotonicity and overlap bounds

### 3. Online Stage
- Exact recovery with the full space
- Galerkin orthogonality and stability

### 4. Pipeline
- Config validation and exit codes
- Byte-identical results across thread counts

## Detailed Output

```
{output}
```

---

*Generated by kinetic-gmsfem Evaluation Suite*
"""

    return report


def save_report(report: str, results_dir: Path) -> Path:
    """Save report to results directory."""
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    report_file = results_dir / f"eval_report_{timestamp}.md"

    with open(report_file, "w") as f:
        f.write(report)

    return report_file


def main():
    """Main entry point for evaluation runner."""
    parser = argparse.ArgumentParser(description="Run kinetic-gmsfem evaluations")
    parser.add_argument("--verbose", "-v", action="store_true", help="Verbose output")
    parser.add_argument("--slow", action="store_true", help="Run the full-scale acceptance tests")
    args = parser.parse_args()

    print("🧪 Running kinetic-gmsfem Evaluations...")
    print("=" * 60)

    return_code, output = run_pytest(verbose=args.verbose, slow=args.slow)
    report = generate_report(output, return_code, args.slow)
    report_file = save_report(report, RESULTS_DIR)

    print(output)
    print("\n" + "=" * 60)
    print(f"📊 Report saved to: {report_file}")

    if return_code == 0:
        print("✅ All evaluations passed!")
    else:
        print("❌ Some evaluations failed. Check the report for details.")

    return return_code


if __name__ == "__main__":
    sys.exit(main())
