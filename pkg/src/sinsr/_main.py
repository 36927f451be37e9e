"""Console entry point.

Strict mode must pin BLAS thread counts before numpy loads, so this
module peeks at argv and the environment first and only then imports
the heavy command implementations.
"""

from __future__ import annotations

import os
import sys


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    if "--strict" in argv or os.environ.get("SINSR_STRICT") == "1":
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, "1")
    from .cli import run
    return run(argv)


if __name__ == "__main__":
    raise SystemExit(main())
