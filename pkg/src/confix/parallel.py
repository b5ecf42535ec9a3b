"""Worker-thread bookkeeping for the pixel kernels.

The kernel thread cap has to be pinned before numba initializes its
threading layer, so every confix module imports numba through here.
"""

from __future__ import annotations

import os
import sys

# Allow oversubscription up to the env-var bound even on small machines;
# must happen before the first numba import anywhere in the process. The
# workqueue layer avoids probing optional TBB/OpenMP runtimes and supports
# runtime thread-count changes.
_LAUNCH_CAP = 8
if "numba" not in sys.modules:
    os.environ.setdefault(
        "NUMBA_NUM_THREADS", str(max(_LAUNCH_CAP, os.cpu_count() or 1))
    )
    os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numba  # noqa: E402

ENV_VAR = "CONFIX_THREADS"


def thread_count() -> int:
    """Number of kernel worker threads.

    Reads the CONFIX_THREADS environment variable on every call so tests
    and long-lived processes can change it between runs. Unset, empty, or
    non-positive values fall back to the CPU count. The result is clamped
    to the numba launch-time maximum.
    """
    raw = os.environ.get(ENV_VAR, "")
    try:
        requested = int(raw)
    except ValueError:
        requested = 0
    if requested < 1:
        requested = os.cpu_count() or 1
    return max(1, min(requested, numba.config.NUMBA_NUM_THREADS))


def apply_thread_count() -> int:
    """Push the current thread count to numba; returns the value applied."""
    n = thread_count()
    numba.set_num_threads(n)
    return n
