"""Persistent per-machine tuning cache and the auto-tuner that fills it.

File format (plain text, one entry per line, ``#`` starts a comment)::

    <kernel>@<machine> = <unroll_factor> <accumulator_count>

for example ``softmax_two_pass@x86_64-intel-xeon-platinum-8488c = 8 2``.
The path defaults to ``~/.cache/twopass/tuning.txt`` and can be overridden
with the ``TWOPASS_TUNING_CACHE`` environment variable.
"""

from __future__ import annotations

import fcntl
import os
import platform
import re
import tempfile
import time
from pathlib import Path
from typing import Callable

from .vector_exp import DEFAULT_PARAMS, SEARCH_SPACE, TuningParams

ENV_VAR = "TWOPASS_TUNING_CACHE"
KERNELS = ("softmax_recompute", "softmax_reload", "softmax_two_pass", "exp_batch")

_LINE = re.compile(r"^\s*([\w.-]+)@([\w.-]+)\s*=\s*(\d+)\s+(\d+)\s*$")
_memo: dict[tuple[str, float], dict[tuple[str, str], TuningParams]] = {}


def cache_path() -> Path:
    env = os.environ.get(ENV_VAR)
    if env:
        return Path(env).expanduser()
    return Path.home() / ".cache" / "twopass" / "tuning.txt"


def machine_id() -> str:
    model = ""
    try:
        with open("/proc/cpuinfo") as f:
            for line in f:
                if line.startswith("model name"):
                    model = line.split(":", 1)[1]
                    break
    except OSError:
        model = platform.processor()
    slug = re.sub(r"[^a-z0-9]+", "-", f"{platform.machine()} {model}".lower()).strip("-")
    return slug or "unknown"


def parse(text: str) -> dict[tuple[str, str], TuningParams]:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        m = _LINE.match(line)
        if not m:
            raise ValueError(f"tuning cache line {lineno}: cannot parse {raw!r}")
        kernel, machine, u, a = m.groups()
        entries[(kernel, machine)] = TuningParams(int(u), int(a))
    return entries


def format_entries(entries: dict[tuple[str, str], TuningParams]) -> str:
    lines = ["# twopass tuning cache", "# <kernel>@<machine> = <unroll_factor> <accumulator_count>"]
    for (kernel, machine), p in sorted(entries.items()):
        lines.append(f"{kernel}@{machine} = {p.unroll_factor} {p.accumulator_count}")
    return "\n".join(lines) + "\n"


def load(path: Path | None = None) -> dict[tuple[str, str], TuningParams]:
    path = path or cache_path()
    try:
        mtime = path.stat().st_mtime
    except FileNotFoundError:
        return {}
    key = (str(path), mtime)
    if key not in _memo:
        _memo.clear()
        _memo[key] = parse(path.read_text())
    return _memo[key]


def lookup(kernel: str, machine: str | None = None) -> TuningParams:
    """Tuned parameters for ``kernel`` on this machine, or the defaults."""
    try:
        entries = load()
    except (OSError, ValueError):
        return DEFAULT_PARAMS
    return entries.get((kernel, machine or machine_id()), DEFAULT_PARAMS)


def resolve(kernel: str, params: TuningParams | None) -> TuningParams:
    return params if params is not None else lookup(kernel)


def store(updates: dict[str, TuningParams], path: Path | None = None, machine: str | None = None) -> Path:
    """Merge ``updates`` into the cache file under an exclusive lock; atomic replace."""
    path = path or cache_path()
    machine = machine or machine_id()
    path.parent.mkdir(parents=True, exist_ok=True)
    lock_path = path.with_name(path.name + ".lock")
    with open(lock_path, "w") as lock:
        fcntl.flock(lock, fcntl.LOCK_EX)
        entries = parse(path.read_text()) if path.exists() else {}
        for kernel, p in updates.items():
            entries[(kernel, machine)] = p
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tuning-")
        with os.fdopen(fd, "w") as f:
            f.write(format_entries(entries))
        os.replace(tmp, path)
    _memo.clear()
    return path


def autotune(run: Callable[[TuningParams], None], candidates=SEARCH_SPACE, repetitions: int = 3,
             clock: Callable[[], float] = time.perf_counter) -> tuple[TuningParams, list[tuple[TuningParams, float]]]:
    """Time ``run(params)`` for every candidate; best-of-``repetitions`` decides.

    Returns the winner and the full (params, seconds) table.
    """
    table = []
    for p in candidates:
        run(p)  # compile + warm
        best = float("inf")
        for _ in range(repetitions):
            t0 = clock()
            run(p)
            best = min(best, clock() - t0)
        table.append((p, best))
    winner = min(table, key=lambda r: r[1])[0]
    return winner, table
