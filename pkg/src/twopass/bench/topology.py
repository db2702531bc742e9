"""Cache and CPU topology: sysfs on Linux, or an explicit config file.

Config file format (INI)::

    [topology]
    l1_bytes = 32768
    l2_bytes = 1048576
    l3_bytes = 8650752
    core_count = 6
    logical_cpu_count = 12

Located via the ``config_path`` argument or the ``TWOPASS_TOPOLOGY``
environment variable; an explicit config always wins over detection.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from pathlib import Path

ENV_VAR = "TWOPASS_TOPOLOGY"
_SYSFS_CPU = Path("/sys/devices/system/cpu")
_FIELDS = ("l1_bytes", "l2_bytes", "l3_bytes", "core_count", "logical_cpu_count")


class TopologyUnavailableError(RuntimeError):
    pass


@dataclass(frozen=True)
class CacheTopology:
    l1_bytes: int
    l2_bytes: int
    l3_bytes: int
    core_count: int
    logical_cpu_count: int
    source: str = "config"

    def __post_init__(self):
        for name in _FIELDS:
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if not self.l1_bytes <= self.l2_bytes <= self.l3_bytes:
            raise ValueError(f"cache sizes must satisfy l1 <= l2 <= l3, got "
                             f"{self.l1_bytes}, {self.l2_bytes}, {self.l3_bytes}")

    @property
    def llc_bytes(self) -> int:
        return self.l3_bytes

    def boundaries(self) -> list[tuple[str, int]]:
        return [("L1", self.l1_bytes), ("L2", self.l2_bytes), ("L3", self.l3_bytes)]


def parse_size(text: str) -> int:
    """'48K' -> 49152; sysfs and config sizes use binary suffixes."""
    text = text.strip().upper()
    mult = {"K": 1 << 10, "M": 1 << 20, "G": 1 << 30}
    if text and text[-1] in mult:
        return int(text[:-1]) * mult[text[-1]]
    return int(text)


def load_config(path: str | os.PathLike) -> CacheTopology:
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise TopologyUnavailableError(f"cannot read topology config {path}")
    if "topology" not in cp:
        raise TopologyUnavailableError(f"{path}: missing [topology] section")
    sec = cp["topology"]
    missing = [f for f in _FIELDS if f not in sec]
    if missing:
        raise TopologyUnavailableError(f"{path}: missing keys {', '.join(missing)}")
    return CacheTopology(**{f: parse_size(sec[f]) for f in _FIELDS}, source=f"config:{path}")


def _read(p: Path) -> str:
    return p.read_text().strip()


def from_sysfs(root: Path = _SYSFS_CPU) -> CacheTopology:
    cache_dir = root / "cpu0" / "cache"
    sizes = {}
    try:
        for idx in sorted(cache_dir.glob("index*")):
            level = int(_read(idx / "level"))
            kind = _read(idx / "type")
            if kind == "Instruction":
                continue
            sizes[level] = parse_size(_read(idx / "size"))
    except (OSError, ValueError) as exc:
        raise TopologyUnavailableError(f"cannot parse {cache_dir}: {exc}") from exc
    if not {1, 2, 3} <= sizes.keys():
        raise TopologyUnavailableError(f"{cache_dir} does not describe L1, L2 and L3 data caches")

    cores = set()
    logical = 0
    for cpu in root.glob("cpu[0-9]*"):
        topo = cpu / "topology"
        if not topo.is_dir():
            continue
        logical += 1
        try:
            cores.add((_read(topo / "physical_package_id"), _read(topo / "core_id")))
        except OSError:
            cores.add((cpu.name, ""))
    if logical == 0:
        raise TopologyUnavailableError(f"no CPUs listed under {root}")
    return CacheTopology(sizes[1], sizes[2], sizes[3], len(cores), logical, source="sysfs")


def detect_cache_topology(config_path: str | os.PathLike | None = None) -> CacheTopology:
    """Topology from an explicit config, else sysfs; raises if neither is usable."""
    config_path = config_path or os.environ.get(ENV_VAR)
    if config_path:
        return load_config(config_path)
    if _SYSFS_CPU.is_dir():
        return from_sysfs()
    raise TopologyUnavailableError(
        f"cache topology cannot be detected on this platform; pass a config file or set {ENV_VAR}")
