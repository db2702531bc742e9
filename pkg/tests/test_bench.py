import io
import itertools

import numpy as np
import pytest

from twopass.bench import (CSV_HEADER, BenchConfig, BenchRecord, CacheTopology, TopologyUnavailableError,
                           WORKLOADS, default_sweep_sizes, detect_cache_topology, frequency_scaling_warnings,
                           geometric_sizes, get_workload, median_protocol, parse_size, run_benchmark,
                           run_size_sweep, run_thread_scaling, scaling_thread_counts, two_pass_ratio,
                           verify_cost_model, write_csv, write_plot_data)
from twopass.bench import topology as topo
from twopass.bench import workloads as wl

SMALL = CacheTopology(32768, 1048576, 8650752, 6, 12)
FAST = dict(min_runtime_seconds=0.01, repetitions=3)


def write_ini(path, **over):
    vals = dict(l1_bytes=32768, l2_bytes=1048576, l3_bytes=8650752, core_count=6, logical_cpu_count=12)
    vals.update(over)
    path.write_text("[topology]\n" + "".join(f"{k} = {v}\n" for k, v in vals.items()))
    return path


class TestTopology:
    def test_config_echoed_verbatim(self, tmp_path):
        t = detect_cache_topology(write_ini(tmp_path / "t.ini"))
        assert (t.l1_bytes, t.l2_bytes, t.l3_bytes, t.core_count, t.logical_cpu_count) == \
            (32768, 1048576, 8650752, 6, 12)

    def test_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv(topo.ENV_VAR, str(write_ini(tmp_path / "t.ini", l3_bytes="16M")))
        assert detect_cache_topology().l3_bytes == 16 << 20

    def test_missing_config(self, tmp_path):
        with pytest.raises(TopologyUnavailableError):
            detect_cache_topology(tmp_path / "nope.ini")

    def test_unknown_platform(self, monkeypatch):
        monkeypatch.delenv(topo.ENV_VAR, raising=False)
        monkeypatch.setattr(topo, "_SYSFS_CPU", topo.Path("/nonexistent/cpu"))
        with pytest.raises(TopologyUnavailableError, match="config"):
            detect_cache_topology()

    def test_ordering_enforced(self, tmp_path):
        with pytest.raises(ValueError):
            detect_cache_topology(write_ini(tmp_path / "t.ini", l2_bytes=16))
        with pytest.raises(ValueError):
            CacheTopology(0, 1, 2, 1, 1)

    def test_sysfs_tree(self, tmp_path):
        caches = [(1, "Data", "48K"), (1, "Instruction", "32K"), (2, "Unified", "2048K"), (3, "Unified", "105M")]
        for cpu in range(4):
            base = tmp_path / f"cpu{cpu}"
            (base / "topology").mkdir(parents=True)
            (base / "topology" / "physical_package_id").write_text("0\n")
            (base / "topology" / "core_id").write_text(f"{cpu // 2}\n")
            for i, (lvl, kind, size) in enumerate(caches):
                d = base / "cache" / f"index{i}"
                d.mkdir(parents=True)
                (d / "level").write_text(f"{lvl}\n")
                (d / "type").write_text(f"{kind}\n")
                (d / "size").write_text(f"{size}\n")
        t = topo.from_sysfs(tmp_path)
        assert (t.l1_bytes, t.l2_bytes, t.l3_bytes) == (48 << 10, 2 << 20, 105 << 20)
        assert (t.core_count, t.logical_cpu_count) == (2, 4)

    def test_this_machine(self):
        t = detect_cache_topology()
        assert t.l1_bytes <= t.l2_bytes <= t.l3_bytes
        assert 1 <= t.core_count <= t.logical_cpu_count


class TestCostModel:
    def test_two_pass_bytes(self):
        assert get_workload("softmax_two_pass").cost(1024) == (8192, 4096)

    @pytest.mark.parametrize("name,reads,writes,esize", [
        ("softmax_recompute", 3, 1, 4), ("softmax_reload", 3, 2, 4), ("softmax_two_pass", 2, 1, 4),
        ("pass1_max", 1, 0, 4), ("pass2_recompute", 1, 0, 4), ("pass2_reload", 1, 1, 4),
        ("pass3_recompute", 1, 1, 4), ("pass3_reload", 1, 1, 4), ("two_pass_p1", 1, 0, 4),
        ("two_pass_p2", 1, 1, 4), ("stream_copy", 1, 1, 8), ("stream_scale", 1, 1, 8),
        ("stream_scale_inplace", 1, 1, 8),
    ])
    def test_table(self, name, reads, writes, esize):
        assert get_workload(name).cost(100) == (reads * 100 * esize, writes * 100 * esize)

    def test_all_workloads_listed(self):
        assert len(WORKLOADS) == 13

    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown workload"):
            get_workload("softmax_one_pass")

    @pytest.mark.parametrize("n", [1, 17, 1024])
    def test_verify(self, n):
        assert verify_cost_model("three_pass_recompute", n) == (3 * n, n)
        assert verify_cost_model("three_pass_reload", n) == (3 * n, 2 * n)
        assert verify_cost_model("two_pass", n) == (2 * n, n)
        assert verify_cost_model("softmax_two_pass", n) == (2 * n, n)


class TestProtocol:
    def fake(self, costs):
        """Sampler and clock where iteration i takes costs[i] seconds."""
        it = itertools.chain(costs, itertools.repeat(costs[-1]))
        now = [0.0]

        def sample(k):
            total = sum(next(it) for _ in range(k))
            now[0] += total
            return total

        return sample, lambda: now[0]

    def test_median_ignores_one_outlier(self):
        # warm-up, then 5 reps of 1 iteration each; one rep is 1000x slower
        sample, clock = self.fake([1.0, 1.0, 1.0, 1000.0, 1.0, 1.0])
        med, means, iters = median_protocol(sample, 0.5, 5, clock)
        assert med == 1.0 and max(means) == 1000.0 and iters == 1

    def test_reps_meet_min_runtime(self):
        sample, clock = self.fake([0.01])
        med, means, _ = median_protocol(sample, 0.1, 3, clock)
        assert med == pytest.approx(0.01) and len(means) == 3

    def test_outlier_in_real_run_path(self):
        # inject a fake timer into run_benchmark: one slow iteration among many
        ticks = itertools.count()
        slow = {10}

        def timer():
            i = next(ticks)
            return i * 1e-3 + (5.0 if i // 2 in slow and i % 2 else 0.0)

        cfg = BenchConfig("softmax_two_pass", 64, min_runtime_seconds=1e-9, repetitions=25, eviction="none")
        rec = run_benchmark(cfg, timer=timer)
        assert rec.median_time_s == pytest.approx(1e-3)
        assert max(rec.samples) > 1.0


class TestRun:
    def test_n1_record(self):
        rec = run_benchmark(BenchConfig("softmax_two_pass", 1, **FAST))
        assert rec.median_time_s > 0 and (rec.bytes_read, rec.bytes_written) == (8, 4)
        assert rec.eviction_mode in ("clflush", "thrash")

    @pytest.mark.parametrize("name", list(WORKLOADS))
    def test_every_workload(self, name):
        rec = run_benchmark(BenchConfig(name, 4099, **FAST))
        assert rec.bandwidth_bytes_per_s == pytest.approx((rec.bytes_read + rec.bytes_written) / rec.median_time_s)
        assert rec.elements_per_s == pytest.approx(4099 / rec.median_time_s)

    def test_threads(self):
        rec = run_benchmark(BenchConfig("softmax_reload", 10000, threads=2, **FAST))
        assert rec.threads == 2 and rec.median_time_s > 0
        rec = run_benchmark(BenchConfig("stream_scale", 10000, threads=3, **FAST))
        assert rec.threads == 3

    def test_thrash_eviction(self):
        tiny = CacheTopology(1024, 2048, 65536, 1, 1)
        rec = run_benchmark(BenchConfig("stream_copy", 1000, eviction="thrash", **FAST), tiny)
        assert rec.eviction_mode == "thrash"

    def test_same_config_same_accounting(self):
        cfg = BenchConfig("softmax_recompute", 333, **FAST)
        a, b = run_benchmark(cfg), run_benchmark(cfg)
        assert (a.bytes_read, a.bytes_written) == (b.bytes_read, b.bytes_written)

    @pytest.mark.parametrize("bad", [dict(size_elements=0), dict(threads=0), dict(repetitions=0),
                                     dict(min_runtime_seconds=0), dict(eviction="magic"),
                                     dict(workload="nope")])
    def test_config_validation(self, bad):
        kw = dict(workload="softmax_two_pass", size_elements=10)
        kw.update(bad)
        with pytest.raises(ValueError):
            BenchConfig(**kw)


class TestSweep:
    def test_parse_size(self):
        assert parse_size("4096") == 4096
        assert parse_size("16M") == 16 << 20
        assert parse_size("1.5K") == 1536
        assert parse_size("4xLLC", SMALL) == 4 * 8650752 // 4
        assert parse_size("4xLLC", SMALL, "stream_copy") == 4 * 8650752 // 8
        with pytest.raises(ValueError):
            parse_size("12.5")

    def test_geometric(self):
        s = geometric_sizes(256, 16 << 20)
        assert s[0] == 256 and s[-1] == 16 << 20 and s == sorted(set(s))
        ratios = np.diff(np.log2(s))
        assert ratios.max() - ratios.min() < 0.01
        assert geometric_sizes(10, 10) == [10]

    def test_default_sizes_cross_boundaries(self):
        sizes = default_sweep_sizes(SMALL)
        llc4 = 4 * SMALL.l3_bytes // 4
        assert sum(s >= llc4 for s in sizes) >= 3
        for _, b in SMALL.boundaries():
            assert min(sizes) * 4 < b < max(sizes) * 4

    def test_sweep_cardinality(self):
        names = ["softmax_recompute", "softmax_reload", "softmax_two_pass"]
        seen = []
        recs = run_size_sweep(names, [64, 256, 1024, 4096], progress=seen.append, **FAST)
        assert len(recs) == 12 == len(seen)
        assert [r.size_elements for r in recs[:4]] == [64, 256, 1024, 4096]
        assert two_pass_ratio(recs, 1024) > 0

    def test_thread_scaling(self):
        counts = scaling_thread_counts(SMALL)
        assert counts == [1, 6, 12]
        recs = run_thread_scaling(["softmax_two_pass"], [1, 2], size=5000, topology=SMALL, **FAST)
        assert [r.threads for r in recs] == [1, 2]
        assert all(r.size_elements == 5000 for r in recs)

    def test_ratio(self):
        mk = lambda w, n, t: BenchRecord(BenchConfig(w, n), t, 1, 1, "none")
        recs = [mk("softmax_two_pass", 100, 0.8), mk("softmax_reload", 100, 1.0),
                mk("softmax_two_pass", 10, 5.0), mk("softmax_reload", 10, 1.0)]
        assert two_pass_ratio(recs, 50) == pytest.approx(0.8)
        assert two_pass_ratio(recs[:1], 50) is None


class TestOutput:
    def records(self):
        return [BenchRecord(BenchConfig("stream_copy", 1000), 1e-6, 8000, 8000, "clflush"),
                BenchRecord(BenchConfig("softmax_two_pass", 1000), 2e-6, 8000, 4000, "clflush")]

    def test_csv(self):
        buf = io.StringIO()
        write_csv(self.records(), buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == CSV_HEADER
        assert lines[0] == ("workload,size_elements,threads,median_time_s,bytes_read,bytes_written,"
                            "bandwidth_bytes_per_s,elements_per_s,eviction_mode")
        f = lines[1].split(",")
        assert f[0] == "stream_copy" and float(f[6]) == pytest.approx(1.6e10) and f[8] == "clflush"

    def test_plot_data(self):
        buf = io.StringIO()
        write_plot_data(self.records(), buf, SMALL)
        text = buf.getvalue()
        assert "# boundary L1 bytes=32768" in text and "# boundary L3 bytes=8650752" in text
        data = [ln.split() for ln in text.splitlines() if ln and not ln.startswith("#")]
        assert len(data) == 2 and all(len(d) == 9 for d in data)
        assert "\n\n\n# workload softmax_two_pass" in text


def test_frequency_warnings(tmp_path):
    assert frequency_scaling_warnings(tmp_path)  # nothing visible -> warn
    (tmp_path / "cpu0" / "cpufreq").mkdir(parents=True)
    (tmp_path / "cpu0" / "cpufreq" / "scaling_governor").write_text("performance\n")
    assert frequency_scaling_warnings(tmp_path) == []
    (tmp_path / "cpu0" / "cpufreq" / "scaling_governor").write_text("powersave\n")
    (tmp_path / "intel_pstate").mkdir()
    (tmp_path / "intel_pstate" / "no_turbo").write_text("0\n")
    msgs = frequency_scaling_warnings(tmp_path)
    assert len(msgs) == 2 and "powersave" in msgs[0]


def test_tsc_calibration():
    assert 1e8 < wl.tsc_hz() < 1e10
