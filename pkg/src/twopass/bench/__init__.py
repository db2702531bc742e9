"""Benchmark harness: cache-aware sweeps, STREAM baselines, thread scaling, cost model."""

from .harness import (CSV_HEADER, BenchConfig, BenchRecord, default_sweep_sizes, frequency_scaling_warnings,
                      geometric_sizes, median_protocol, parse_size, run_benchmark, run_size_sweep,
                      run_thread_scaling, scaling_thread_counts, two_pass_ratio, verify_cost_model, write_csv,
                      write_plot_data)
from .topology import CacheTopology, TopologyUnavailableError, detect_cache_topology
from .workloads import SOFTMAX_WORKLOADS, STREAM_WORKLOADS, WORKLOADS, Workload, get_workload

__all__ = [
    "CSV_HEADER", "BenchConfig", "BenchRecord", "CacheTopology", "TopologyUnavailableError", "Workload",
    "WORKLOADS", "SOFTMAX_WORKLOADS", "STREAM_WORKLOADS", "default_sweep_sizes", "detect_cache_topology",
    "frequency_scaling_warnings", "geometric_sizes", "get_workload", "median_protocol", "parse_size",
    "run_benchmark", "run_size_sweep", "run_thread_scaling", "scaling_thread_counts", "two_pass_ratio",
    "verify_cost_model", "write_csv", "write_plot_data",
]
