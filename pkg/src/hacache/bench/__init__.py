"""Benchmark scenarios and the ``hacache-bench`` command line."""
