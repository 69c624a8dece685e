"""Reproduction harness: adversarial matrix, microbenchmarks, loopback HTTP
overhead, conformance vectors, and the end-to-end walkthrough."""

from .attacks import AttackReport, run_attack_suite
from .bench import BenchReport, run_http_overhead, run_microbench
from .vectors import check_conformance_vectors, emit_conformance_vectors
from .walkthrough import run_walkthrough
