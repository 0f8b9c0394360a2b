"""Computational models of engram formation: plasticity, associative and
sparse distributed memory, sparsity penalties, engram gating, and spiking
assemblies, plus a reproducible experiment harness."""

__version__ = "0.1.0"
