"""Index from modelled relations to the operations that implement them.

``docs/equation_index.tsv`` has one row per modelled relation with columns
(anchor, quote, module, operation, deviation). ``anchor`` is a stable
concept key, ``quote`` a one-line statement of the relation and
``deviation`` notes any departure in the implementation ("-" for none).
:func:`check_index_completeness` keeps that table and
:data:`MODELLED_OPERATIONS` in step.
"""
from __future__ import annotations

import csv
import importlib
from dataclasses import dataclass, field
from pathlib import Path

INDEX_COLUMNS = ("anchor", "quote", "module", "operation", "deviation")
DEFAULT_INDEX = Path(__file__).resolve().parents[2] / "docs" / "equation_index.tsv"

# every operation that implements a modelled relation (plumbing excluded)
MODELLED_OPERATIONS = (
    "core.hamming_distance",
    "core.random_sparse_pattern",
    "plasticity.hebbian_derivative",
    "plasticity.spass_derivative",
    "plasticity.spass_derivative_kappa_form",
    "plasticity.spass_fixed_point_weight",
    "plasticity.spass_fixed_point_activity",
    "plasticity.integrate",
    "assoc_memory.store_patterns",
    "assoc_memory.recall",
    "assoc_memory.partial_cue",
    "assoc_memory.consolidate_prune",
    "assoc_memory.measure_capacity",
    "sdm.activate",
    "sdm.write",
    "sdm.read",
    "sdm.read_iterative",
    "sdm.topk_forward",
    "sdm.topk_hebbian_update",
    "regularizers.RegularizedObjective",
    "regularizers.l0_norm",
    "regularizers.l0_relaxed_loss",
    "regularizers.l1_penalty",
    "regularizers.l1_objective",
    "regularizers.train_sparse_autoencoder",
    "regularizers.kl_bernoulli",
    "engram_gate.gate_probabilities",
    "engram_gate.sample_gates",
    "engram_gate.gated_forward",
    "engram_gate.train_continual",
    "stdp_snn.stdp_delta",
    "stdp_snn.step",
    "stdp_snn.run_assembly_experiment",
    "stdp_snn.calcium_update",
)


@dataclass
class IndexReport:
    missing: list = field(default_factory=list)  # registered operations without an entry
    unregistered: list = field(default_factory=list)  # entries naming no registered operation
    duplicates: list = field(default_factory=list)  # operations or anchors listed twice
    unresolved: list = field(default_factory=list)  # registered names that do not import
    malformed: list = field(default_factory=list)  # rows with bad shape or empty fields

    @property
    def ok(self) -> bool:
        return not (self.missing or self.unregistered or self.duplicates or self.unresolved
                    or self.malformed)

    def failures(self) -> list[str]:
        out = [f"missing index entry: {op}" for op in self.missing]
        out += [f"entry for unregistered operation: {op}" for op in self.unregistered]
        out += [f"duplicate entry: {x}" for x in self.duplicates]
        out += [f"registered operation does not exist: {op}" for op in self.unresolved]
        out += [f"malformed row: {x}" for x in self.malformed]
        return out

    def __str__(self):
        return "index complete" if self.ok else "\n".join(self.failures())


def read_index(path=DEFAULT_INDEX) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or tuple(header) != INDEX_COLUMNS:
            raise ValueError(f"index header must be {', '.join(INDEX_COLUMNS)}")
        return [dict(zip(INDEX_COLUMNS, row)) | {"_width": len(row)} for row in reader if row]


def _resolves(name: str) -> bool:
    module, attr = name.split(".", 1)
    try:
        return hasattr(importlib.import_module(f"engramlab.{module}"), attr)
    except ImportError:
        return False


def check_index_completeness(path=DEFAULT_INDEX, registered=MODELLED_OPERATIONS) -> IndexReport:
    """Compare the index table with the registered operations.

    Raises FileNotFoundError when the index file is absent.
    """
    rows = read_index(path)
    report = IndexReport()
    seen_ops, seen_anchors = set(), set()
    for n, row in enumerate(rows, start=2):
        if row["_width"] != len(INDEX_COLUMNS) or not all(row[c].strip() for c in INDEX_COLUMNS):
            report.malformed.append(f"line {n}")
            continue
        op = f"{row['module']}.{row['operation']}"
        if op in seen_ops:
            report.duplicates.append(op)
        if row["anchor"] in seen_anchors:
            report.duplicates.append(row["anchor"])
        seen_ops.add(op)
        seen_anchors.add(row["anchor"])
        if op not in registered:
            report.unregistered.append(op)
    report.missing = [op for op in registered if op not in seen_ops]
    report.unresolved = [op for op in registered if not _resolves(op)]
    return report
