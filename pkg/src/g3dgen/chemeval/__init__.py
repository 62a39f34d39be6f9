from .bonds import BondGraph, VALENCE_TABLE, Validity, check_validity, perceive_bonds
from .distributions import Histogram, adf, rdf
from .hashing import canonical_hash
from .report import StatsReport, statistics_report, write_report
from .rings import relevant_cycles, ring_counts, sssr, sssr_counts

__all__ = [
    "BondGraph", "VALENCE_TABLE", "Validity", "check_validity", "perceive_bonds",
    "Histogram", "adf", "rdf", "canonical_hash", "StatsReport", "statistics_report",
    "write_report", "relevant_cycles", "ring_counts", "sssr", "sssr_counts",
]
