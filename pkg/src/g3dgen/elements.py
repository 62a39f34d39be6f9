"""Per-element constants for the H/C/N/O/F chemistry handled here."""

COVALENT_RADII = {"H": 0.31, "C": 0.76, "N": 0.71, "O": 0.66, "F": 0.57}
VALENCES = {"H": 1, "C": 4, "N": 3, "O": 2, "F": 1}
MASSES = {"H": 1.008, "C": 12.011, "N": 14.007, "O": 15.999, "F": 18.998}

BOND_TOLERANCE = 0.45
