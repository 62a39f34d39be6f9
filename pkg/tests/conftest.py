import numpy as np
import pytest

from g3dgen.geometry import DistanceBinSpec, PointSet, TypeVocabulary
from g3dgen.model import GenerativeModel, ModelConfig

SMALL = ModelConfig(n_features=16, n_blocks=2)


def small_model(use_origin_token: bool = True, seed: int = 0, config: ModelConfig = SMALL):
    vocab = TypeVocabulary(use_origin_token=use_origin_token)
    return GenerativeModel(vocab, DistanceBinSpec(), config).reset_parameters(
        np.random.default_rng(seed))


def random_context(rng, vocab: TypeVocabulary, n_atoms: int | None = None, spread: float = 2.0):
    """Tokens followed by random atoms; the focus sits on one of the atoms."""
    n = int(rng.integers(1, 7)) if n_atoms is None else n_atoms
    atoms = rng.normal(scale=spread, size=(n, 3))
    focus = atoms[int(rng.integers(n))]
    tokens = [focus] + ([np.zeros(3)] if vocab.use_origin_token else [])
    types = list(vocab.token_types) + list(rng.choice(vocab.elements, size=n))
    return PointSet(np.vstack([np.array(tokens), atoms]), types, vocab.n_tokens)


@pytest.fixture
def model():
    return small_model()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_connected_edges(rng, n: int, extra: int = 0) -> list[tuple[int, int]]:
    """Random spanning tree on ``n`` nodes plus up to ``extra`` additional edges."""
    edges = {(int(rng.integers(i)), i) for i in range(1, n)}
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in edges]
    if pairs and extra:
        for k in rng.choice(len(pairs), size=min(extra, len(pairs)), replace=False):
            edges.add(pairs[k])
    return sorted(edges)


def random_molecule(rng, max_atoms: int = 9):
    """A random connected 'molecule': arbitrary elements, positions and bonds."""
    from g3dgen.chemeval import BondGraph
    from g3dgen.dataio import MoleculeRecord

    n = int(rng.integers(1, max_atoms + 1))
    elements = list(rng.choice(["H", "C", "N", "O", "F"], size=n))
    edges = random_connected_edges(rng, n, int(rng.integers(0, 3)))
    rec = MoleculeRecord(elements, rng.normal(scale=1.5, size=(n, 3)), bonds=edges)
    return rec, BondGraph.from_edges(elements, edges)


def pytest_terminal_summary(terminalreporter):
    import sys
    lines = getattr(sys.modules.get("test_acceptance"), "LINES", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
