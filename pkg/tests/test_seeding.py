"""Tests for seed derivation."""

import numpy as np

from ssa_changepoint.seeding import derive_seed, make_rng


class TestDeriveSeed:
    """Tests for derive_seed and make_rng."""

    def test_reproducible(self) -> None:
        """The same inputs give the same seed."""
        assert derive_seed(3, "ssa", 2) == derive_seed(3, "ssa", 2)

    def test_streams_are_separate(self) -> None:
        """Stage name, index and master each change the seed."""
        seeds = {
            derive_seed(3, "ssa", 2),
            derive_seed(3, "synth", 2),
            derive_seed(3, "ssa", 1),
            derive_seed(4, "ssa", 2),
        }
        assert len(seeds) == 4

    def test_range(self) -> None:
        """Seeds fit in 63 bits."""
        for index in range(20):
            assert 0 <= derive_seed(0, "bnise", index) < 2**63

    def test_generators_agree(self) -> None:
        """Two generators for one stage draw the same numbers."""
        first = make_rng(1, "projection").standard_normal(5)
        second = make_rng(1, "projection").standard_normal(5)
        np.testing.assert_array_equal(first, second)
