"""
Unit tests for named random streams and the error hierarchy.
"""

import numpy as np
import pytest

from augmanifold.errors import (
    AugmanifoldError,
    ConfigurationError,
    DataError,
    DomainError,
    ExtensionError,
    NumericalError,
    ParseError,
    TrainingError,
)
from augmanifold.rng import derive_seed, stream


class TestStream:
    """stream(seed, *path)"""

    def test_reproducible(self):
        """Same seed and path give the same draws"""
        np.testing.assert_array_equal(stream(7, "views", 3).random(5), stream(7, "views", 3).random(5))

    def test_order_independent(self):
        """Drawing from one stream does not shift another"""
        expected = stream(7, "labels").random(4)
        stream(7, "views").random(1000)
        np.testing.assert_array_equal(stream(7, "labels").random(4), expected)

    @pytest.mark.parametrize(("a", "b"), [((1, "x"), (2, "x")), ((1, "x"), (1, "y")), ((1, 0), (1, 1)), ((1,), (1, "x"))])
    def test_distinct(self, a, b):
        """Different seeds or paths give different draws"""
        assert not np.array_equal(stream(*a).random(4), stream(*b).random(4))

    def test_negative_label(self):
        """Integer labels must be non-negative"""
        with pytest.raises(ValueError):
            stream(1, -1)

    def test_philox(self):
        """Streams are counter-based"""
        assert isinstance(stream(0).bit_generator, np.random.Philox)


class TestDeriveSeed:
    """Child seeds"""

    def test_stable(self):
        """A child seed is a deterministic 63-bit integer"""
        seed = derive_seed(11, "repeat", 4)
        assert seed == derive_seed(11, "repeat", 4)
        assert 0 <= seed < 2**63

    def test_children_differ(self):
        """Sibling paths give different seeds"""
        assert len({derive_seed(11, "repeat", r) for r in range(50)}) == 50


class TestErrors:
    """Exception hierarchy and exit codes"""

    @pytest.mark.parametrize(
        ("error", "code"),
        [
            (AugmanifoldError("x"), 1),
            (ConfigurationError("x"), 2),
            (DomainError("x"), 2),
            (ParseError("x"), 3),
            (DataError("x"), 4),
            (NumericalError("x"), 4),
            (ExtensionError("x", 2), 4),
            (TrainingError("x", 3), 5),
        ],
    )
    def test_exit_codes(self, error, code):
        """Each family maps to its documented exit code"""
        assert isinstance(error, AugmanifoldError)
        assert error.exit_code == code

    def test_parse_offset(self):
        """The byte offset is kept and reported"""
        error = ParseError("bad magic", offset=0)
        assert error.offset == 0
        assert "offset 0" in str(error)

    def test_context_attributes(self):
        """Extension and training errors carry their component and epoch"""
        assert ExtensionError("unstable", 1).component == 1
        assert TrainingError("diverged", 12).epoch == 12
        assert "epoch 12" in str(TrainingError("diverged", 12))

    def test_value_error_compatible(self):
        """Configuration problems are also ValueErrors"""
        assert isinstance(ConfigurationError("x"), ValueError)
