"""Test parameter vectors, partitions, norms, and random streams."""

from parzpo.core import (
    Partition,
    RngStream,
    Role,
    block_sum_norm,
    make_partition,
    mask_apply,
    param_vector,
    sign_scalar,
)
import math
import numpy as np
import pytest


class TestParamVector:
    """Test param_vector."""

    def test_read_only(self):
        """The vector is a read-only float copy."""

        values = [1, 2, 3]
        vector = param_vector(values)
        assert vector.dtype == float
        with pytest.raises(ValueError):
            vector[0] = 5.0

    def test_dimension(self):
        """Test the dimension check."""

        with pytest.raises(ValueError, match="expected a vector of dimension 4, got 3"):
            param_vector([1, 2, 3], d=4)

    def test_non_finite(self):
        """Non-finite entries are rejected."""

        with pytest.raises(ValueError, match="non-finite"):
            param_vector([1.0, np.nan])


class TestPartition:
    """Test make_partition and the Partition class."""

    @pytest.mark.parametrize(
        "d, K, sizes",
        [
            (10, 3, (4, 3, 3)),
            (64, 4, (16, 16, 16, 16)),
            (7, 7, (1,) * 7),
            (5, 1, (5,)),
            (4546, 5, (910, 909, 909, 909, 909)),
        ],
    )
    def test_contiguous_sizes(self, d, K, sizes):
        """The first d mod K blocks receive one extra coordinate."""

        partition = make_partition(d, K)
        assert partition.sizes == sizes
        assert partition.K == K

    def test_contiguous_blocks(self):
        """Contiguous blocks in index order."""

        partition = make_partition(10, 3)
        assert partition.to_list() == [[1, 2, 3, 4], [5, 6, 7], [8, 9, 10]]

    def test_shuffled(self):
        """A shuffled partition is a deterministic function of the stream."""

        first = make_partition(20, 3, "shuffled", RngStream(1, (Role.PARTITION, 0)))
        second = make_partition(20, 3, "shuffled", RngStream(1, (Role.PARTITION, 0)))
        other = make_partition(20, 3, "shuffled", RngStream(2, (Role.PARTITION, 0)))

        assert first == second
        assert first != other
        assert first.sizes == (7, 7, 6)
        assert sorted(np.concatenate(first.blocks).tolist()) == list(range(20))

    @pytest.mark.parametrize(
        "d, K, message",
        [
            (0, 1, "dimension d must be positive"),
            (4, 0, "block count K must satisfy"),
            (4, 5, "block count K must satisfy 1 <= K <= d=4, got 5"),
        ],
    )
    def test_invalid_sizes(self, d, K, message):
        """Test the size validation."""

        with pytest.raises(ValueError, match=message):
            make_partition(d, K)

    def test_invalid_mode(self):
        """Test the mode validation."""

        with pytest.raises(ValueError, match="unknown partition mode 'random'"):
            make_partition(4, 2, "random")
        with pytest.raises(ValueError, match="requires an rng stream"):
            make_partition(4, 2, "shuffled")

    @pytest.mark.parametrize(
        "blocks, message",
        [
            (([0, 1], [1, 2]), "disjoint and cover"),
            (([0], [1]), "disjoint and cover"),
            (([0, 1, 2], [3]), "differ by at most 1"),
            (([0, 1, 2, 3], []), "non-empty"),
        ],
    )
    def test_invalid_blocks(self, blocks, message):
        """Test the partition invariants."""

        with pytest.raises(ValueError, match=message):
            Partition(blocks, 4)

    def test_mask(self):
        """Masks are binary and the masks of all blocks sum to ones."""

        partition = make_partition(10, 3)
        masks = [partition.mask(k) for k in range(3)]
        assert masks[1].tolist() == [0, 0, 0, 0, 1, 1, 1, 0, 0, 0]
        assert np.array_equal(sum(m.astype(int) for m in masks), np.ones(10))

        with pytest.raises(ValueError, match="block index 3 out of range for K=3"):
            partition.mask(3)


class TestBlockSumNorm:
    """Test block_sum_norm."""

    def test_example(self):
        """Blocks {1, 2} and {3} of (3, 4, 12): 5 + 12."""

        partition = Partition(([0, 1], [2]), 3)
        assert block_sum_norm([3.0, 4.0, 12.0], partition) == 17.0

    def test_limits(self):
        """K = 1 gives the Euclidean norm, K = d the l1 norm."""

        v = np.array([3.0, -4.0, 1.0, 2.0])
        assert block_sum_norm(v, make_partition(4, 1)) == pytest.approx(math.sqrt(30))
        assert block_sum_norm(v, make_partition(4, 4)) == pytest.approx(10.0)

    def test_sandwich(self):
        """Euclidean norm <= block-sum norm <= sqrt(K) Euclidean norm."""

        gen = RngStream(3, (Role.CHECK, 99)).generator
        for K in (1, 2, 5, 12):
            partition = make_partition(12, K)
            v = gen.standard_normal(12)
            l2 = np.linalg.norm(v)
            norm = block_sum_norm(v, partition)
            assert l2 <= norm * (1 + 1e-12)
            assert norm <= math.sqrt(K) * l2 * (1 + 1e-12)

    def test_dimension(self):
        """Test the dimension check."""

        with pytest.raises(ValueError, match="does not match partition dimension 4"):
            block_sum_norm([1.0, 2.0], make_partition(4, 2))


def test_mask_apply():
    """Entries outside the mask are exactly zero."""

    result = mask_apply([1.5, -2.0, 3.0], [1, 0, 1])
    assert result.tolist() == [1.5, 0.0, 3.0]

    with pytest.raises(ValueError, match="does not match mask shape"):
        mask_apply([1.0, 2.0], [1, 0, 1])


@pytest.mark.parametrize("x, sign", [(2.5, 1), (-1e-300, -1), (0.0, 0), (0, 0)])
def test_sign_scalar(x, sign):
    """sign(0) is 0."""

    assert sign_scalar(x) == sign


class TestRngStream:
    """Test RngStream."""

    def test_reproducible(self):
        """The same seed and stream id give the same draws."""

        first = RngStream(7, (Role.PERTURB, 3, 1)).generator.random(5)
        second = RngStream(7, (Role.PERTURB, 3, 1)).generator.random(5)
        assert np.array_equal(first, second)

    def test_independent_ids(self):
        """Different stream ids give different draws."""

        first = RngStream(7, (Role.PERTURB, 3, 1)).generator.random(5)
        second = RngStream(7, (Role.PERTURB, 3, 2)).generator.random(5)
        assert not np.array_equal(first, second)

    def test_child(self):
        """A child stream extends the stream id, independent of creation order."""

        parent = RngStream(7, (Role.AGENT, 1))
        parent.generator.random(100)
        child = parent.child(4)

        assert child.stream_id == (3, 1, 4)
        assert np.array_equal(
            child.generator.random(3), RngStream(7, (Role.AGENT, 1, 4)).generator.random(3)
        )

    @pytest.mark.parametrize(
        "seed, stream_id, message",
        [
            (-1, (), "64-bit unsigned"),
            (2**64, (), "64-bit unsigned"),
            (0, (1, -2), "non-negative"),
        ],
    )
    def test_invalid(self, seed, stream_id, message):
        """Test the seed and label validation."""

        with pytest.raises(ValueError, match=message):
            RngStream(seed, stream_id)

    def test_repr(self):
        """Test the representation."""

        assert repr(RngStream(5, (Role.EVAL, 2))) == "RngStream(seed=5, stream_id=(5, 2))"
