import numpy as np
import pytest

from inrec import BlockPartition, compute_block_count, partition_weights


def test_block_count_floor_at_one():
    assert compute_block_count(0.0, 16.0) == 1


def test_block_count_ceiling():
    assert compute_block_count(1000.0, 16.0) == 63
    assert compute_block_count(32.0, 16.0) == 2
    assert compute_block_count(0.5, 16.0) == 1


def test_block_count_rejects_bad_kappa():
    with pytest.raises(ValueError):
        compute_block_count(10.0, 0.0)
    with pytest.raises(ValueError):
        compute_block_count(10.0, -1.0)
    with pytest.raises(ValueError):
        compute_block_count(-1.0, 16.0)


def test_each_heavy_weight_gets_its_own_block():
    part = partition_weights(np.array([10.0, 10.0, 10.0]), 16.0, seed=4)
    assert part.n_blocks == 3
    order = np.concatenate(part.blocks)
    assert sorted(order.tolist()) == [0, 1, 2]
    assert np.array_equal(order, np.random.default_rng(4).permutation(3))


def test_light_weights_share_one_block():
    part = partition_weights(np.array([4.0, 4.0, 4.0, 4.0]), 16.0, seed=0)
    assert part.n_blocks == 1
    assert sorted(part.blocks[0].tolist()) == [0, 1, 2, 3]


def test_single_weight_over_budget_is_a_singleton():
    part = partition_weights(np.array([40.0, 1.0, 1.0]), 16.0, seed=2)
    sums = [np.sum(np.array([40.0, 1.0, 1.0])[b]) for b in part.blocks]
    assert any(s > 16.0 for s in sums)
    for block, s in zip(part.blocks, sums):
        if s > 16.0:
            assert block.size == 1


def replay_next_fit(kl, kappa, seed):
    """Independent trace of the greedy assignment for the oracle check."""
    order = np.random.default_rng(seed).permutation(kl.size)
    blocks, current, total = [], [], 0.0
    for idx in order:
        if current and total + kl[idx] > kappa:
            blocks.append(np.array(current, dtype=np.int64))
            current, total = [], 0.0
        current.append(idx)
        total += kl[idx]
    blocks.append(np.array(current, dtype=np.int64))
    return blocks


def test_next_fit_replay_oracle():
    rng = np.random.default_rng(7)
    for trial in range(20):
        kl = rng.exponential(4.0, size=100)
        part = partition_weights(kl, 16.0, seed=trial)
        expected = replay_next_fit(kl, 16.0, trial)
        assert part.n_blocks == len(expected)
        for got, want in zip(part.blocks, expected):
            assert np.array_equal(got, want)


def test_greedy_invariant_on_random_instances():
    rng = np.random.default_rng(8)
    for trial in range(10):
        kl = rng.exponential(3.0, size=100)
        part = partition_weights(kl, 16.0, seed=100 + trial)
        order = np.concatenate(part.blocks)
        position = 0
        for block in part.blocks:
            total = float(kl[block].sum())
            assert total <= 16.0 or block.size == 1
            position += block.size
            if position < order.size:
                assert total + kl[order[position]] > 16.0


def test_partition_determinism_and_coverage():
    kl = np.random.default_rng(9).exponential(2.0, size=64)
    a = partition_weights(kl, 16.0, seed=5)
    b = partition_weights(kl, 16.0, seed=5)
    c = partition_weights(kl, 16.0, seed=6)
    assert a.n_blocks == b.n_blocks
    for x, y in zip(a.blocks, b.blocks):
        assert np.array_equal(x, y)
    assert any(not np.array_equal(x, y) for x, y in zip(a.blocks, c.blocks))

    covered = np.sort(np.concatenate(a.blocks))
    assert np.array_equal(covered, np.arange(64))
    assert a.n_weights == 64
    assert a.permutation_seed == 5


def test_block_ids_inverse_mapping():
    kl = np.random.default_rng(10).exponential(2.0, size=40)
    part = partition_weights(kl, 8.0, seed=1)
    ids = part.block_ids()
    for k, block in enumerate(part.blocks):
        assert np.all(ids[block] == k)


def test_partition_validation():
    with pytest.raises(ValueError):
        BlockPartition(blocks=(), kappa_bits=16.0, permutation_seed=0)
    with pytest.raises(ValueError):
        BlockPartition(blocks=(np.array([0, 1]), np.array([1, 2])),
                       kappa_bits=16.0, permutation_seed=0)
    with pytest.raises(ValueError):
        partition_weights(np.array([1.0, -0.5]), 16.0, seed=0)
    with pytest.raises(ValueError):
        partition_weights(np.array([1.0]), 0.0, seed=0)


def test_empty_kl_vector_rejected():
    with pytest.raises(ValueError):
        partition_weights(np.array([]), 16.0, seed=0)
