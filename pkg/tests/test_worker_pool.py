import numpy as np

from services.worker_pool import WorkerPool, chunk_indices, keyed_rng


def test_keyed_streams_are_reproducible_and_independent():
    a = keyed_rng(11, 3).random(5)
    np.testing.assert_array_equal(a, keyed_rng(11, 3).random(5))
    assert not np.array_equal(a, keyed_rng(11, 4).random(5))
    assert not np.array_equal(a, keyed_rng(12, 3).random(5))


def test_chunks_cover_every_row_once():
    parts = chunk_indices(130, 64)
    assert [len(p) for p in parts] == [64, 64, 2]
    np.testing.assert_array_equal(np.concatenate(parts), np.arange(130))


def test_map_keeps_index_order():
    out = WorkerPool(4).map(lambda i, item: (i, item * 2), list(range(10)))
    assert out == [(i, 2 * i) for i in range(10)]


def test_map_chunks_is_independent_of_worker_count():
    points = np.arange(300.0).reshape(100, 3)

    def noisy(index, rows):
        return rows + keyed_rng(1, index).random(rows.shape)

    np.testing.assert_array_equal(
        WorkerPool(1).map_chunks(noisy, points, chunk_size=16),
        WorkerPool(3).map_chunks(noisy, points, chunk_size=16),
    )
