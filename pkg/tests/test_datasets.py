import numpy as np
import pytest

from ddrp import io
from ddrp.datasets import (
    Corpus,
    SplitSpec,
    SyntheticKind,
    gen_synthetic,
    load_corpus,
    near_dependent_columns,
    split,
    write_corpus,
)
from ddrp.errors import EmptyCorpus, InsufficientItems


def test_load_in_filename_order(tmp_path, rng):
    imgs = {name: np.rint(rng.random((28, 28)) * 255) / 255 for name in ("c", "a", "b")}
    for name, img in imgs.items():
        io.write_pgm(tmp_path / f"{name}.pgm", img)
    corpus = load_corpus(tmp_path)
    assert corpus.ids == ("a", "b", "c")
    np.testing.assert_array_equal(corpus.items[0], imgs["a"])
    assert corpus.side == 28 and corpus.skipped == ()


def test_empty_directory(tmp_path):
    with pytest.raises(EmptyCorpus):
        load_corpus(tmp_path)


def test_mixed_sides_skipped(tmp_path):
    io.write_pgm(tmp_path / "a.pgm", np.zeros((28, 28)))
    io.write_pgm(tmp_path / "b.pgm", np.zeros((32, 32)))
    (tmp_path / "c.pgm").write_bytes(b"not an image")
    corpus = load_corpus(tmp_path, expected_side=28)
    assert len(corpus) == 1
    assert [name for name, _ in corpus.skipped] == ["b.pgm", "c.pgm"]


def test_write_corpus_roundtrip(tmp_path):
    corpus = gen_synthetic("blobs", 12, 4, seed=1)
    manifest = write_corpus(corpus, tmp_path)
    rows = manifest.read_text().splitlines()
    assert rows[0] == "identifier,checksum" and len(rows) == 5
    back = load_corpus(tmp_path)
    assert back.ids == corpus.ids
    for a, b in zip(back.items, corpus.items):
        np.testing.assert_allclose(a, b, atol=0.5 / 255 + 1e-12)


@pytest.mark.parametrize("kind", list(SyntheticKind))
def test_generators_deterministic_and_bounded(kind):
    a = gen_synthetic(kind, 28, 95, seed=7)
    b = gen_synthetic(kind, 28, 95, seed=7)
    assert len(a) == 95
    for x, y in zip(a.items, b.items):
        assert x.tobytes() == y.tobytes()
        assert x.min() >= 0 and x.max() <= 1 and x.max() > 0
    assert a.items[0].tobytes() != gen_synthetic(kind, 28, 95, seed=8).items[0].tobytes()


def test_smooth_random_full_rank():
    corpus = gen_synthetic(SyntheticKind.SMOOTH_RANDOM, 8, 70, seed=1)
    X = corpus.matrix()
    assert X.shape == (64, 70)
    s = np.linalg.svd(X, compute_uv=False)
    assert int(np.sum(s > 1e-10 * s[0])) == 64


def test_single_item():
    corpus = gen_synthetic("digitslike", 16, 1, seed=0)
    assert len(corpus) == 1 and np.any(corpus.items[0])


def test_corpus_invariants():
    with pytest.raises(ValueError):
        Corpus((np.zeros((2, 2)),) * 2, ("a", "a"), 2, "x")
    with pytest.raises(ValueError):
        Corpus((np.zeros((2, 3)),), ("a",), 2, "x")


def test_split_examples():
    corpus = gen_synthetic("blobs", 6, 10, seed=0)
    train, test = split(corpus, SplitSpec(7, 3))
    assert train.ids == corpus.ids[:7] and test.ids == corpus.ids[7:]
    a = split(corpus, SplitSpec(7, 3, shuffle_seed=4))
    b = split(corpus, SplitSpec(7, 3, shuffle_seed=4))
    assert a[0].ids == b[0].ids and a[1].ids == b[1].ids
    assert not set(a[0].ids) & set(a[1].ids)
    with pytest.raises(InsufficientItems):
        split(corpus, SplitSpec(8, 3))


def test_near_dependent_correlation():
    Y = near_dependent_columns(400, 50, 0.999, seed=2)
    C = Y.T @ Y
    np.testing.assert_allclose(np.diag(C), 1.0)
    assert C[np.triu_indices(50, 1)].min() >= 0.998
