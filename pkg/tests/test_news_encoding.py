import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from finreport.errors import DimensionError, ParseError
from finreport.news_encoding import (EDGE_SLOTS, ROLE_SLOTS, EdgeFeatures, NewsFeatureVector,
                                     RoleEmbeddings, build_news_matrix, fallback_hash_encoder,
                                     load_embeddings, pool_roles, save_embeddings)

finite = st.floats(-100, 100, allow_nan=False)


def frame(v, a0=None, a1=None):
    v = np.asarray(v, float)
    return RoleEmbeddings(v, v if a0 is None else a0, v if a1 is None else a1)


def vec(rng, d=4, d_e=2):
    return NewsFeatureVector(RoleEmbeddings(*rng.normal(size=(3, d))), EdgeFeatures(*rng.normal(size=(3, d_e))))


def test_pool_single_frame_identity():
    f = frame([1.0, -2.0, 3.0])
    out = pool_roles([f])
    assert np.array_equal(out.e_v, f.e_v)


def test_pool_mean():
    out = pool_roles([frame([1.0, 0.0]), frame([0.0, 1.0])])
    assert out.e_v.tolist() == [0.5, 0.5]


def test_pool_identical_frames():
    f = frame([0.3, 0.7, -1.1])
    assert np.allclose(pool_roles([f] * 5).e_a1, f.e_a1, atol=1e-15)


def test_pool_errors():
    with pytest.raises(ValueError, match="no SRL frames"):
        pool_roles([])
    with pytest.raises(DimensionError):
        pool_roles([frame([1.0, 2.0]), frame([1.0, 2.0, 3.0])])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(finite, min_size=3, max_size=3), min_size=1, max_size=6), st.randoms())
def test_pool_permutation_invariant(rows, rnd):
    frames = [frame(r) for r in rows]
    shuffled = frames[:]
    rnd.shuffle(shuffled)
    assert np.allclose(pool_roles(frames).e_v, pool_roles(shuffled).e_v, rtol=1e-12, atol=1e-12)


def test_hash_encoder_deterministic():
    a = fallback_hash_encoder("Shares jump after record profit", 16, 4, seed=3)
    b = fallback_hash_encoder("Shares jump after record profit", 16, 4, seed=3)
    assert a.flatten().tobytes() == b.flatten().tobytes()


def test_hash_encoder_empty_is_zero():
    for text in ("", None, "  ...  "):
        assert not np.any(fallback_hash_encoder(text, 8, 3).flatten())


def test_hash_encoder_distinct_headlines():
    a = fallback_hash_encoder("profit rises sharply", 64, 8)
    b = fallback_hash_encoder("regulator opens probe", 64, 8)
    assert not np.array_equal(a.flatten(), b.flatten())


def test_hash_encoder_seed_matters():
    a = fallback_hash_encoder("profit rises sharply", 64, 8, seed=0)
    b = fallback_hash_encoder("profit rises sharply", 64, 8, seed=1)
    assert not np.array_equal(a.flatten(), b.flatten())


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=60), st.integers(1, 40), st.integers(1, 10), st.integers(0, 5))
def test_hash_encoder_slot_norms(text, d, d_e, seed):
    v = fallback_hash_encoder(text, d, d_e, seed)
    for name, slot in zip(ROLE_SLOTS + EDGE_SLOTS, v.slots()):
        n = np.linalg.norm(slot)
        assert n == pytest.approx(1.0, abs=1e-9) or n == 0.0
    if not any(ch.isalnum() for ch in text):
        assert not np.any(v.flatten())


def test_news_matrix_shapes(rng):
    item = vec(rng)
    x = build_news_matrix([item])
    assert x.shape == (3 * 4 + 3 * 2, 1)
    assert np.array_equal(x[:, 0], item.flatten())
    assert build_news_matrix([], d=4, d_e=2).shape == (18, 0)


def test_news_matrix_block_order():
    roles = RoleEmbeddings([1.0, 1.0], [2.0, 2.0], [3.0, 3.0])
    edges = EdgeFeatures([4.0], [5.0], [6.0])
    col = build_news_matrix([NewsFeatureVector(roles, edges)])[:, 0]
    assert col.tolist() == [1, 1, 2, 2, 3, 3, 4, 5, 6]


def test_news_matrix_mismatch_names_index(rng):
    with pytest.raises(DimensionError, match="item 1"):
        build_news_matrix([vec(rng), vec(rng, d=5)])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 6))
def test_news_matrix_column_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    items = [vec(rng, 3, 2) for _ in range(n)]
    x = build_news_matrix(items, d=3, d_e=2)
    back = [NewsFeatureVector.from_flat(x[:, j], 3, 2) for j in range(n)]
    assert back == items
    perm = rng.permutation(n)
    xp = build_news_matrix([items[i] for i in perm], d=3, d_e=2)
    assert np.array_equal(xp, x[:, perm])


def test_embedding_store_round_trip(tmp_path, rng, caplog_warn):
    store = {"n1": vec(rng), "n2": vec(rng)}
    path = tmp_path / "emb.jsonl"
    save_embeddings(store, path)
    back = load_embeddings(path, required_ids=["n1", "n2", "n3"])
    assert len(back) == 2 and back == store
    assert "n3" in caplog_warn.text


def test_embedding_store_corrupt_line(tmp_path, rng):
    path = tmp_path / "emb.jsonl"
    save_embeddings({"a": vec(rng)}, path)
    with open(path, "a") as fh:
        fh.write('{"id": "b", "e_v": [1, 2]\n')
    with pytest.raises(ParseError) as err:
        load_embeddings(path)
    assert err.value.line == 2
