"""Retrieval oracles: exact cosine ranking against a brute-force reference,
tie and filter rules, top-K selection statistics, the index file format, and
the noise-driven diversity controller."""

import logging
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soundloom.corpus import (SyntheticCorpusSpec, generate_synthetic_corpus,
                              read_manifest)
from soundloom.models import SpecVae
from soundloom.nn import new_generator
from soundloom.retrieval import (DiversityController, IndexError_,
                                 LatentIndex, build_index, continuity_bound,
                                 load_index, next_k, perlin1d, rank,
                                 save_index, select)

LATENT_DIM = 128


def random_index(n=32, seed=0, dim=LATENT_DIM, tags=None):
    rng = new_generator(seed)
    codes = rng.standard_normal((n, dim)).astype(np.float32)
    ids = [f"clip{i:03d}" for i in range(n)]
    return LatentIndex(ids, codes, tags)


# ------------------------------------------------------------ exact ranking

def test_orthogonal_codes_give_exact_cosines_and_id_tiebreak():
    # One-hot codes: the query's own axis scores exactly 1.0, every other
    # clip exactly 0.0, so the 0.0 block is a pure tie broken by clip_id.
    n = 8
    codes = np.eye(n, LATENT_DIM, dtype=np.float32)
    ids = [f"c{i}" for i in range(n)]
    shuffled = list(zip(ids, codes))
    new_generator(3).shuffle(shuffled)
    index = LatentIndex([cid for cid, _ in shuffled],
                        np.stack([c for _, c in shuffled]))
    ranked = rank(codes[3], index)
    assert ranked[0] == ("c3", 1.0)
    rest = ranked[1:]
    assert all(score == 0.0 for _, score in rest)
    assert [cid for cid, _ in rest] == sorted(i for i in ids if i != "c3")


def test_self_query_ranks_first_with_unit_cosine():
    index = random_index(seed=5)
    ranked = rank(index.codes[17], index)
    assert ranked[0][0] == "clip017"
    assert ranked[0][1] == pytest.approx(1.0, abs=1e-6)


def test_rank_matches_bruteforce_oracle():
    # Independent reference: float64 cosines, sorted by (-cos, clip_id).
    index = random_index(n=32, seed=9)
    unit64 = index.codes.astype(np.float64)
    unit64 /= np.linalg.norm(unit64, axis=1, keepdims=True)
    rng = new_generator(123)
    for _ in range(1000):
        q = rng.standard_normal(LATENT_DIM)
        cos = unit64 @ (q / np.linalg.norm(q))
        expected = [cid for _, cid in
                    sorted(zip(-cos, index.clip_ids))]
        got = [cid for cid, _ in rank(q.astype(np.float32), index)]
        assert got == expected


def test_rank_invariant_under_catalogue_permutation():
    index = random_index(n=24, seed=2)
    perm = new_generator(7).permutation(24)
    permuted = LatentIndex([index.clip_ids[i] for i in perm],
                           index.codes[perm])
    q = new_generator(8).standard_normal(LATENT_DIM).astype(np.float32)
    assert rank(q, index) == rank(q, permuted)


def test_rank_validates_query():
    index = random_index(n=4)
    with pytest.raises(ValueError, match="shape"):
        rank(np.zeros(64, np.float32), index)
    bad = np.zeros(LATENT_DIM, np.float32)
    with pytest.raises(ValueError, match="nonzero"):
        rank(bad, index)
    bad[0] = np.nan
    with pytest.raises(ValueError, match="finite"):
        rank(bad, index)


def test_index_rejects_zero_codes_and_duplicate_ids():
    codes = np.ones((3, LATENT_DIM), np.float32)
    codes[1] = 0.0
    with pytest.raises(ValueError, match="zero latent"):
        LatentIndex(["a", "b", "c"], codes)
    with pytest.raises(ValueError, match="duplicate"):
        LatentIndex(["a", "a", "c"], np.ones((3, LATENT_DIM), np.float32))


# ------------------------------------------------------------ tag filtering

def tagged_index():
    tags = {f"clip{i:03d}": (("drone",), ("percussion",),
                             ("keyboard",), ("drone", "keyboard"))[i % 4]
            for i in range(16)}
    return random_index(n=16, seed=4, tags=tags), tags


def test_instrument_filter_drops_every_tagged_clip():
    index, tags = tagged_index()
    q = index.codes[0]
    ranked = rank(q, index, exclude_tags={"drone"})
    survivors = {cid for cid, _ in ranked}
    assert survivors == {cid for cid, t in tags.items() if "drone" not in t}
    # Multi-tag clips fall to either of their tags.
    ranked = rank(q, index, exclude_tags={"keyboard"})
    assert all("keyboard" not in tags[cid] for cid, _ in ranked)


def test_filter_excluding_everything_raises():
    index, _ = tagged_index()
    with pytest.raises(IndexError_, match="excludes every clip"):
        rank(index.codes[0], index,
             exclude_tags={"drone", "percussion", "keyboard"})


# ------------------------------------------------------------ selection

def test_select_argmax_takes_top_hit():
    ranked = [("b", 0.9), ("a", 0.8), ("c", 0.1)]
    assert select(ranked, 3, "argmax") == "b"
    assert select(ranked, 1, "topK", new_generator(0)) == "b"


def test_select_topk_is_uniform_over_top_k():
    ranked = [(f"c{i}", 1.0 - i / 10) for i in range(10)]
    rng = new_generator(42)
    draws = [select(ranked, 5, "topK", rng) for _ in range(5000)]
    counts = {cid: draws.count(cid) for cid, _ in ranked}
    top5 = {f"c{i}" for i in range(5)}
    for cid, n in counts.items():
        if cid in top5:
            assert abs(n / 5000 - 0.2) < 0.03
        else:
            assert n == 0


def test_select_clamps_oversized_k_and_warns(caplog):
    ranked = [(f"c{i}", 0.5) for i in range(4)]
    with caplog.at_level(logging.WARNING):
        got = select(ranked, 50, "topK", new_generator(1))
    assert got in {cid for cid, _ in ranked}
    assert any("clamping" in r.message for r in caplog.records)


def test_select_rejects_bad_input():
    ranked = [("a", 1.0), ("b", 0.5)]
    with pytest.raises(ValueError, match="empty"):
        select([], 1, "argmax")
    with pytest.raises(ValueError, match="strategy"):
        select(ranked, 1, "best")
    with pytest.raises(ValueError, match="k must"):
        select(ranked, 0, "topK", new_generator(0))
    with pytest.raises(ValueError, match="RNG"):
        select(ranked, 2, "topK")


# ------------------------------------------------------------ index building

@pytest.fixture(scope="module")
def corpus32(tmp_path_factory):
    spec = SyntheticCorpusSpec(
        compositions_per_family={"drone": 2, "percussion": 2, "keyboard": 4},
        clips_per_composition=4,
        lines_per_composition=5,
        seed=11)
    paths = generate_synthetic_corpus(spec, tmp_path_factory.mktemp("c32"))
    return paths.root, read_manifest(paths.manifest)


@pytest.fixture(scope="module")
def vae():
    # Randomized posterior-mean head: the untrained default is all-zero
    # means, which the zero-code guard would (rightly) reject at tau=0.
    model = SpecVae(seed=0)
    rng = new_generator(77)
    for name in ("mu.w", "mu.b"):
        p = model.params[name]
        p.value = rng.normal(0.0, 0.05, p.value.shape).astype(model.dtype)
    return model


def test_build_index_covers_manifest(corpus32, vae):
    root, records = corpus32
    index = build_index(records, root, vae, tau=1.0, seed=0)
    assert len(index) == 32
    assert set(index.clip_ids) == {r.clip_id for r in records}
    by_id = {r.clip_id: tuple(r.instrument_tags) for r in records}
    assert index.tags_by_clip == by_id


def test_build_index_same_seed_is_identical(corpus32, vae):
    root, records = corpus32
    a = build_index(records, root, vae, tau=1.0, seed=3)
    b = build_index(records, root, vae, tau=1.0, seed=3)
    c = build_index(records, root, vae, tau=1.0, seed=4)
    assert a.clip_ids == b.clip_ids
    assert np.array_equal(a.codes, b.codes)
    assert not np.array_equal(a.codes, c.codes)


def test_build_index_tau_zero_stores_posterior_means(corpus32, vae):
    from soundloom.corpus import load_spectrogram
    root, records = corpus32
    index = build_index(records, root, vae, tau=0.0, seed=0)
    for rec in records[:5]:
        spec = load_spectrogram(f"{root}/{rec.spectrogram_path}")
        mean = vae.encode_spectrogram(spec).mean
        pos = index.clip_ids.index(rec.clip_id)
        assert np.array_equal(index.codes[pos], mean)


def test_build_index_rejects_empty_manifest(vae, tmp_path):
    with pytest.raises(ValueError, match="empty manifest"):
        build_index([], tmp_path, vae)


# ------------------------------------------------------------ file format

def test_index_file_round_trip(tmp_path):
    tags = {f"clip{i:03d}": ("drone",) for i in range(6)}
    index = random_index(n=6, seed=10, tags=tags)
    path = tmp_path / "catalogue.idx"
    save_index(index, path)
    expected = 4 + sum(2 + len(cid.encode()) + LATENT_DIM * 4
                       for cid in index.clip_ids)
    assert path.stat().st_size == expected

    class Rec:
        def __init__(self, cid):
            self.clip_id = cid
            self.instrument_tags = ["drone"]

    loaded = load_index(path, records=[Rec(cid) for cid in index.clip_ids])
    assert loaded.clip_ids == index.clip_ids
    assert np.array_equal(loaded.codes, index.codes)
    assert loaded.tags_by_clip == index.tags_by_clip
    q = new_generator(1).standard_normal(LATENT_DIM).astype(np.float32)
    assert rank(q, loaded) == rank(q, index)


def test_index_file_rejects_corruption(tmp_path):
    index = random_index(n=3, seed=1)
    path = tmp_path / "c.idx"
    save_index(index, path)
    raw = path.read_bytes()
    (tmp_path / "trunc.idx").write_bytes(raw[:-7])
    with pytest.raises(IndexError_, match="truncated"):
        load_index(tmp_path / "trunc.idx")
    (tmp_path / "trail.idx").write_bytes(raw + b"xx")
    with pytest.raises(IndexError_, match="trailing"):
        load_index(tmp_path / "trail.idx")
    (tmp_path / "short.idx").write_bytes(struct.pack("<H", 1))
    with pytest.raises(IndexError_, match="header"):
        load_index(tmp_path / "short.idx")


# ------------------------------------------------------------ diversity

def test_perlin_deterministic_and_seed_sensitive():
    xs = np.linspace(-40.0, 40.0, 500)
    a = perlin1d(xs, seed=0)
    b = perlin1d(xs, seed=0)
    c = perlin1d(xs, seed=1)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_perlin_scalar_path_matches_vectorized():
    xs = np.linspace(-25.0, 25.0, 2000)
    vec = perlin1d(xs, seed=6, octaves=2)
    scalar = np.array([perlin1d(float(x), seed=6, octaves=2) for x in xs])
    assert np.array_equal(vec, scalar)


def test_perlin_bounded():
    xs = np.linspace(-200.0, 200.0, 20000)
    for octaves in (1, 2, 3):
        vals = perlin1d(xs, seed=3, octaves=octaves)
        assert np.all(np.abs(vals) <= 1.0)


def test_next_k_bounds_over_long_run():
    ctl = DiversityController()
    ks = [next_k(ctl, t) for t in range(100_000)]
    assert min(ks) >= ctl.k_min
    assert max(ks) <= ctl.k_max
    assert len(set(ks)) >= 10  # the walk actually explores the range


def test_next_k_continuity():
    ctl = DiversityController()
    bound = continuity_bound(ctl)
    assert bound == math.ceil(0.2 * (ctl.k_max - ctl.k_min))
    ks = [next_k(ctl, t) for t in range(100_000)]
    deltas = np.abs(np.diff(np.array(ks)))
    assert deltas.max() <= bound


def test_manual_mode_is_constant_and_clamped():
    ctl = DiversityController(mode="manual", manual_k=7)
    assert all(next_k(ctl, t) == 7 for t in range(50))
    high = DiversityController(mode="manual", manual_k=99, k_max=20)
    assert next_k(high, 0) == 20
    low = DiversityController(mode="manual", manual_k=0, k_min=2)
    assert next_k(low, 0) == 2


def test_controller_validation():
    with pytest.raises(ValueError):
        DiversityController(mode="random")
    with pytest.raises(ValueError):
        DiversityController(k_min=0)
    with pytest.raises(ValueError):
        DiversityController(k_min=9, k_max=3)
    with pytest.raises(ValueError):
        DiversityController(frequency=0.0)


@settings(max_examples=100, deadline=None)
@given(k_min=st.integers(1, 30), extra=st.integers(0, 30),
       t=st.integers(0, 10_000), seed=st.integers(0, 2**31 - 1))
def test_next_k_always_inside_configured_range(k_min, extra, t, seed):
    ctl = DiversityController(k_min=k_min, k_max=k_min + extra, seed=seed)
    k = next_k(ctl, t)
    assert isinstance(k, int)
    assert ctl.k_min <= k <= ctl.k_max
