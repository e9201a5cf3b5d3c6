import json

import numpy as np
import pytest

from copyrank.embedding import (
    EmbeddingCache,
    EmbeddingVector,
    FileBackedProvider,
    HashProvider,
    center,
    embed_batch,
    fit_centering,
    stack,
)
from copyrank.errors import (
    DimensionMismatchError,
    MissingEmbeddingError,
    ValidationError,
)


def write_table(tmp_path, table, name="vectors.jsonl"):
    path = tmp_path / name
    path.write_text(
        "\n".join(json.dumps({"text": t, "embedding": v}) for t, v in table.items())
    )
    return path


def test_file_provider_preserves_input_order(tmp_path):
    path = write_table(tmp_path, {"a": [1.0, 0.0], "b": [0.0, 1.0]})
    provider = FileBackedProvider(path)
    vectors = embed_batch(provider, ["b", "a"])
    assert np.array_equal(vectors[0].values, [0.0, 1.0])
    assert np.array_equal(vectors[1].values, [1.0, 0.0])


def test_file_provider_missing_text_names_it(tmp_path):
    provider = FileBackedProvider(write_table(tmp_path, {"a": [1.0]}))
    with pytest.raises(MissingEmbeddingError, match="absent"):
        embed_batch(provider, ["absent"])


def test_mixed_dimensions_are_fatal(tmp_path):
    provider = FileBackedProvider(write_table(tmp_path, {"a": [1.0], "b": [1.0, 2.0]}))
    with pytest.raises(DimensionMismatchError):
        embed_batch(provider, ["a", "b"])


def test_cache_hit_on_second_call(tmp_path):
    provider = HashProvider(dim=8, seed=1)
    cache = EmbeddingCache(tmp_path / "cache")
    first = embed_batch(provider, ["same text"], cache=cache)
    assert cache.misses == 1 and cache.hits == 0
    second = embed_batch(provider, ["same text"], cache=cache)
    assert cache.hits == 1
    assert first[0].values.tobytes() == second[0].values.tobytes()


def test_cache_roundtrip_bit_identical(tmp_path):
    provider = HashProvider(dim=16, seed=2)
    cache_dir = tmp_path / "cache"
    original = embed_batch(provider, ["persist me"], cache=EmbeddingCache(cache_dir))
    reloaded = EmbeddingCache(cache_dir).get(provider.provider_id, "persist me")
    assert reloaded is not None
    assert original[0].values.tobytes() == reloaded.tobytes()


def test_cache_env_var_overrides_configured_path(tmp_path, monkeypatch):
    monkeypatch.setenv("COPYRANK_CACHE_DIR", str(tmp_path / "envcache"))
    assert EmbeddingCache().directory == tmp_path / "envcache"
    # env wins even over an explicit argument
    assert EmbeddingCache(tmp_path / "arg").directory == tmp_path / "envcache"
    monkeypatch.delenv("COPYRANK_CACHE_DIR")
    assert EmbeddingCache(tmp_path / "arg").directory == tmp_path / "arg"


def test_cache_keys_include_provider_identity(tmp_path):
    cache = EmbeddingCache(tmp_path / "cache")
    embed_batch(HashProvider(dim=8, seed=1), ["text"], cache=cache)
    assert cache.get(HashProvider(dim=8, seed=2).provider_id, "text") is None


def test_hash_provider_is_deterministic():
    provider = HashProvider(dim=12, seed=3)
    a, b = provider.embed(["copy"]), provider.embed(["copy"])
    assert np.array_equal(a[0], b[0])
    assert not np.array_equal(provider.embed(["copy"])[0], provider.embed(["other"])[0])


def test_fit_centering_single_vector_is_itself():
    v = np.array([1.0, -2.0, 3.0])
    stats = fit_centering([EmbeddingVector(v, "p")])
    assert np.array_equal(stats.mean, v)


def test_fit_centering_symmetric_pair_is_zero():
    v = np.array([1.0, -2.0, 3.0])
    stats = fit_centering([EmbeddingVector(v, "p"), EmbeddingVector(-v, "p")])
    assert np.allclose(stats.mean, 0.0)


def test_fit_centering_matches_bruteforce_sum():
    rng = np.random.default_rng(0)
    vectors = [EmbeddingVector(rng.standard_normal(6), "p") for _ in range(5)]
    stats = fit_centering(vectors)
    brute = sum(v.values for v in vectors) / 5
    assert np.allclose(stats.mean, brute, atol=1e-12)


def test_fit_centering_empty_corpus_rejected():
    with pytest.raises(ValidationError):
        fit_centering([])


def test_center_cases():
    v = EmbeddingVector(np.array([1.0, 2.0, 3.0]), "p")
    self_stats = fit_centering([v])
    assert np.allclose(center(v, self_stats).values, 0.0)
    zero_stats = fit_centering([EmbeddingVector(np.zeros(3), "p")])
    assert np.array_equal(center(v, zero_stats).values, v.values)
    ones = fit_centering([EmbeddingVector(np.ones(3), "p")])
    assert np.array_equal(center(v, ones).values, [0.0, 1.0, 2.0])


def test_center_dimension_mismatch():
    stats = fit_centering([EmbeddingVector(np.zeros(3), "p")])
    with pytest.raises(DimensionMismatchError):
        center(EmbeddingVector(np.zeros(4), "p"), stats)


def test_centering_is_affine():
    rng = np.random.default_rng(1)
    stats = fit_centering([EmbeddingVector(rng.standard_normal(5), "p")])
    a, b = rng.standard_normal(5), rng.standard_normal(5)
    lhs = center(EmbeddingVector(a + b, "p"), stats).values
    rhs = center(EmbeddingVector(a, "p"), stats).values + b
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_corpus_centered_by_own_stats_averages_to_zero():
    rng = np.random.default_rng(2)
    vectors = [EmbeddingVector(rng.standard_normal(7), "p") for _ in range(9)]
    stats = fit_centering(vectors)
    centered = stack([center(v, stats) for v in vectors])
    assert np.allclose(centered.mean(axis=0), 0.0, atol=1e-10)


def test_embedding_vector_rejects_non_finite():
    with pytest.raises(ValidationError):
        EmbeddingVector(np.array([1.0, np.nan]), "p")


def test_embed_batch_rejects_empty_inputs():
    provider = HashProvider(dim=4)
    with pytest.raises(ValidationError):
        embed_batch(provider, [])
    with pytest.raises(ValidationError):
        embed_batch(provider, ["ok", "   "])


def test_embed_batch_chunks_requests_in_order(tmp_path):
    class CountingProvider:
        provider_id = "counting"

        def __init__(self):
            self.calls = []

        def embed(self, texts):
            self.calls.append(len(texts))
            return [np.array([float(len(t))]) for t in texts]

    provider = CountingProvider()
    texts = [f"text {i}" for i in range(7)]
    vectors = embed_batch(provider, texts, batch_size=3)
    assert provider.calls == [3, 3, 1]
    assert [v.values[0] for v in vectors] == [float(len(t)) for t in texts]


def test_cache_concurrent_readers_and_writers(tmp_path):
    from concurrent.futures import ThreadPoolExecutor

    provider = HashProvider(dim=8, seed=9)
    cache = EmbeddingCache(tmp_path / "cache")
    texts = [f"copy {i % 5}" for i in range(40)]

    def embed_one(text):
        return embed_batch(provider, [text], cache=cache)[0].values.tobytes()

    with ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(embed_one, texts))
    by_text = {}
    for text, raw in zip(texts, results):
        by_text.setdefault(text, set()).add(raw)
    assert all(len(variants) == 1 for variants in by_text.values())
    assert cache.hits + cache.misses == len(texts)
