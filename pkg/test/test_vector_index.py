#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
向量索引测试

1. 内置哈希向量化：确定性、单位长度
2. 精确查询与 HNSW 查询的一致性（召回率）
3. where 过滤的正确性
4. cosine / l2 排序等价
5. 删除、快照与日志重放
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# 添加项目根目录到Python路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.errors import InvalidInputError
from core.hnsw import HnswParams
from core.vector_index import IndexedDrawer, VectorIndex, WhereFilter
from llm.embedder import builtin_hash_embed, cosine_distance, embed_texts, get_embedder, l2_distance

WINGS = ("alpha", "beta", "gamma")
ROOMS = ("r0", "r1", "r2", "r3")


def _unit(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    matrix = rng.normal(size=(n, dim))
    return matrix / np.linalg.norm(matrix, axis=1, keepdims=True)


def _fill(index: VectorIndex, vectors: np.ndarray) -> None:
    for i, vector in enumerate(vectors):
        index.insert(IndexedDrawer(
            drawer_id=f"d{i:05d}",
            vector=vector,
            metadata={"wing": WINGS[i % len(WINGS)], "room": ROOMS[i % len(ROOMS)]},
        ))


def _mean_recall(index: VectorIndex, queries: np.ndarray, k: int, where: WhereFilter = None) -> float:
    overlaps = []
    for q in queries:
        exact = {d for d, _ in index.query_exact(q, k, where)}
        approx = {d for d, _ in index.query_hnsw(q, k, where)}
        overlaps.append(len(exact & approx) / max(1, len(exact)))
    return float(np.mean(overlaps))


def test_builtin_embedding_is_deterministic_unit_vector():
    a = builtin_hash_embed("the quick brown fox", 384)
    b = builtin_hash_embed("the quick brown fox", 384)
    assert a.shape == (384,)
    assert np.array_equal(a, b)
    assert abs(np.linalg.norm(a) - 1.0) < 1e-6
    assert not np.array_equal(a, builtin_hash_embed("a different sentence", 384))


def test_similar_texts_are_closer():
    provider = get_embedder("builtin", 384)
    base, near, far = embed_texts(provider, [
        "deploy the billing service to production",
        "deploying the billing service in production",
        "grandmother's apple pie recipe",
    ])
    assert cosine_distance(base, near) < cosine_distance(base, far)


def test_embed_texts_rejects_empty_text():
    with pytest.raises(InvalidInputError):
        embed_texts(get_embedder("builtin", 16), ["ok", "  "])


def test_distance_functions():
    a = np.array([1.0, 0.0])
    b = np.array([0.0, 1.0])
    assert cosine_distance(a, a) == pytest.approx(0.0)
    assert cosine_distance(a, b) == pytest.approx(1.0)
    assert cosine_distance(a, -a) == pytest.approx(2.0)
    assert l2_distance(a, b) == pytest.approx(np.sqrt(2.0))
    with pytest.raises(InvalidInputError):
        cosine_distance(a, np.zeros(2))


def test_exact_query_matches_brute_force():
    rng = np.random.default_rng(0)
    vectors = _unit(rng, 300, 24)
    index = VectorIndex(dim=24)
    _fill(index, vectors)
    query = _unit(rng, 1, 24)[0]
    hits = index.query_exact(query, 5)
    expected = np.argsort(1.0 - vectors @ query, kind="stable")[:5]
    assert [d for d, _ in hits] == [f"d{i:05d}" for i in expected]
    distances = [dist for _, dist in hits]
    assert distances == sorted(distances)
    assert distances[0] == pytest.approx(cosine_distance(query, vectors[expected[0]]))


def test_hnsw_recall_small_workload():
    rng = np.random.default_rng(42)
    index = VectorIndex(dim=32)
    _fill(index, _unit(rng, 1500, 32))
    assert _mean_recall(index, _unit(rng, 40, 32), k=10) >= 0.95


@pytest.mark.slow
def test_hnsw_recall_acceptance_workload():
    """10k 个随机单位向量（384 维），100 个查询，recall@10 >= 0.95"""
    rng = np.random.default_rng(42)
    index = VectorIndex(dim=384)
    _fill(index, _unit(rng, 10_000, 384))
    assert _mean_recall(index, _unit(rng, 100, 384), k=10) >= 0.95


@pytest.mark.parametrize("backend", ["exact", "hnsw"])
def test_filter_soundness(backend):
    """过滤结果只包含匹配的记录，且不超过 k 条"""
    rng = np.random.default_rng(7)
    index = VectorIndex(dim=16)
    _fill(index, _unit(rng, 600, 16))
    queries = _unit(rng, 30, 16)
    filters = [
        WhereFilter(wing="alpha"),
        WhereFilter(room="r2"),
        WhereFilter(wing="beta", room="r1"),
        WhereFilter(wing="gamma", room="r3"),
        WhereFilter(wing="nowhere"),
    ]
    for q in queries:
        for where in filters:
            hits = (index.query_exact if backend == "exact" else index.query_hnsw)(q, 10, where)
            assert len(hits) <= 10
            for drawer_id, _ in hits:
                assert where.matches(index.get_metadata(drawer_id))
    assert index.query_exact(queries[0], 10, WhereFilter(wing="nowhere")) == []


def test_filtered_hnsw_expands_ef_for_rare_labels():
    rng = np.random.default_rng(3)
    vectors = _unit(rng, 800, 16)
    index = VectorIndex(dim=16, params=HnswParams(ef_search=10))
    for i, vector in enumerate(vectors):
        wing = "rare" if i % 4 == 0 else "common"
        index.insert(IndexedDrawer(f"d{i:05d}", vector, {"wing": wing, "room": "r"}))
    hits = index.query_hnsw(_unit(rng, 1, 16)[0], 10, WhereFilter(wing="rare"))
    assert len(hits) == 10
    assert all(index.get_metadata(d)["wing"] == "rare" for d, _ in hits)


def test_cosine_and_l2_rank_identically():
    rng = np.random.default_rng(5)
    vectors = _unit(rng, 1000, 32)
    cosine = VectorIndex(dim=32, metric="cosine")
    l2 = VectorIndex(dim=32, metric="l2")
    _fill(cosine, vectors)
    _fill(l2, vectors)
    for q in _unit(rng, 20, 32):
        cos_hits = cosine.query_exact(q, 10)
        l2_hits = l2.query_exact(q, 10)
        assert [d for d, _ in cos_hits] == [d for d, _ in l2_hits]
        assert [d for d, _ in cosine.query_hnsw(q, 10)] == [d for d, _ in l2.query_hnsw(q, 10)]
        for (_, c), (_, e) in zip(cos_hits, l2_hits):
            assert e == pytest.approx(np.sqrt(2.0 * c), abs=1e-9)


def test_insert_is_idempotent_and_delete_hides_records():
    rng = np.random.default_rng(1)
    vectors = _unit(rng, 50, 8)
    index = VectorIndex(dim=8)
    _fill(index, vectors)
    assert not index.insert(IndexedDrawer("d00000", vectors[1], {"wing": "alpha", "room": "r0"}))
    assert index.count() == 50

    assert index.delete("d00000")
    assert not index.delete("d00000")
    assert index.count() == 49
    assert not index.contains("d00000")
    hits = index.query_hnsw(vectors[0], 5)
    assert "d00000" not in {d for d, _ in hits}
    assert "d00000" not in {d for d, _ in index.query_exact(vectors[0], 5)}


def test_invalid_vectors_are_rejected():
    index = VectorIndex(dim=4)
    with pytest.raises(InvalidInputError):
        index.insert(IndexedDrawer("x", np.zeros(4), {"wing": "w", "room": "r"}))
    with pytest.raises(InvalidInputError):
        index.insert(IndexedDrawer("x", np.ones(3), {"wing": "w", "room": "r"}))
    with pytest.raises(InvalidInputError):
        IndexedDrawer("x", np.ones(4), {"wing": "w"})
    with pytest.raises(InvalidInputError):
        index.query_exact(np.ones(4), 0)


def test_index_survives_reopen(tmp_path):
    """快照 + 插入日志重放后结果不变"""
    rng = np.random.default_rng(9)
    vectors = _unit(rng, 120, 16)
    query = _unit(rng, 1, 16)[0]

    index = VectorIndex(dim=16, index_dir=tmp_path, snapshot_every=50)
    _fill(index, vectors)
    index.delete("d00003")
    before_exact = index.query_exact(query, 10)
    before_hnsw = index.query_hnsw(query, 10)
    index.close()

    reopened = VectorIndex(dim=16, index_dir=tmp_path, snapshot_every=50)
    assert reopened.count() == 119
    assert not reopened.contains("d00003")
    assert reopened.query_exact(query, 10) == before_exact
    assert [d for d, _ in reopened.query_hnsw(query, 10)] == [d for d, _ in before_hnsw]
    reopened.close()


def test_unflushed_log_is_replayed(tmp_path):
    rng = np.random.default_rng(10)
    vectors = _unit(rng, 20, 8)
    index = VectorIndex(dim=8, index_dir=tmp_path, snapshot_every=1000)
    _fill(index, vectors)
    # 不调用 close：只有插入日志落盘
    reopened = VectorIndex(dim=8, index_dir=tmp_path, snapshot_every=1000)
    assert reopened.count() == 20
    assert reopened.get_metadata("d00005") == {"wing": WINGS[5 % 3], "room": ROOMS[5 % 4]}
