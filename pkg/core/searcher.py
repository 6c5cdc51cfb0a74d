#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
记忆检索

三种模式：
- semantic: 查询向量化后在向量索引中按 (wing, room, hall) 过滤检索
- keyword:  在同一过滤子集上做 BM25
- hybrid:   两路结果按倒数排名融合（RRF, c=60），壁橱摘要命中查询词的抽屉得分 ×1.2

返回的内容永远是抽屉原文，壁橱摘要只参与排序。
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from core.bm25 import rank_scores, tokenize
from core.errors import AddressInvalidError, InvalidInputError
from core.palace import Drawer, PalaceAddress, is_identifier
from core.palace_store import Palace, get_palace
from core.vector_index import WhereFilter

logger = logging.getLogger(__name__)

RRF_K = 60
CLOSET_BOOST = 1.2
DEFAULT_N_RESULTS = 5
DEEP_SEARCH_RESULTS = 10


class SearchMode(str, Enum):
    SEMANTIC = "semantic"
    KEYWORD = "keyword"
    HYBRID = "hybrid"


class Provenance(str, Enum):
    SEMANTIC = "semantic"
    KEYWORD = "keyword"
    BOTH = "both"


@dataclass
class SearchRequest:
    query: str
    wing: Optional[str] = None
    room: Optional[str] = None
    hall: Optional[str] = None
    n_results: int = DEFAULT_N_RESULTS
    max_distance: float = 0.0
    mode: SearchMode = SearchMode.HYBRID

    def __post_init__(self):
        if not isinstance(self.query, str) or not self.query.strip():
            raise InvalidInputError("查询不能为空")
        if isinstance(self.n_results, bool) or not isinstance(self.n_results, int) or self.n_results < 1:
            raise InvalidInputError(f"n_results 必须 >= 1，当前为 {self.n_results!r}")
        if self.max_distance is None or self.max_distance < 0:
            raise InvalidInputError(f"max_distance 不能为负，当前为 {self.max_distance!r}")
        try:
            self.mode = SearchMode(self.mode)
        except ValueError:
            raise InvalidInputError(f"不支持的检索模式: {self.mode!r}")
        for name in ("wing", "room", "hall"):
            value = getattr(self, name)
            if value is not None and not is_identifier(value):
                raise AddressInvalidError(name, value)

    @property
    def where(self) -> WhereFilter:
        return WhereFilter(wing=self.wing, room=self.room, hall=self.hall)


@dataclass
class SearchResult:
    drawer_id: str
    content: str
    address: PalaceAddress
    distance: Optional[float]
    keyword_score: float
    fused_score: float
    provenance: Provenance
    metadata: Dict[str, Any] = field(default_factory=dict)
    source_file: Optional[str] = None
    timestamp: Optional[str] = None

    @property
    def session_id(self) -> Optional[str]:
        return self.metadata.get("session_id")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "drawer_id": self.drawer_id,
            "content": self.content,
            **self.address.to_dict(),
            "distance": self.distance,
            "keyword_score": self.keyword_score,
            "fused_score": self.fused_score,
            "provenance": self.provenance.value,
            "source_file": self.source_file,
            "timestamp": self.timestamp,
            "metadata": dict(self.metadata),
        }


def fuse_scores(semantic: Sequence[str],
                keyword: Sequence[str],
                boost: Iterable[str] = (),
                k: int = RRF_K,
                boost_factor: float = CLOSET_BOOST) -> List[Tuple[str, float]]:
    """倒数排名融合：fused(d) = Σ 1/(k + rank)，排名从 1 开始

    boost 中的抽屉得分乘以 boost_factor；同分按 drawer_id 字典序。
    """
    scores: Dict[str, float] = {}
    for ranked in (semantic, keyword):
        for rank, drawer_id in enumerate(ranked, start=1):
            scores[drawer_id] = scores.get(drawer_id, 0.0) + 1.0 / (k + rank)
    for drawer_id in set(boost):
        if drawer_id in scores:
            scores[drawer_id] *= boost_factor
    return sorted(scores.items(), key=lambda item: (-item[1], item[0]))


def _resolve_palace(palace: Union[Palace, str, Path]) -> Palace:
    return palace if isinstance(palace, Palace) else get_palace(palace)


def search_memories(palace: Union[Palace, str, Path], request: SearchRequest) -> List[SearchResult]:
    """检索入口，最多返回 n_results 条"""
    palace = _resolve_palace(palace)
    mode = request.mode
    where = request.where
    terms = tokenize(request.query)
    pool = max(request.n_results, palace.config.hybrid_pool)

    with palace.index.lock.read_locked():
        if palace.index.count() == 0:
            return []
        query_vector = palace.embed_query(request.query)

        semantic_hits: List[Tuple[str, float]] = []
        if mode in (SearchMode.SEMANTIC, SearchMode.HYBRID):
            semantic_hits = palace.query_vectors(query_vector, pool, where)
            if request.max_distance > 0:
                semantic_hits = [(d, dist) for d, dist in semantic_hits if dist <= request.max_distance]

        keyword_scores: Dict[str, float] = {}
        if mode in (SearchMode.KEYWORD, SearchMode.HYBRID):
            allowed = None
            if not where.is_empty():
                allowed = lambda drawer_id: where.matches(palace.index.get_metadata(drawer_id) or {})  # noqa: E731
            keyword_scores = palace.bm25.search(terms, allowed=allowed)
        keyword_ranked = [drawer_id for drawer_id, _ in rank_scores(keyword_scores)[:pool]]

        semantic_ids = [drawer_id for drawer_id, _ in semantic_hits]
        boost: Set[str] = set() if mode == SearchMode.SEMANTIC else palace.closet_hits(terms)
        fused = fuse_scores(semantic_ids, keyword_ranked, boost)[:request.n_results]

        distances = dict(semantic_hits)
        for drawer_id, _ in fused:
            if drawer_id not in distances:
                distances[drawer_id] = palace.index.distance_to(drawer_id, query_vector)

    drawers = palace.get_drawers([drawer_id for drawer_id, _ in fused])
    semantic_set, keyword_set = set(semantic_ids), set(keyword_ranked)
    results = []
    for drawer_id, score in fused:
        drawer = drawers.get(drawer_id)
        if drawer is None:
            continue
        if drawer_id in semantic_set and drawer_id in keyword_set:
            provenance = Provenance.BOTH
        elif drawer_id in semantic_set:
            provenance = Provenance.SEMANTIC
        else:
            provenance = Provenance.KEYWORD
        results.append(SearchResult(
            drawer_id=drawer_id,
            content=drawer.content,
            address=drawer.address,
            distance=distances.get(drawer_id),
            keyword_score=0.0 if mode == SearchMode.SEMANTIC else keyword_scores.get(drawer_id, 0.0),
            fused_score=score,
            provenance=provenance,
            metadata=dict(drawer.metadata),
            source_file=drawer.source_file,
            timestamp=drawer.timestamp,
        ))
    logger.debug(f"检索 {request.query!r} ({mode.value}): {len(results)} 条结果")
    return results


def search(palace: Union[Palace, str, Path], query: str, **options: Any) -> List[SearchResult]:
    """search_memories 的关键字参数形式"""
    return search_memories(palace, SearchRequest(query=query, **options))


def deep_search(palace: Union[Palace, str, Path], query: str, **filters: Any) -> List[SearchResult]:
    """L3 深度检索：直接走 search_memories，不做任何 token 截断"""
    filters.setdefault("n_results", DEEP_SEARCH_RESULTS)
    return search(palace, query, **filters)


def follow_tunnels(palace: Union[Palace, str, Path], drawer_id: str, depth: int = 1) -> List[Drawer]:
    """沿隧道走一跳（双向），只支持 depth=1"""
    if depth != 1:
        raise InvalidInputError("隧道遍历只支持一跳")
    return _resolve_palace(palace).follow_tunnels(drawer_id)
