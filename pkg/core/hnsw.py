#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
HNSW 近似最近邻图

从零实现的分层可导航小世界图。节点内部用连续整数编号，向量按行存放在
一个按需扩容的 numpy 矩阵里；所有向量在写入前已单位化，图内部统一用
1 - 点积 作为排序距离，cosine 与 l2 的排序因此完全一致。

删除只打墓碑，由上层 VectorIndex 负责按阈值重建。
"""

import heapq
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HnswParams:
    """HNSW 构建与查询参数"""
    M: int = 16
    ef_construction: int = 200
    ef_search: int = 100
    seed: int = 42

    def __post_init__(self):
        if self.M < 2:
            raise InvalidInputError(f"HNSW 参数 M 必须 >= 2，当前为 {self.M}")
        if self.ef_construction < 1 or self.ef_search < 1:
            raise InvalidInputError("ef_construction 与 ef_search 必须为正整数")

    def to_dict(self) -> Dict[str, int]:
        return {
            "M": self.M,
            "ef_construction": self.ef_construction,
            "ef_search": self.ef_search,
            "seed": self.seed,
        }


class HnswGraph:
    """HNSW 图结构

    只负责图本身：节点插入、分层搜索、墓碑标记。元数据过滤与
    持久化由 VectorIndex 完成。
    """

    def __init__(self, dim: int, params: HnswParams = None, initial_capacity: int = 1024):
        self.dim = dim
        self.params = params or HnswParams()
        self._m0 = 2 * self.params.M
        self._level_mult = 1.0 / math.log(self.params.M)
        self._rng = np.random.default_rng(self.params.seed)

        self._vectors = np.zeros((max(initial_capacity, 1), dim), dtype=np.float64)
        self._levels: List[int] = []
        # _links[node][level] -> 邻居节点列表
        self._links: List[List[List[int]]] = []
        self._deleted: List[bool] = []
        self._entry_point: Optional[int] = None
        self._max_level = -1

    # ------------------------------------------------------------------
    # 基本属性
    # ------------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._levels)

    @property
    def tombstone_count(self) -> int:
        return sum(self._deleted)

    @property
    def live_count(self) -> int:
        return len(self._levels) - self.tombstone_count

    def vector(self, node: int) -> np.ndarray:
        return self._vectors[node]

    def is_deleted(self, node: int) -> bool:
        return self._deleted[node]

    def mark_deleted(self, node: int) -> None:
        self._deleted[node] = True

    def live_nodes(self) -> List[int]:
        return [n for n, dead in enumerate(self._deleted) if not dead]

    def distances(self, query: np.ndarray, nodes: Sequence[int]) -> np.ndarray:
        """批量计算 query 到若干节点的排序距离（1 - 点积）"""
        if len(nodes) == 0:
            return np.empty(0, dtype=np.float64)
        return 1.0 - self._vectors[list(nodes)] @ query

    # ------------------------------------------------------------------
    # 插入
    # ------------------------------------------------------------------

    def _random_level(self) -> int:
        # 1 - U 落在 (0, 1]，避免 log(0)
        u = 1.0 - self._rng.random()
        return int(-math.log(u) * self._level_mult)

    def _ensure_capacity(self, needed: int) -> None:
        if needed <= self._vectors.shape[0]:
            return
        new_cap = max(needed, self._vectors.shape[0] * 2)
        grown = np.zeros((new_cap, self.dim), dtype=np.float64)
        grown[: len(self._levels)] = self._vectors[: len(self._levels)]
        self._vectors = grown

    def add(self, vector: np.ndarray) -> int:
        """插入一个已单位化的向量，返回内部节点编号"""
        node = len(self._levels)
        self._ensure_capacity(node + 1)
        self._vectors[node] = vector
        level = self._random_level()
        self._levels.append(level)
        self._links.append([[] for _ in range(level + 1)])
        self._deleted.append(False)

        if self._entry_point is None:
            self._entry_point = node
            self._max_level = level
            return node

        query = self._vectors[node]
        entry = self._entry_point
        nearest = [(float(self.distances(query, [entry])[0]), entry)]
        for layer in range(self._max_level, level, -1):
            nearest = self._search_layer(query, nearest, 1, layer)

        for layer in range(min(level, self._max_level), -1, -1):
            candidates = self._search_layer(query, nearest, self.params.ef_construction, layer)
            neighbors = self._select_neighbors(candidates, self.params.M)
            self._links[node][layer] = neighbors
            max_links = self._m0 if layer == 0 else self.params.M
            for neighbor in neighbors:
                self._connect(neighbor, node, layer, max_links)
            nearest = candidates

        if level > self._max_level:
            self._entry_point = node
            self._max_level = level
        return node

    def _connect(self, node: int, new_neighbor: int, layer: int, max_links: int) -> None:
        links = self._links[node][layer]
        links.append(new_neighbor)
        if len(links) <= max_links:
            return
        dists = self.distances(self._vectors[node], links)
        ranked = sorted(zip(dists.tolist(), links))
        self._links[node][layer] = self._select_neighbors(ranked, max_links)

    def _select_neighbors(self, candidates: List[Tuple[float, int]], m: int) -> List[int]:
        """启发式邻居选择

        candidates 按距离升序。候选若离某个已选邻居比离查询点更近则跳过，
        名额不满时再用被跳过的候选按距离补齐。
        """
        if len(candidates) <= m:
            return [node for _, node in candidates]
        selected: List[int] = []
        skipped: List[int] = []
        for dist, node in candidates:
            if len(selected) >= m:
                break
            if selected:
                to_selected = 1.0 - self._vectors[selected] @ self._vectors[node]
                if np.any(to_selected < dist):
                    skipped.append(node)
                    continue
            selected.append(node)
        for node in skipped:
            if len(selected) >= m:
                break
            selected.append(node)
        return selected

    # ------------------------------------------------------------------
    # 搜索
    # ------------------------------------------------------------------

    def _search_layer(self,
                      query: np.ndarray,
                      entry_points: List[Tuple[float, int]],
                      ef: int,
                      layer: int) -> List[Tuple[float, int]]:
        visited = {node for _, node in entry_points}
        candidates = list(entry_points)
        heapq.heapify(candidates)
        results = [(-dist, node) for dist, node in entry_points]
        heapq.heapify(results)
        while len(results) > ef:
            heapq.heappop(results)

        while candidates:
            dist, node = heapq.heappop(candidates)
            if len(results) >= ef and dist > -results[0][0]:
                break
            neighbors = [n for n in self._links[node][layer] if n not in visited]
            if not neighbors:
                continue
            visited.update(neighbors)
            for n_dist, neighbor in zip(self.distances(query, neighbors).tolist(), neighbors):
                if len(results) < ef or n_dist < -results[0][0]:
                    heapq.heappush(candidates, (n_dist, neighbor))
                    heapq.heappush(results, (-n_dist, neighbor))
                    if len(results) > ef:
                        heapq.heappop(results)

        return sorted((-neg_dist, node) for neg_dist, node in results)

    def search(self, query: np.ndarray, ef: int) -> List[Tuple[float, int]]:
        """返回底层搜索得到的至多 ef 个 (距离, 节点)，含墓碑节点"""
        if self._entry_point is None:
            return []
        entry = self._entry_point
        nearest = [(float(self.distances(query, [entry])[0]), entry)]
        for layer in range(self._max_level, 0, -1):
            nearest = self._search_layer(query, nearest, 1, layer)
        return self._search_layer(query, nearest, ef, 0)

    # ------------------------------------------------------------------
    # 序列化
    # ------------------------------------------------------------------

    def get_state(self) -> Dict[str, Any]:
        return {
            "dim": self.dim,
            "params": self.params.to_dict(),
            "rng_state": self._rng.bit_generator.state,
            "vectors": self._vectors[: len(self._levels)].copy(),
            "levels": list(self._levels),
            "links": [[list(layer) for layer in node_links] for node_links in self._links],
            "deleted": list(self._deleted),
            "entry_point": self._entry_point,
            "max_level": self._max_level,
        }

    @classmethod
    def from_state(cls, state: Dict[str, Any]) -> "HnswGraph":
        vectors = state["vectors"]
        graph = cls(state["dim"], HnswParams(**state["params"]), initial_capacity=max(len(vectors), 1))
        graph._rng.bit_generator.state = state["rng_state"]
        graph._vectors[: len(vectors)] = vectors
        graph._levels = list(state["levels"])
        graph._links = [[list(layer) for layer in node_links] for node_links in state["links"]]
        graph._deleted = list(state["deleted"])
        graph._entry_point = state["entry_point"]
        graph._max_level = state["max_level"]
        return graph
