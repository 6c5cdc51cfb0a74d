#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
向量索引

一个扁平索引覆盖整座宫殿：
- query_exact: 暴力扫描，作为 HNSW 的对照基准
- query_hnsw: HNSW 搜索 + 元数据后过滤，过滤后不足 k 条时 ef 逐步翻倍（至多 8 倍）

删除采用墓碑标记，墓碑超过 25% 时重建图。
持久化目录 <palace>/index/：snapshot.bin 全量快照 + insert.log 追加日志，
打开时先加载快照再重放日志。
"""

import logging
import os
import pickle
import struct
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from core.errors import ConfigError, InvalidInputError
from core.hnsw import HnswGraph, HnswParams

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b"LOCIVIDX"
LOG_MAGIC = b"LOCIVLOG"
FORMAT_VERSION = 1
SNAPSHOT_FILENAME = "snapshot.bin"
LOG_FILENAME = "insert.log"

REBUILD_TOMBSTONE_RATIO = 0.25
MAX_EF_MULTIPLIER = 8

_HEADER = struct.Struct("<8sHQ")   # magic, version, generation
_RECORD = struct.Struct("<cI")     # op, payload length


class ReadWriteLock:
    """读写锁：多个读者或一个写者

    写者可重入，持有写锁的线程也可以直接读。
    """

    def __init__(self):
        self._cond = threading.Condition(threading.Lock())
        self._readers = 0
        self._writer: Optional[int] = None
        self._write_depth = 0

    @contextmanager
    def read_locked(self) -> Iterator[None]:
        me = threading.get_ident()
        with self._cond:
            nested = self._writer == me
            if not nested:
                while self._writer is not None:
                    self._cond.wait()
                self._readers += 1
        try:
            yield
        finally:
            if not nested:
                with self._cond:
                    self._readers -= 1
                    if self._readers == 0:
                        self._cond.notify_all()

    @contextmanager
    def write_locked(self) -> Iterator[None]:
        me = threading.get_ident()
        with self._cond:
            if self._writer == me:
                self._write_depth += 1
            else:
                while self._writer is not None or self._readers > 0:
                    self._cond.wait()
                self._writer = me
                self._write_depth = 1
        try:
            yield
        finally:
            with self._cond:
                self._write_depth -= 1
                if self._write_depth == 0:
                    self._writer = None
                    self._cond.notify_all()


@dataclass(frozen=True)
class WhereFilter:
    """元数据过滤条件，全部为空表示不过滤"""
    wing: Optional[str] = None
    room: Optional[str] = None
    hall: Optional[str] = None

    def is_empty(self) -> bool:
        return self.wing is None and self.room is None and self.hall is None

    def matches(self, metadata: Dict[str, Any]) -> bool:
        if self.wing is not None and metadata.get("wing") != self.wing:
            return False
        if self.room is not None and metadata.get("room") != self.room:
            return False
        if self.hall is not None and metadata.get("hall") != self.hall:
            return False
        return True


@dataclass
class IndexedDrawer:
    """写入索引的一条记录"""
    drawer_id: str
    vector: np.ndarray
    metadata: Dict[str, Any]

    def __post_init__(self):
        if not self.metadata.get("wing") or not self.metadata.get("room"):
            raise InvalidInputError(f"索引元数据缺少 wing/room: {self.drawer_id}")


class VectorIndex:
    """整座宫殿的向量索引（精确查询 + HNSW）"""

    def __init__(self,
                 dim: int,
                 metric: str = "cosine",
                 params: HnswParams = None,
                 index_dir: Union[str, Path, None] = None,
                 snapshot_every: int = 1000):
        if metric not in ("cosine", "l2"):
            raise InvalidInputError(f"不支持的距离度量: {metric}")
        self.dim = dim
        self.metric = metric
        self.params = params or HnswParams()
        self.index_dir = Path(index_dir) if index_dir is not None else None
        self.snapshot_every = snapshot_every
        self.lock = ReadWriteLock()

        self._graph = HnswGraph(dim, self.params)
        self._node_ids: List[str] = []
        self._node_metadata: List[Dict[str, Any]] = []
        self._id_to_node: Dict[str, int] = {}
        self._generation = 0
        self._log_records = 0
        self._log_file = None
        self._replaying = False

        if self.index_dir is not None:
            self._open_storage()

    # ------------------------------------------------------------------
    # 读写接口
    # ------------------------------------------------------------------

    def count(self) -> int:
        with self.lock.read_locked():
            return len(self._id_to_node)

    def __len__(self) -> int:
        return self.count()

    def contains(self, drawer_id: str) -> bool:
        with self.lock.read_locked():
            return drawer_id in self._id_to_node

    def ids(self) -> List[str]:
        with self.lock.read_locked():
            return sorted(self._id_to_node)

    def insert(self, item: IndexedDrawer) -> bool:
        """写入一条记录；同 ID 已存在时不做任何事并返回 False"""
        vector = self._prepare_vector(item.vector)
        with self.lock.write_locked():
            if item.drawer_id in self._id_to_node:
                return False
            self._insert_node(item.drawer_id, vector, dict(item.metadata))
            self._append_log(b"I", (item.drawer_id, vector, dict(item.metadata)))
            return True

    def delete(self, drawer_id: str) -> bool:
        """墓碑删除，返回该 ID 之前是否存在"""
        with self.lock.write_locked():
            node = self._id_to_node.pop(drawer_id, None)
            if node is None:
                return False
            self._graph.mark_deleted(node)
            self._maybe_rebuild()
            self._append_log(b"D", drawer_id)
            return True

    def clear(self) -> None:
        """清空全部记录（用于重建），落盘时写一个空快照"""
        with self.lock.write_locked():
            self._graph = HnswGraph(self.dim, self.params)
            self._node_ids, self._node_metadata, self._id_to_node = [], [], {}
            if self.index_dir is not None and self._log_file is not None:
                self._write_snapshot()

    def get_metadata(self, drawer_id: str) -> Optional[Dict[str, Any]]:
        with self.lock.read_locked():
            node = self._id_to_node.get(drawer_id)
            return None if node is None else dict(self._node_metadata[node])

    def distance_to(self, drawer_id: str, query: np.ndarray) -> Optional[float]:
        """query 到某条记录的距离（按配置的度量）"""
        q = self._prepare_vector(query)
        with self.lock.read_locked():
            node = self._id_to_node.get(drawer_id)
            if node is None:
                return None
            rank_dist = float(self._graph.distances(q, [node])[0])
            return self._report_distance(rank_dist)

    # ------------------------------------------------------------------
    # 查询
    # ------------------------------------------------------------------

    def query_exact(self,
                    query: np.ndarray,
                    k: int,
                    where: WhereFilter = None) -> List[Tuple[str, float]]:
        """暴力扫描过滤后的全部记录，返回真实的 k 近邻"""
        if k < 1:
            raise InvalidInputError(f"k 必须 >= 1，当前为 {k}")
        q = self._prepare_vector(query)
        where = where or WhereFilter()
        with self.lock.read_locked():
            nodes = [
                node for node in self._id_to_node.values()
                if where.matches(self._node_metadata[node])
            ]
            if not nodes:
                return []
            rank_dists = self._graph.distances(q, nodes)
            hits = [(float(d), self._node_ids[n]) for d, n in zip(rank_dists, nodes)]
        hits.sort()
        return [(drawer_id, self._report_distance(d)) for d, drawer_id in hits[:k]]

    def query_hnsw(self,
                   query: np.ndarray,
                   k: int,
                   where: WhereFilter = None,
                   ef: Optional[int] = None) -> List[Tuple[str, float]]:
        """HNSW 搜索 + 后过滤，过滤结果不足 k 时扩大 ef"""
        if k < 1:
            raise InvalidInputError(f"k 必须 >= 1，当前为 {k}")
        q = self._prepare_vector(query)
        where = where or WhereFilter()
        ef = max(ef or self.params.ef_search, k)
        max_ef = ef * MAX_EF_MULTIPLIER

        with self.lock.read_locked():
            total = len(self._graph)
            while True:
                candidates = self._graph.search(q, ef)
                hits = [
                    (dist, self._node_ids[node]) for dist, node in candidates
                    if not self._graph.is_deleted(node) and where.matches(self._node_metadata[node])
                ]
                exhausted = len(candidates) >= total
                if len(hits) >= k or ef >= max_ef or exhausted:
                    break
                ef = min(ef * 2, max_ef)

        hits.sort()
        return [(drawer_id, self._report_distance(d)) for d, drawer_id in hits[:k]]

    # ------------------------------------------------------------------
    # 内部实现
    # ------------------------------------------------------------------

    def _prepare_vector(self, vector: Any) -> np.ndarray:
        v = np.asarray(vector, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] != self.dim:
            raise InvalidInputError(f"向量维度不匹配: 期望 {self.dim}，实际 {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("向量中存在非有限值")
        norm = np.linalg.norm(v)
        if norm == 0:
            raise InvalidInputError("不能写入或查询零向量")
        return v / norm

    def _report_distance(self, rank_dist: float) -> float:
        # 单位向量下 cosine = 1 - dot，l2 = sqrt(2 - 2 dot)，两者单调对应
        rank_dist = max(0.0, rank_dist)
        if self.metric == "l2":
            return float(np.sqrt(2.0 * rank_dist))
        return float(min(2.0, rank_dist))

    def _insert_node(self, drawer_id: str, vector: np.ndarray, metadata: Dict[str, Any]) -> None:
        node = self._graph.add(vector)
        self._node_ids.append(drawer_id)
        self._node_metadata.append(metadata)
        self._id_to_node[drawer_id] = node

    def _maybe_rebuild(self) -> None:
        total = len(self._graph)
        tombstones = self._graph.tombstone_count
        if total == 0 or tombstones <= REBUILD_TOMBSTONE_RATIO * total:
            return
        logger.info(f"墓碑占比 {tombstones}/{total} 超过阈值，重建 HNSW 图")
        live = sorted(self._id_to_node.values())
        old_graph, old_ids, old_meta = self._graph, self._node_ids, self._node_metadata
        self._graph = HnswGraph(self.dim, self.params, initial_capacity=max(len(live), 1))
        self._node_ids, self._node_metadata, self._id_to_node = [], [], {}
        for node in live:
            self._insert_node(old_ids[node], old_graph.vector(node).copy(), old_meta[node])

    # ------------------------------------------------------------------
    # 持久化
    # ------------------------------------------------------------------

    @property
    def snapshot_path(self) -> Path:
        return self.index_dir / SNAPSHOT_FILENAME

    @property
    def log_path(self) -> Path:
        return self.index_dir / LOG_FILENAME

    def _open_storage(self) -> None:
        self.index_dir.mkdir(parents=True, exist_ok=True)
        if self.snapshot_path.exists():
            self._load_snapshot()
        replayed = self._replay_log()
        if replayed:
            logger.info(f"重放索引日志 {replayed} 条，当前记录数 {len(self._id_to_node)}")
        self._log_file = open(self.log_path, "ab")
        if self._log_file.tell() == 0:
            self._log_file.write(_HEADER.pack(LOG_MAGIC, FORMAT_VERSION, self._generation))
            self._log_file.flush()

    def _load_snapshot(self) -> None:
        with open(self.snapshot_path, "rb") as f:
            header = f.read(_HEADER.size)
            if len(header) < _HEADER.size:
                raise ConfigError(f"索引快照已损坏: {self.snapshot_path}")
            magic, version, generation = _HEADER.unpack(header)
            if magic != SNAPSHOT_MAGIC:
                raise ConfigError(f"不是索引快照文件: {self.snapshot_path}")
            if version != FORMAT_VERSION:
                raise ConfigError(f"索引快照版本 {version} 不受支持")
            state = pickle.load(f)

        if state["dim"] != self.dim:
            raise ConfigError(
                f"索引维度 {state['dim']} 与配置 embedding_dim={self.dim} 不一致（维度在宫殿生命周期内固定）"
            )
        if state["metric"] != self.metric:
            logger.warning(f"索引快照度量 {state['metric']} 与配置 {self.metric} 不同，按配置报告距离")
        self._graph = HnswGraph.from_state(state["graph"])
        self._node_ids = list(state["node_ids"])
        self._node_metadata = list(state["node_metadata"])
        self._id_to_node = dict(state["id_to_node"])
        self._generation = generation
        logger.info(f"加载索引快照: {len(self._id_to_node)} 条记录 (generation={generation})")

    def _replay_log(self) -> int:
        if not self.log_path.exists():
            return 0
        replayed = 0
        with open(self.log_path, "rb") as f:
            header = f.read(_HEADER.size)
            if len(header) < _HEADER.size:
                self._reset_log_file()
                return 0
            magic, version, generation = _HEADER.unpack(header)
            if magic != LOG_MAGIC or version != FORMAT_VERSION:
                raise ConfigError(f"索引日志格式不受支持: {self.log_path}")
            if generation != self._generation:
                # 日志已并入快照
                logger.info("索引日志已被快照覆盖，跳过重放")
                self._reset_log_file()
                return 0
            self._replaying = True
            try:
                while True:
                    head = f.read(_RECORD.size)
                    if not head:
                        break
                    if len(head) < _RECORD.size:
                        logger.warning("索引日志末尾记录不完整，已丢弃")
                        break
                    op, length = _RECORD.unpack(head)
                    payload = f.read(length)
                    if len(payload) < length:
                        logger.warning("索引日志末尾记录不完整，已丢弃")
                        break
                    self._apply_log_record(op, pickle.loads(payload))
                    replayed += 1
            finally:
                self._replaying = False
        self._log_records = replayed
        return replayed

    def _apply_log_record(self, op: bytes, payload: Any) -> None:
        if op == b"I":
            drawer_id, vector, metadata = payload
            if drawer_id not in self._id_to_node:
                self._insert_node(drawer_id, vector, metadata)
        elif op == b"D":
            node = self._id_to_node.pop(payload, None)
            if node is not None:
                self._graph.mark_deleted(node)
                self._maybe_rebuild()
        else:
            logger.warning(f"未知的索引日志操作: {op!r}")

    def _append_log(self, op: bytes, payload: Any) -> None:
        if self._log_file is None or self._replaying:
            return
        data = pickle.dumps(payload, protocol=pickle.HIGHEST_PROTOCOL)
        self._log_file.write(_RECORD.pack(op, len(data)) + data)
        self._log_file.flush()
        self._log_records += 1
        if self._log_records >= self.snapshot_every:
            self._write_snapshot()

    def _reset_log_file(self) -> None:
        if self._log_file is not None:
            self._log_file.close()
        with open(self.log_path, "wb") as f:
            f.write(_HEADER.pack(LOG_MAGIC, FORMAT_VERSION, self._generation))
        self._log_records = 0
        if self._log_file is not None:
            self._log_file = open(self.log_path, "ab")

    def _write_snapshot(self) -> None:
        self._generation += 1
        state = {
            "dim": self.dim,
            "metric": self.metric,
            "graph": self._graph.get_state(),
            "node_ids": self._node_ids,
            "node_metadata": self._node_metadata,
            "id_to_node": self._id_to_node,
        }
        tmp_path = self.snapshot_path.with_suffix(".tmp")
        with open(tmp_path, "wb") as f:
            f.write(_HEADER.pack(SNAPSHOT_MAGIC, FORMAT_VERSION, self._generation))
            pickle.dump(state, f, protocol=pickle.HIGHEST_PROTOCOL)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, self.snapshot_path)
        self._reset_log_file()
        logger.info(f"写入索引快照: {len(self._id_to_node)} 条记录 (generation={self._generation})")

    def flush(self) -> None:
        """写快照并清空日志"""
        if self.index_dir is None:
            return
        with self.lock.write_locked():
            if self._log_records > 0 or not self.snapshot_path.exists():
                self._write_snapshot()

    def close(self) -> None:
        if self.index_dir is None or self._log_file is None:
            return
        self.flush()
        with self.lock.write_locked():
            self._log_file.close()
            self._log_file = None
