#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
宫殿存储

磁盘布局（<palace>/）：
    palace.yaml               配置
    drawers.duckdb            抽屉表（权威数据）、壁橱、隧道、AAAK 副命名空间
    index/                    向量索引快照与日志
    knowledge_graph.duckdb    时序知识图谱
    diaries/<agent>.jsonl     智能体日记

抽屉表是唯一的权威数据源；向量索引、BM25 索引和壁橱摘要都可以由它重建（repair）。
写操作共用向量索引的写锁，BM25 的更新也在同一把锁下进行。
"""

import json
import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple, Union

import duckdb
import numpy as np
import pandas as pd

from core.bm25 import BM25Index, tokenize
from core.dialect import compress, serialize_aaak, summary_line
from core.errors import ConfigError, InvalidInputError, NotFoundError
from core.knowledge_graph import KG_FILENAME, KnowledgeGraph
from core.palace import (CONFIG_FILENAME, Drawer, DrawerKind, PalaceAddress, PalaceConfig,
                         load_config, utc_now_iso, validate_address, write_config)
from core.vector_index import IndexedDrawer, VectorIndex, WhereFilter
from llm.embedder import EmbeddingProvider, embed_text, embed_texts, get_embedder

logger = logging.getLogger(__name__)

STORE_FILENAME = "drawers.duckdb"
INDEX_DIRNAME = "index"
DIARY_DIRNAME = "diaries"
EMBED_BATCH_SIZE = 256

_DRAWER_COLUMNS = (
    "id", "seq", "content", "wing", "room", "hall", "closet",
    "source_file", "timestamp", "kind", "metadata", "indexed_text",
)

_SCHEMA = [
    """
    CREATE TABLE IF NOT EXISTS drawers (
        id TEXT PRIMARY KEY, seq BIGINT, content TEXT, wing TEXT, room TEXT,
        hall TEXT, closet TEXT, source_file TEXT, timestamp TEXT, kind TEXT,
        metadata TEXT, indexed_text TEXT
    )
    """,
    """
    CREATE TABLE IF NOT EXISTS closets (
        wing TEXT, room TEXT, closet_id TEXT, summary_line TEXT, member_drawer_ids TEXT
    )
    """,
    """
    CREATE TABLE IF NOT EXISTS tunnels (
        from_drawer_id TEXT, to_drawer_id TEXT, label TEXT, created_at TEXT,
        PRIMARY KEY (from_drawer_id, to_drawer_id)
    )
    """,
    """
    CREATE TABLE IF NOT EXISTS aaak_records (
        drawer_id TEXT PRIMARY KEY, aaak_line TEXT
    )
    """,
]


@dataclass
class AddResult:
    """写入结果：新增的 ID 与被去重的 ID"""
    added: List[str] = field(default_factory=list)
    deduplicated: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"added": list(self.added), "deduplicated": list(self.deduplicated)}


@dataclass
class ClosetEntry:
    """壁橱：指向逐字抽屉的摘要行，本身从不作为记忆内容返回"""
    wing: str
    room: str
    closet_id: str
    summary_line: str
    member_drawer_ids: List[str]

    @property
    def key(self) -> Tuple[str, str, str]:
        return (self.wing, self.room, self.closet_id)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "wing": self.wing,
            "room": self.room,
            "closet_id": self.closet_id,
            "summary_line": self.summary_line,
            "member_drawer_ids": list(self.member_drawer_ids),
        }


@dataclass
class Tunnel:
    from_drawer_id: str
    to_drawer_id: str
    label: str
    created_at: str

    def to_dict(self) -> Dict[str, str]:
        return {
            "from_drawer_id": self.from_drawer_id,
            "to_drawer_id": self.to_drawer_id,
            "label": self.label,
            "created_at": self.created_at,
        }


class Palace:
    """一座打开的记忆宫殿"""

    def __init__(self, config: PalaceConfig):
        self.config = config
        self.path = Path(config.palace_path)
        self.embedder: EmbeddingProvider = get_embedder(
            config.embedding_provider,
            config.embedding_dim,
            config.embedding_url,
            config.embedding_timeout,
        )
        try:
            self._conn = duckdb.connect(str(self.path / STORE_FILENAME))
        except duckdb.IOException as e:
            raise ConfigError(f"无法打开抽屉库（可能正被其他进程占用）: {e}")
        self._kg: Optional[KnowledgeGraph] = None
        self._kg_lock = threading.Lock()
        self._closets: Dict[Tuple[str, str, str], ClosetEntry] = {}

        with self._cursor() as cur:
            for statement in _SCHEMA:
                cur.execute(statement)
            self._next_seq = int(cur.execute("SELECT COALESCE(MAX(seq), -1) + 1 FROM drawers").fetchone()[0])

        self.index = VectorIndex(
            dim=config.embedding_dim,
            metric=config.distance_metric,
            params=config.hnsw,
            index_dir=self.path / INDEX_DIRNAME,
            snapshot_every=config.snapshot_every,
        )
        self.bm25 = BM25Index()
        self._load_derived_state()
        logger.info(f"宫殿已打开: {self.path} ({self.drawer_count()} 个抽屉)")

    # ------------------------------------------------------------------
    # 生命周期
    # ------------------------------------------------------------------

    @classmethod
    def init(cls, path: Union[str, Path], **config_overrides: Any) -> "Palace":
        """创建宫殿目录与 palace.yaml；已存在的宫殿原样打开"""
        root = Path(path)
        if (root / CONFIG_FILENAME).exists():
            if config_overrides:
                logger.warning(f"宫殿已存在，忽略初始化参数: {sorted(config_overrides)}")
            return cls.open(root)
        root.mkdir(parents=True, exist_ok=True)
        config = PalaceConfig.from_dict(config_overrides, root)
        write_config(config)
        (root / INDEX_DIRNAME).mkdir(exist_ok=True)
        logger.info(f"初始化宫殿: {root}")
        return cls(config)

    @classmethod
    def open(cls, path: Union[str, Path]) -> "Palace":
        root = Path(path)
        if not root.is_dir():
            raise NotFoundError(f"宫殿不存在: {root}")
        if not (root / CONFIG_FILENAME).exists():
            raise NotFoundError(f"不是宫殿目录（缺少 {CONFIG_FILENAME}）: {root}")
        return cls(load_config(root))

    def close(self) -> None:
        if self._conn is None:
            return
        self.index.close()
        with self._kg_lock:
            if self._kg is not None:
                self._kg.close()
                self._kg = None
        self._conn.close()
        self._conn = None
        key = _cache_key(self.path)
        if _global_palaces.get(key) is self:
            del _global_palaces[key]

    def __enter__(self) -> "Palace":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    @contextmanager
    def _cursor(self) -> Iterator[duckdb.DuckDBPyConnection]:
        if self._conn is None:
            raise InvalidInputError(f"宫殿已关闭: {self.path}")
        cur = self._conn.cursor()
        try:
            yield cur
        finally:
            cur.close()

    @property
    def kg(self) -> KnowledgeGraph:
        with self._kg_lock:
            if self._kg is None:
                self._kg = KnowledgeGraph(self.path / KG_FILENAME)
            return self._kg

    @property
    def diary_dir(self) -> Path:
        return self.path / DIARY_DIRNAME

    # ------------------------------------------------------------------
    # 派生状态（BM25、壁橱缓存、向量索引对账）
    # ------------------------------------------------------------------

    def _load_derived_state(self) -> None:
        with self._cursor() as cur:
            rows = cur.execute("SELECT id, indexed_text FROM drawers ORDER BY seq").fetchall()
            closet_rows = cur.execute(
                "SELECT wing, room, closet_id, summary_line, member_drawer_ids FROM closets"
            ).fetchall()
        for drawer_id, text in rows:
            self.bm25.add(drawer_id, text)
        for wing, room, closet_id, line, members in closet_rows:
            entry = ClosetEntry(wing, room, closet_id, line, json.loads(members))
            self._closets[entry.key] = entry
        self._reconcile_index({drawer_id for drawer_id, _ in rows})

    def _reconcile_index(self, table_ids: Set[str]) -> None:
        """抽屉表与向量索引对账（写抽屉表后、写索引前崩溃时会出现差异）"""
        indexed = set(self.index.ids())
        stale = indexed - table_ids
        missing = sorted(table_ids - indexed)
        for drawer_id in stale:
            self.index.delete(drawer_id)
        if missing:
            logger.warning(f"向量索引缺少 {len(missing)} 个抽屉，正在补齐")
            self._index_drawers(self.get_drawers(missing).values())
        if stale:
            logger.warning(f"向量索引中有 {len(stale)} 个已不存在的抽屉，已删除")

    def _indexed_text_for(self, drawer: Drawer) -> str:
        if self.config.index_text == "aaak":
            record = compress(drawer.content, drawer.id, self.config.entity_keywords)
            return serialize_aaak(record)
        return drawer.content

    def _embed_drawers(self, drawers: List[Drawer], texts: Dict[str, str]) -> List[IndexedDrawer]:
        items = []
        for start in range(0, len(drawers), EMBED_BATCH_SIZE):
            batch = drawers[start:start + EMBED_BATCH_SIZE]
            vectors = embed_texts(self.embedder, [texts[d.id] for d in batch])
            items.extend(
                IndexedDrawer(drawer.id, vector, drawer.index_metadata())
                for drawer, vector in zip(batch, vectors)
            )
        return items

    def _index_drawers(self, drawers: Iterable[Drawer], texts: Optional[Dict[str, str]] = None) -> None:
        drawers = list(drawers)
        if texts is None:
            texts = self.get_indexed_texts([d.id for d in drawers])
        for item in self._embed_drawers(drawers, texts):
            self.index.insert(item)

    # ------------------------------------------------------------------
    # 写入
    # ------------------------------------------------------------------

    def add_drawers(self, drawers: Sequence[Drawer]) -> AddResult:
        """精确 ID 去重后写入抽屉表、向量索引、BM25，并刷新壁橱"""
        result = AddResult()
        unique: Dict[str, Drawer] = {}
        for drawer in drawers:
            validate_address(drawer.address)
            if drawer.id in unique:
                result.deduplicated.append(drawer.id)
            else:
                unique[drawer.id] = drawer
        if not unique:
            return result

        with self.index.lock.write_locked():
            with self._cursor() as cur:
                existing = {
                    row[0] for row in cur.execute(
                        "SELECT id FROM drawers WHERE list_contains(?, id)", [list(unique)]
                    ).fetchall()
                }
                fresh = [d for d in unique.values() if d.id not in existing]
                result.deduplicated.extend(d for d in unique if d in existing)
                if not fresh:
                    return result

                texts = {d.id: self._indexed_text_for(d) for d in fresh}
                # 先向量化再写表，失败时抽屉表保持不变
                items = self._embed_drawers(fresh, texts)
                frame = pd.DataFrame([
                    {
                        "id": d.id,
                        "seq": self._next_seq + offset,
                        "content": d.content,
                        "wing": d.address.wing,
                        "room": d.address.room,
                        "hall": d.address.hall,
                        "closet": d.address.closet,
                        "source_file": d.source_file,
                        "timestamp": d.timestamp,
                        "kind": d.kind.value,
                        "metadata": json.dumps(d.metadata, ensure_ascii=False, sort_keys=True),
                        "indexed_text": texts[d.id],
                    }
                    for offset, d in enumerate(fresh)
                ], columns=list(_DRAWER_COLUMNS))
                cur.register("new_drawers", frame)
                try:
                    cur.execute(f"INSERT INTO drawers SELECT {', '.join(_DRAWER_COLUMNS)} FROM new_drawers")
                    if self.config.index_text == "aaak":
                        cur.execute("INSERT INTO aaak_records SELECT id, indexed_text FROM new_drawers")
                finally:
                    cur.unregister("new_drawers")
                self._next_seq += len(fresh)

            for item in items:
                self.index.insert(item)
            for drawer in fresh:
                self.bm25.add(drawer.id, texts[drawer.id])
                result.added.append(drawer.id)
            self._refresh_closets({
                (d.address.wing, d.address.room, d.address.closet) for d in fresh if d.address.closet
            })

        if self.config.extract_entities:
            self.kg.record_mentions(fresh, self.config.entity_keywords)
        logger.info(f"写入抽屉: 新增 {len(result.added)}，去重 {len(result.deduplicated)}")
        return result

    def add_drawer(self, drawer: Drawer) -> AddResult:
        return self.add_drawers([drawer])

    def remember(self,
                 content: str,
                 wing: str,
                 room: str,
                 hall: Optional[str] = None,
                 closet: Optional[str] = None,
                 source_file: Optional[str] = None) -> Tuple[str, bool]:
        """手动写入一条记忆，返回 (drawer_id, 是否被去重)"""
        drawer = Drawer.create(
            content=content,
            address=PalaceAddress(wing=wing, room=room, hall=hall, closet=closet),
            kind=DrawerKind.MANUAL,
            source_file=source_file,
        )
        result = self.add_drawers([drawer])
        return drawer.id, drawer.id in result.deduplicated

    def delete_drawer(self, drawer_id: str) -> bool:
        """删除抽屉及其隧道；返回之前是否存在"""
        with self.index.lock.write_locked():
            drawer = self.get_drawer(drawer_id)
            if drawer is None:
                return False
            with self._cursor() as cur:
                cur.execute("DELETE FROM drawers WHERE id = ?", [drawer_id])
                cur.execute("DELETE FROM aaak_records WHERE drawer_id = ?", [drawer_id])
                cur.execute(
                    "DELETE FROM tunnels WHERE from_drawer_id = ? OR to_drawer_id = ?",
                    [drawer_id, drawer_id],
                )
            self.index.delete(drawer_id)
            self.bm25.remove(drawer_id)
            if drawer.address.closet:
                self._refresh_closets({(drawer.address.wing, drawer.address.room, drawer.address.closet)})
        logger.info(f"已删除抽屉 {drawer_id}")
        return True

    # ------------------------------------------------------------------
    # 读取
    # ------------------------------------------------------------------

    @staticmethod
    def _row_to_drawer(row: Sequence[Any]) -> Drawer:
        data = dict(zip(_DRAWER_COLUMNS, row))
        return Drawer(
            id=data["id"],
            content=data["content"],
            address=PalaceAddress(
                wing=data["wing"], room=data["room"], hall=data["hall"], closet=data["closet"]
            ),
            timestamp=data["timestamp"],
            kind=DrawerKind(data["kind"]),
            source_file=data["source_file"],
            metadata=json.loads(data["metadata"]) if data["metadata"] else {},
        )

    def _select_drawers(self, where: str = "", params: Sequence[Any] = (), suffix: str = "") -> List[Drawer]:
        sql = f"SELECT {', '.join(_DRAWER_COLUMNS)} FROM drawers {where} {suffix}"
        with self._cursor() as cur:
            rows = cur.execute(sql, list(params)).fetchall()
        return [self._row_to_drawer(row) for row in rows]

    def get_drawer(self, drawer_id: str) -> Optional[Drawer]:
        drawers = self._select_drawers("WHERE id = ?", [drawer_id])
        return drawers[0] if drawers else None

    def require_drawer(self, drawer_id: str) -> Drawer:
        drawer = self.get_drawer(drawer_id)
        if drawer is None:
            raise NotFoundError(f"抽屉不存在: {drawer_id}")
        return drawer

    def get_drawers(self, drawer_ids: Sequence[str]) -> Dict[str, Drawer]:
        """按给定顺序返回存在的抽屉 {id: Drawer}"""
        if not drawer_ids:
            return {}
        found = {d.id: d for d in self._select_drawers("WHERE list_contains(?, id)", [list(drawer_ids)])}
        return {drawer_id: found[drawer_id] for drawer_id in drawer_ids if drawer_id in found}

    def iter_drawers(self) -> List[Drawer]:
        """全部抽屉，按写入顺序"""
        return self._select_drawers(suffix="ORDER BY seq")

    def recent_drawers(self, limit: Optional[int] = None,
                       wing: Optional[str] = None, room: Optional[str] = None) -> List[Drawer]:
        """按时间倒序（同时间按 ID 升序）"""
        clauses, params = [], []
        if wing is not None:
            clauses.append("wing = ?")
            params.append(wing)
        if room is not None:
            clauses.append("room = ?")
            params.append(room)
        where = f"WHERE {' AND '.join(clauses)}" if clauses else ""
        suffix = "ORDER BY timestamp DESC, id ASC"
        if limit is not None:
            suffix += f" LIMIT {int(limit)}"
        return self._select_drawers(where, params, suffix)

    def get_indexed_texts(self, drawer_ids: Sequence[str]) -> Dict[str, str]:
        if not drawer_ids:
            return {}
        with self._cursor() as cur:
            rows = cur.execute(
                "SELECT id, indexed_text FROM drawers WHERE list_contains(?, id)", [list(drawer_ids)]
            ).fetchall()
        return dict(rows)

    def get_aaak_line(self, drawer_id: str) -> Optional[str]:
        with self._cursor() as cur:
            row = cur.execute("SELECT aaak_line FROM aaak_records WHERE drawer_id = ?", [drawer_id]).fetchone()
        return row[0] if row else None

    def drawer_count(self) -> int:
        with self._cursor() as cur:
            return int(cur.execute("SELECT COUNT(*) FROM drawers").fetchone()[0])

    def has_room(self, room: str) -> bool:
        with self._cursor() as cur:
            return cur.execute("SELECT 1 FROM drawers WHERE room = ? LIMIT 1", [room]).fetchone() is not None

    def list_wings(self) -> List[Dict[str, Any]]:
        with self._cursor() as cur:
            rows = cur.execute(
                "SELECT wing, COUNT(*) FROM drawers GROUP BY wing ORDER BY wing"
            ).fetchall()
        return [{"wing": wing, "drawer_count": int(n)} for wing, n in rows]

    def list_rooms(self, wing: Optional[str] = None) -> List[Dict[str, Any]]:
        sql = "SELECT wing, room, COUNT(*) FROM drawers"
        params: List[Any] = []
        if wing is not None:
            sql += " WHERE wing = ?"
            params.append(wing)
        sql += " GROUP BY wing, room ORDER BY wing, room"
        with self._cursor() as cur:
            rows = cur.execute(sql, params).fetchall()
        return [{"wing": w, "room": r, "drawer_count": int(n)} for w, r, n in rows]

    def status(self) -> Dict[str, Any]:
        with self._cursor() as cur:
            drawer_count, wing_count, room_count = cur.execute(
                "SELECT COUNT(*), COUNT(DISTINCT wing), COUNT(DISTINCT wing || '/' || room) FROM drawers"
            ).fetchone()
            tunnel_count = cur.execute("SELECT COUNT(*) FROM tunnels").fetchone()[0]
        return {
            "palace_path": str(self.path),
            "drawer_count": int(drawer_count),
            "wing_count": int(wing_count),
            "room_count": int(room_count),
            "closet_count": len(self._closets),
            "tunnel_count": int(tunnel_count),
            "indexed_count": self.index.count(),
            "embedding_dim": self.config.embedding_dim,
            "distance_metric": self.config.distance_metric,
            "index_text": self.config.index_text,
            "search_backend": self.config.search_backend,
        }

    # ------------------------------------------------------------------
    # 向量查询
    # ------------------------------------------------------------------

    def embed_query(self, query: str) -> np.ndarray:
        return embed_text(self.embedder, query)

    def query_vectors(self, query_vector: np.ndarray, k: int,
                      where: Optional[WhereFilter] = None) -> List[Tuple[str, float]]:
        """按配置的后端查询向量索引"""
        if self.config.search_backend == "exact":
            return self.index.query_exact(query_vector, k, where)
        return self.index.query_hnsw(query_vector, k, where)

    # ------------------------------------------------------------------
    # 壁橱
    # ------------------------------------------------------------------

    def _refresh_closets(self, keys: Set[Tuple[str, str, str]]) -> None:
        if not keys:
            return
        with self._cursor() as cur:
            for wing, room, closet in sorted(keys):
                rows = cur.execute(
                    "SELECT id, content FROM drawers WHERE wing = ? AND room = ? AND closet = ? ORDER BY seq",
                    [wing, room, closet],
                ).fetchall()
                cur.execute(
                    "DELETE FROM closets WHERE wing = ? AND room = ? AND closet_id = ?",
                    [wing, room, closet],
                )
                if not rows:
                    self._closets.pop((wing, room, closet), None)
                    continue
                entry = ClosetEntry(
                    wing=wing,
                    room=room,
                    closet_id=closet,
                    summary_line=summary_line([content for _, content in rows]),
                    member_drawer_ids=sorted(drawer_id for drawer_id, _ in rows),
                )
                cur.execute(
                    "INSERT INTO closets VALUES (?, ?, ?, ?, ?)",
                    [wing, room, closet, entry.summary_line, json.dumps(entry.member_drawer_ids)],
                )
                self._closets[entry.key] = entry

    def list_closets(self, wing: Optional[str] = None, room: Optional[str] = None) -> List[ClosetEntry]:
        with self.index.lock.read_locked():
            entries = [
                e for e in self._closets.values()
                if (wing is None or e.wing == wing) and (room is None or e.room == room)
            ]
        return sorted(entries, key=lambda e: e.key)

    def closet_hits(self, query_terms: Sequence[str]) -> Set[str]:
        """摘要行与查询词有交集的壁橱所指向的抽屉 ID"""
        terms = set(query_terms)
        hits: Set[str] = set()
        if not terms:
            return hits
        with self.index.lock.read_locked():
            for entry in self._closets.values():
                if terms & set(tokenize(entry.summary_line)):
                    hits.update(entry.member_drawer_ids)
        return hits

    # ------------------------------------------------------------------
    # 隧道
    # ------------------------------------------------------------------

    def add_tunnel(self, from_drawer_id: str, to_drawer_id: str, label: str = "") -> bool:
        """建立抽屉间的有向隧道（遍历时双向），重复建立返回 False"""
        if from_drawer_id == to_drawer_id:
            raise InvalidInputError("隧道两端不能是同一个抽屉")
        with self.index.lock.write_locked():
            for drawer_id in (from_drawer_id, to_drawer_id):
                self.require_drawer(drawer_id)
            with self._cursor() as cur:
                exists = cur.execute(
                    "SELECT 1 FROM tunnels WHERE from_drawer_id = ? AND to_drawer_id = ?",
                    [from_drawer_id, to_drawer_id],
                ).fetchone()
                if exists:
                    return False
                cur.execute(
                    "INSERT INTO tunnels VALUES (?, ?, ?, ?)",
                    [from_drawer_id, to_drawer_id, label, utc_now_iso()],
                )
        logger.info(f"新建隧道 {from_drawer_id} -> {to_drawer_id} ({label})")
        return True

    def list_tunnels(self, drawer_id: Optional[str] = None) -> List[Tunnel]:
        sql = "SELECT from_drawer_id, to_drawer_id, label, created_at FROM tunnels"
        params: List[Any] = []
        if drawer_id is not None:
            sql += " WHERE from_drawer_id = ? OR to_drawer_id = ?"
            params = [drawer_id, drawer_id]
        sql += " ORDER BY from_drawer_id, to_drawer_id"
        with self._cursor() as cur:
            rows = cur.execute(sql, params).fetchall()
        return [Tunnel(*row) for row in rows]

    def follow_tunnels(self, drawer_id: str) -> List[Drawer]:
        """一跳可达的抽屉（两个方向），去重后按 ID 排序"""
        self.require_drawer(drawer_id)
        neighbors = set()
        for tunnel in self.list_tunnels(drawer_id):
            neighbors.add(tunnel.to_drawer_id if tunnel.from_drawer_id == drawer_id else tunnel.from_drawer_id)
        return list(self.get_drawers(sorted(neighbors)).values())

    # ------------------------------------------------------------------
    # 维护
    # ------------------------------------------------------------------

    def dedup_report(self) -> pd.DataFrame:
        """只读报告：同一内容存放在多个地址下的抽屉组"""
        columns = ["content_preview", "copies", "drawer_ids", "addresses"]
        with self._cursor() as cur:
            df = cur.execute("SELECT id, content, wing, room FROM drawers ORDER BY id").fetchdf()

        records = []
        for content, group in df.groupby("content", sort=True):
            if len(group) < 2:
                continue
            records.append({
                "content_preview": content[:60],
                "copies": len(group),
                "drawer_ids": sorted(group["id"]),
                "addresses": sorted(set(group["wing"] + "/" + group["room"])),
            })
        report = pd.DataFrame(records, columns=columns)
        if report.empty:
            return report
        return report.sort_values(["copies", "content_preview"], ascending=[False, True]).reset_index(drop=True)

    def repair(self) -> int:
        """由抽屉表重建向量索引、BM25、AAAK 副命名空间和壁橱，返回重建的抽屉数"""
        with self.index.lock.write_locked():
            drawers = self.iter_drawers()
            texts = {d.id: self._indexed_text_for(d) for d in drawers}
            with self._cursor() as cur:
                cur.execute("DELETE FROM aaak_records")
                cur.execute("DELETE FROM closets")
                for drawer_id, text in texts.items():
                    cur.execute("UPDATE drawers SET indexed_text = ? WHERE id = ?", [text, drawer_id])
                    if self.config.index_text == "aaak":
                        cur.execute("INSERT INTO aaak_records VALUES (?, ?)", [drawer_id, text])
            self._closets.clear()
            self.index.clear()
            self.bm25.clear()
            self._index_drawers(drawers, texts)
            for drawer in drawers:
                self.bm25.add(drawer.id, texts[drawer.id])
            self._refresh_closets({
                (d.address.wing, d.address.room, d.address.closet) for d in drawers if d.address.closet
            })
            self.index.flush()
        logger.info(f"宫殿修复完成: 重建 {len(drawers)} 个抽屉的索引")
        return len(drawers)

    def flush(self) -> None:
        self.index.flush()


# 全局已打开宫殿缓存
_global_palaces: Dict[str, Palace] = {}
_palaces_lock = threading.Lock()


def _cache_key(path: Union[str, Path]) -> str:
    return str(Path(path).resolve())


def get_palace(path: Union[str, Path]) -> Palace:
    """获取已打开的宫殿实例（按路径缓存）"""
    key = _cache_key(path)
    with _palaces_lock:
        if key not in _global_palaces:
            _global_palaces[key] = Palace.open(path)
        return _global_palaces[key]


def reset_palaces() -> None:
    """关闭并清空全部缓存的宫殿"""
    with _palaces_lock:
        palaces = list(_global_palaces.values())
        _global_palaces.clear()
    for palace in palaces:
        palace.close()
