#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
时序知识图谱

entities / triples 两张表（列名与类型沿用经典 SQLite 结构），存放在宫殿目录下的
knowledge_graph.duckdb 单文件中。只支持单跳查询与精确去重，不做语义矛盾检测。
有效期为左闭右开区间 [valid_from, valid_to)，时间统一存为定长 UTC 字符串。
"""

import hashlib
import json
import logging
import re
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import duckdb

from core.errors import InvalidInputError, NotFoundError, ParseError
from core.palace import Drawer, format_timestamp, parse_timestamp, utc_now_iso

logger = logging.getLogger(__name__)

KG_FILENAME = "knowledge_graph.duckdb"
HEURISTIC_CONFIDENCE = 0.5
MENTION_PREDICATE = "mentioned_in"

# SQLite 的 REAL 是 8 字节浮点，duckdb 中对应 DOUBLE
_SCHEMA = [
    """
    CREATE TABLE IF NOT EXISTS entities (
        id TEXT PRIMARY KEY, name TEXT, type TEXT,
        properties TEXT, created_at TEXT
    )
    """,
    """
    CREATE TABLE IF NOT EXISTS triples (
        id TEXT PRIMARY KEY, subject TEXT, predicate TEXT, object TEXT,
        valid_from TEXT, valid_to TEXT, confidence DOUBLE,
        source_closet TEXT, source_file TEXT, extracted_at TEXT
    )
    """,
]

_TRIPLE_COLUMNS = (
    "id", "subject", "predicate", "object", "valid_from", "valid_to",
    "confidence", "source_closet", "source_file", "extracted_at",
)

# 连续两个及以上首字母大写的词
_ENTITY_SPAN_RE = re.compile(r"\b[A-Z][A-Za-z0-9'-]*(?:[ \t]+[A-Z][A-Za-z0-9'-]*)+\b")
_ROLE_WORDS = {"USER", "ASSISTANT"}


@dataclass
class Entity:
    id: str
    name: str
    type: str
    properties: str
    created_at: str


@dataclass
class Triple:
    """subject-predicate-object 事实及其有效期"""
    subject: str
    predicate: str
    object: str
    valid_from: Optional[str] = None
    valid_to: Optional[str] = None
    confidence: float = 1.0
    source_closet: Optional[str] = None
    source_file: Optional[str] = None
    extracted_at: Optional[str] = None
    id: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in _TRIPLE_COLUMNS}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Triple":
        return cls(**{name: data.get(name) for name in _TRIPLE_COLUMNS if name in data})

    def identity(self) -> Tuple[str, str, str, Optional[str], Optional[str]]:
        return (self.subject, self.predicate, self.object, self.valid_from, self.valid_to)


def entity_id(name: str) -> str:
    return "ent_" + hashlib.md5(name.encode("utf-8")).hexdigest()[:12]


def triple_id(subject: str, predicate: str, obj: str,
              valid_from: Optional[str], valid_to: Optional[str]) -> str:
    key = "\x1f".join([subject, predicate, obj, valid_from or "", valid_to or ""])
    return "t_" + hashlib.md5(key.encode("utf-8")).hexdigest()[:16]


def extract_entities(text: str, keyword_entities: Sequence[str] = ()) -> List[str]:
    """启发式实体抽取：首字母大写的多词片段 + 配置的关键词实体

    返回去重后的实体名，按首次出现的位置排序。
    """
    found: List[Tuple[int, str]] = []
    for match in _ENTITY_SPAN_RE.finditer(text):
        words = [w for w in match.group(0).split() if w not in _ROLE_WORDS]
        if len(words) >= 2:
            found.append((match.start(), " ".join(words)))
    for keyword in keyword_entities:
        if not keyword:
            continue
        hit = re.search(rf"(?<!\w){re.escape(keyword)}(?!\w)", text, flags=re.IGNORECASE)
        if hit:
            found.append((hit.start(), keyword))

    names: List[str] = []
    seen = set()
    for _, name in sorted(found, key=lambda item: item[0]):
        if name not in seen:
            seen.add(name)
            names.append(name)
    return names


class KnowledgeGraph:
    """duckdb 上的时序三元组存储，单写多读"""

    def __init__(self, db_path: Union[str, Path, None] = None):
        self.db_path = str(db_path) if db_path is not None else ":memory:"
        self._conn = duckdb.connect(self.db_path)
        self._lock = threading.RLock()
        self.initialize_schema()
        logger.info(f"知识图谱已打开: {self.db_path}")

    def initialize_schema(self) -> None:
        with self._lock:
            for statement in _SCHEMA:
                self._conn.execute(statement)

    def close(self) -> None:
        with self._lock:
            if self._conn is not None:
                self._conn.close()
                self._conn = None

    # ------------------------------------------------------------------
    # 实体
    # ------------------------------------------------------------------

    def add_entity(self, name: str, type: str = "unknown",
                   properties: Optional[Dict[str, Any]] = None) -> Entity:
        """按名称幂等写入实体"""
        if not name or not name.strip():
            raise InvalidInputError("实体名不能为空")
        eid = entity_id(name)
        with self._lock:
            row = self._conn.execute(
                "SELECT id, name, type, properties, created_at FROM entities WHERE id = ?", [eid]
            ).fetchone()
            if row is not None:
                return Entity(*row)
            entity = Entity(
                id=eid,
                name=name,
                type=type,
                properties=json.dumps(properties or {}, ensure_ascii=False, sort_keys=True),
                created_at=utc_now_iso(),
            )
            self._conn.execute(
                "INSERT INTO entities VALUES (?, ?, ?, ?, ?)",
                [entity.id, entity.name, entity.type, entity.properties, entity.created_at],
            )
            return entity

    def get_entity(self, name: str) -> Optional[Entity]:
        with self._lock:
            row = self._conn.execute(
                "SELECT id, name, type, properties, created_at FROM entities WHERE id = ?",
                [entity_id(name)],
            ).fetchone()
        return Entity(*row) if row else None

    # ------------------------------------------------------------------
    # 三元组
    # ------------------------------------------------------------------

    def _normalize(self, t: Triple) -> Triple:
        for field_name in ("subject", "predicate", "object"):
            value = getattr(t, field_name)
            if not isinstance(value, str) or not value:
                raise InvalidInputError(f"三元组字段 {field_name} 不能为空")
        confidence = t.confidence
        if isinstance(confidence, bool) or not isinstance(confidence, (int, float)):
            raise InvalidInputError(f"confidence 必须是 [0,1] 内的实数，当前为 {confidence!r}")
        if not 0.0 <= float(confidence) <= 1.0:
            raise InvalidInputError(f"confidence 必须在 [0,1] 内，当前为 {confidence}")
        valid_from = format_timestamp(t.valid_from) if t.valid_from else None
        valid_to = format_timestamp(t.valid_to) if t.valid_to else None
        if valid_from and valid_to and valid_to < valid_from:
            raise InvalidInputError(f"有效期倒置: valid_from={valid_from} > valid_to={valid_to}")
        return Triple(
            subject=t.subject,
            predicate=t.predicate,
            object=t.object,
            valid_from=valid_from,
            valid_to=valid_to,
            confidence=float(confidence),
            source_closet=t.source_closet,
            source_file=t.source_file,
            extracted_at=format_timestamp(t.extracted_at) if t.extracted_at else utc_now_iso(),
        )

    def add_triple_record(self, t: Triple) -> Tuple[bool, Triple]:
        """写入三元组，返回 (是否新增, 存储中的三元组)"""
        triple = self._normalize(t)
        with self._lock:
            existing = self._conn.execute(
                f"SELECT {', '.join(_TRIPLE_COLUMNS)} FROM triples "
                "WHERE subject = ? AND predicate = ? AND object = ? "
                "AND valid_from IS NOT DISTINCT FROM ? AND valid_to IS NOT DISTINCT FROM ?",
                list(triple.identity()),
            ).fetchone()
            if existing is not None:
                return False, self._row_to_triple(existing)

            base_id = triple_id(*triple.identity())
            candidate = base_id
            suffix = 1
            # 同一身份的旧三元组被 close_validity 改过区间后，ID 仍被占用
            while self._conn.execute("SELECT 1 FROM triples WHERE id = ?", [candidate]).fetchone():
                candidate = f"{base_id}_{suffix}"
                suffix += 1
            triple.id = candidate

            self.add_entity(triple.subject)
            self._conn.execute(
                f"INSERT INTO triples ({', '.join(_TRIPLE_COLUMNS)}) VALUES ({', '.join('?' * len(_TRIPLE_COLUMNS))})",
                [getattr(triple, name) for name in _TRIPLE_COLUMNS],
            )
        return True, triple

    def add_triple(self, t: Triple) -> bool:
        """精确去重写入；重复时返回 False"""
        added, _ = self.add_triple_record(t)
        return added

    def get_triple(self, triple_id_value: str) -> Optional[Triple]:
        with self._lock:
            row = self._conn.execute(
                f"SELECT {', '.join(_TRIPLE_COLUMNS)} FROM triples WHERE id = ?", [triple_id_value]
            ).fetchone()
        return self._row_to_triple(row) if row else None

    def query_by_subject(self, subject: str, at_time: Optional[str] = None) -> List[Triple]:
        """主语的全部三元组；给定 at_time 时只返回该时刻有效的"""
        sql = f"SELECT {', '.join(_TRIPLE_COLUMNS)} FROM triples WHERE subject = ?"
        params: List[Any] = [subject]
        if at_time:
            probe = format_timestamp(at_time)
            sql += (" AND (valid_from IS NULL OR valid_from <= ?)"
                    " AND (valid_to IS NULL OR valid_to > ?)")
            params.extend([probe, probe])
        sql += " ORDER BY extracted_at, id"
        with self._lock:
            rows = self._conn.execute(sql, params).fetchall()
        return [self._row_to_triple(row) for row in rows]

    def query_by_predicate(self, predicate: str) -> List[Triple]:
        """谓词精确匹配（区分大小写）"""
        with self._lock:
            rows = self._conn.execute(
                f"SELECT {', '.join(_TRIPLE_COLUMNS)} FROM triples WHERE predicate = ? "
                "ORDER BY extracted_at, id",
                [predicate],
            ).fetchall()
        return [self._row_to_triple(row) for row in rows]

    def close_validity(self, triple_id_value: str, valid_to: str) -> Triple:
        """设置有效期终点，用于事实更替而不删除"""
        end = format_timestamp(valid_to)
        with self._lock:
            triple = self.get_triple(triple_id_value)
            if triple is None:
                raise NotFoundError(f"三元组不存在: {triple_id_value}")
            if triple.valid_from and end < triple.valid_from:
                raise InvalidInputError(
                    f"有效期倒置: valid_to={end} 早于 valid_from={triple.valid_from}"
                )
            self._conn.execute("UPDATE triples SET valid_to = ? WHERE id = ?", [end, triple_id_value])
            triple.valid_to = end
        logger.info(f"三元组 {triple_id_value} 有效期截止于 {end}")
        return triple

    def all_triples(self) -> List[Triple]:
        with self._lock:
            rows = self._conn.execute(
                f"SELECT {', '.join(_TRIPLE_COLUMNS)} FROM triples ORDER BY extracted_at, id"
            ).fetchall()
        return [self._row_to_triple(row) for row in rows]

    def stats(self) -> Dict[str, int]:
        with self._lock:
            entities = self._conn.execute("SELECT COUNT(*) FROM entities").fetchone()[0]
            triples = self._conn.execute("SELECT COUNT(*) FROM triples").fetchone()[0]
        return {"entity_count": int(entities), "triple_count": int(triples)}

    @staticmethod
    def _row_to_triple(row: Sequence[Any]) -> Triple:
        data = dict(zip(_TRIPLE_COLUMNS, row))
        if data["confidence"] is not None:
            data["confidence"] = float(data["confidence"])
        return Triple(**data)

    # ------------------------------------------------------------------
    # 抽取与导入导出
    # ------------------------------------------------------------------

    def record_mentions(self, drawers: Iterable[Drawer], keyword_entities: Sequence[str] = ()) -> int:
        """为抽屉中的实体写入 (entity, mentioned_in, drawer_id) 三元组"""
        added = 0
        for drawer in drawers:
            for name in extract_entities(drawer.content, keyword_entities):
                triple = Triple(
                    subject=name,
                    predicate=MENTION_PREDICATE,
                    object=drawer.id,
                    confidence=HEURISTIC_CONFIDENCE,
                    source_closet=drawer.address.closet,
                    source_file=drawer.source_file,
                )
                if self.add_triple(triple):
                    added += 1
        if added:
            logger.info(f"实体抽取新增 {added} 条三元组")
        return added

    def dump_jsonl(self, path: Union[str, Path]) -> int:
        triples = self.all_triples()
        with open(path, "w", encoding="utf-8") as f:
            for triple in triples:
                f.write(json.dumps(triple.to_dict(), ensure_ascii=False) + "\n")
        logger.info(f"导出 {len(triples)} 条三元组到 {path}")
        return len(triples)

    def load_jsonl(self, path: Union[str, Path]) -> int:
        if not Path(path).exists():
            raise NotFoundError(f"三元组文件不存在: {path}")
        added = 0
        with open(path, "r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise ParseError(f"JSON 解析失败: {e}", line_number)
                if not isinstance(record, dict):
                    raise ParseError("每行必须是一个 JSON 对象", line_number)
                try:
                    triple = Triple.from_dict(record)
                except TypeError as e:
                    raise ParseError(f"三元组字段错误: {e}", line_number)
                triple.id = None
                if self.add_triple(triple):
                    added += 1
        logger.info(f"从 {path} 导入 {added} 条新三元组")
        return added
