#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
记忆宫殿核心类型

宫殿地址（wing/room/hall/closet）只是抽屉上的元数据，不决定物理存储位置；
抽屉 ID 由 (wing, room, content) 唯一决定，相同内容天然去重。
宫殿配置保存在宫殿根目录的 palace.yaml 中。
"""

import hashlib
import logging
import re
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
import yaml

from core.errors import AddressInvalidError, ConfigError, InvalidInputError, NotFoundError
from core.hnsw import HnswParams

logger = logging.getLogger(__name__)

CONFIG_FILENAME = "palace.yaml"
IDENTIFIER_PATTERN = re.compile(r"^[a-z0-9_]+$")
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S.%fZ"

DEFAULT_INCLUDE_GLOBS = [
    "*.md", "*.txt", "*.py", "*.rs", "*.go", "*.ts", "*.yaml", "*.json", "*.toml",
]

DISTANCE_METRICS = ("cosine", "l2")
INDEX_TEXT_MODES = ("verbatim", "aaak")
SEARCH_BACKENDS = ("hnsw", "exact")
EMBEDDING_PROVIDERS = ("builtin", "http")


class DrawerKind(str, Enum):
    """抽屉来源类型"""
    PROJECT_CHUNK = "project_chunk"
    CONVO_EXCHANGE = "convo_exchange"
    MANUAL = "manual"


# ----------------------------------------------------------------------
# 标识符与时间
# ----------------------------------------------------------------------

def is_identifier(value: Any) -> bool:
    return isinstance(value, str) and bool(IDENTIFIER_PATTERN.match(value))


def sanitize_identifier(value: Optional[str], fallback: str) -> str:
    """把任意字符串规整为 [a-z0-9_]+，规整后为空时返回 fallback"""
    if not value:
        return fallback
    cleaned = re.sub(r"[^a-z0-9_]+", "_", value.lower()).strip("_")
    return cleaned or fallback


def parse_timestamp(value: Union[str, datetime, pd.Timestamp]) -> pd.Timestamp:
    """解析 ISO-8601 时间，统一为 UTC；无时区信息按 UTC 处理"""
    try:
        ts = pd.Timestamp(value)
    except (ValueError, TypeError, OverflowError) as e:
        raise InvalidInputError(f"无法解析时间: {value!r} ({e})")
    if pd.isna(ts):
        raise InvalidInputError(f"无法解析时间: {value!r}")
    if ts.tzinfo is None:
        return ts.tz_localize("UTC")
    return ts.tz_convert("UTC")


def format_timestamp(value: Union[str, datetime, pd.Timestamp]) -> str:
    """规范化为定长 UTC 字符串，字典序即时间序"""
    return parse_timestamp(value).strftime(TIMESTAMP_FORMAT)


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).strftime(TIMESTAMP_FORMAT)


# ----------------------------------------------------------------------
# 地址与抽屉
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class PalaceAddress:
    """宫殿坐标：wing/room 必填，hall/closet 可选"""
    wing: str
    room: str
    hall: Optional[str] = None
    closet: Optional[str] = None

    def to_dict(self) -> Dict[str, Optional[str]]:
        return asdict(self)


def validate_address(addr: PalaceAddress) -> None:
    """校验地址，出错时抛出指明字段的 AddressInvalidError"""
    for field_name in ("wing", "room"):
        value = getattr(addr, field_name)
        if not is_identifier(value):
            raise AddressInvalidError(field_name, value)
    for field_name in ("hall", "closet"):
        value = getattr(addr, field_name)
        if value is not None and not is_identifier(value):
            raise AddressInvalidError(field_name, value)


def derive_drawer_id(wing: str, room: str, content: str) -> str:
    """drawer_{wing}_{room}_{md5(content)[:12]}

    MD5 直接作用于内容的 UTF-8 字节，不做任何规范化。
    """
    if not content:
        raise InvalidInputError("抽屉内容不能为空")
    digest = hashlib.md5(content.encode("utf-8")).hexdigest()[:12]
    return f"drawer_{wing}_{room}_{digest}"


@dataclass
class Drawer:
    """抽屉：逐字保存的记忆单元"""
    id: str
    content: str
    address: PalaceAddress
    timestamp: str
    kind: DrawerKind = DrawerKind.MANUAL
    source_file: Optional[str] = None
    metadata: Dict[str, Any] = None

    def __post_init__(self):
        if self.metadata is None:
            self.metadata = {}
        self.kind = DrawerKind(self.kind)

    @classmethod
    def create(cls,
               content: str,
               address: PalaceAddress,
               kind: DrawerKind = DrawerKind.MANUAL,
               source_file: Optional[str] = None,
               timestamp: Optional[str] = None,
               metadata: Optional[Dict[str, Any]] = None) -> "Drawer":
        """校验地址并按公式生成 ID"""
        validate_address(address)
        if not isinstance(content, str) or not content.strip():
            raise InvalidInputError("抽屉内容不能为空或只有空白")
        drawer_id = derive_drawer_id(address.wing, address.room, content)
        return cls(
            id=drawer_id,
            content=content,
            address=address,
            timestamp=format_timestamp(timestamp) if timestamp else utc_now_iso(),
            kind=kind,
            source_file=source_file,
            metadata=dict(metadata or {}),
        )

    def index_metadata(self) -> Dict[str, Any]:
        """向量索引用于过滤的元数据"""
        return {
            "wing": self.address.wing,
            "room": self.address.room,
            "hall": self.address.hall,
            "closet": self.address.closet,
            "source_file": self.source_file,
            "timestamp": self.timestamp,
            "kind": self.kind.value,
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "content": self.content,
            **self.address.to_dict(),
            "source_file": self.source_file,
            "timestamp": self.timestamp,
            "kind": self.kind.value,
            "metadata": self.metadata,
        }


# ----------------------------------------------------------------------
# 配置
# ----------------------------------------------------------------------

@dataclass
class PalaceConfig:
    """宫殿配置，对应 palace.yaml"""
    palace_path: str
    embedding_dim: int = 384
    distance_metric: str = "cosine"
    chunk_size: int = 800
    chunk_overlap: int = 100
    room_keywords: Dict[str, List[str]] = None
    entity_keywords: List[str] = None
    include_globs: List[str] = None
    index_text: str = "verbatim"
    search_backend: str = "hnsw"
    hybrid_pool: int = 50
    extract_entities: bool = True
    snapshot_every: int = 1000
    hnsw: HnswParams = field(default_factory=HnswParams)
    embedding_provider: str = "builtin"
    embedding_url: Optional[str] = None
    embedding_timeout: float = 30.0

    def __post_init__(self):
        if self.room_keywords is None:
            self.room_keywords = {}
        if self.entity_keywords is None:
            self.entity_keywords = []
        if self.include_globs is None:
            self.include_globs = list(DEFAULT_INCLUDE_GLOBS)
        self.palace_path = str(self.palace_path)

    def validate(self) -> "PalaceConfig":
        for name in ("embedding_dim", "chunk_size", "hybrid_pool", "snapshot_every"):
            value = getattr(self, name)
            if not _is_int(value) or value <= 0:
                raise ConfigError(f"{name} 必须为正整数，当前为 {value!r}")
        if not _is_int(self.chunk_overlap) or self.chunk_overlap < 0:
            raise ConfigError(f"chunk_overlap 必须为非负整数，当前为 {self.chunk_overlap!r}")
        if self.chunk_overlap >= self.chunk_size:
            raise ConfigError(
                f"chunk_overlap ({self.chunk_overlap}) 必须小于 chunk_size ({self.chunk_size})"
            )
        _check_choice("distance_metric", self.distance_metric, DISTANCE_METRICS)
        _check_choice("index_text", self.index_text, INDEX_TEXT_MODES)
        _check_choice("search_backend", self.search_backend, SEARCH_BACKENDS)
        _check_choice("embedding_provider", self.embedding_provider, EMBEDDING_PROVIDERS)
        if self.embedding_provider == "http" and not self.embedding_url:
            raise ConfigError("embedding_provider=http 时必须配置 url")
        if not isinstance(self.room_keywords, dict) or not all(
            isinstance(words, list) for words in self.room_keywords.values()
        ):
            raise ConfigError("room_keywords 必须是 {room: [keyword, ...]} 映射")
        for room in self.room_keywords:
            if not is_identifier(room):
                raise ConfigError(f"room_keywords 中的房间名不合法: {room!r}")
        if not isinstance(self.entity_keywords, list):
            raise ConfigError("entity_keywords 必须是列表")
        if not isinstance(self.include_globs, list) or not self.include_globs:
            raise ConfigError("include_globs 必须是非空列表")
        return self

    @classmethod
    def from_dict(cls, raw: Dict[str, Any], palace_path: Union[str, Path]) -> "PalaceConfig":
        raw = dict(raw)
        known = {
            "embedding_dim", "distance_metric", "chunk_size", "chunk_overlap",
            "room_keywords", "entity_keywords", "include_globs", "index_text",
            "search_backend", "hybrid_pool", "extract_entities", "snapshot_every",
        }
        kwargs: Dict[str, Any] = {k: raw.pop(k) for k in list(raw) if k in known}

        hnsw_raw = raw.pop("hnsw", None) or {}
        if not isinstance(hnsw_raw, dict):
            raise ConfigError("hnsw 配置必须是映射")
        try:
            kwargs["hnsw"] = HnswParams(**hnsw_raw)
        except TypeError as e:
            raise ConfigError(f"hnsw 配置字段错误: {e}")
        except InvalidInputError as e:
            raise ConfigError(str(e))

        provider_raw = raw.pop("embedding_provider", None) or {}
        if isinstance(provider_raw, str):
            provider_raw = {"name": provider_raw}
        if not isinstance(provider_raw, dict):
            raise ConfigError("embedding_provider 配置必须是映射")
        kwargs["embedding_provider"] = provider_raw.get("name", "builtin")
        kwargs["embedding_url"] = provider_raw.get("url")
        try:
            kwargs["embedding_timeout"] = float(provider_raw.get("timeout", 30.0))
        except (TypeError, ValueError):
            raise ConfigError(f"embedding_provider.timeout 必须是数字: {provider_raw.get('timeout')!r}")

        for unknown in raw:
            logger.warning(f"palace.yaml 中存在未知配置项，已忽略: {unknown}")

        # YAML 中 room_keywords 的关键词统一小写
        room_keywords = kwargs.get("room_keywords")
        if isinstance(room_keywords, dict):
            kwargs["room_keywords"] = {
                room: [str(word).lower() for word in (words or [])] if isinstance(words, list) else words
                for room, words in room_keywords.items()
            }

        return cls(palace_path=str(palace_path), **kwargs).validate()

    def to_yaml_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "embedding_dim": self.embedding_dim,
            "distance_metric": self.distance_metric,
            "chunk_size": self.chunk_size,
            "chunk_overlap": self.chunk_overlap,
            "index_text": self.index_text,
            "search_backend": self.search_backend,
            "hybrid_pool": self.hybrid_pool,
            "extract_entities": self.extract_entities,
            "snapshot_every": self.snapshot_every,
            "hnsw": self.hnsw.to_dict(),
            "embedding_provider": {"name": self.embedding_provider},
            "include_globs": list(self.include_globs),
            "room_keywords": {room: list(words) for room, words in self.room_keywords.items()},
            "entity_keywords": list(self.entity_keywords),
        }
        if self.embedding_url:
            data["embedding_provider"]["url"] = self.embedding_url
            data["embedding_provider"]["timeout"] = self.embedding_timeout
        return data


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _check_choice(name: str, value: Any, choices: tuple) -> None:
    if value not in choices:
        raise ConfigError(f"{name} 取值必须是 {list(choices)} 之一，当前为 {value!r}")


def load_config(palace_path: Union[str, Path]) -> PalaceConfig:
    """读取宫殿根目录下的 palace.yaml

    Args:
        palace_path: 宫殿根目录

    Returns:
        PalaceConfig: 校验后的配置，缺失字段取默认值
    """
    root = Path(palace_path)
    if not root.is_dir():
        raise NotFoundError(f"宫殿目录不存在: {root}")

    config_file = root / CONFIG_FILENAME
    raw: Any = {}
    if config_file.exists():
        try:
            with open(config_file, "r", encoding="utf-8") as f:
                raw = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"palace.yaml 解析失败: {e}")
        except UnicodeDecodeError as e:
            raise ConfigError(f"palace.yaml 不是合法的 UTF-8 文件: {e}")
    else:
        logger.info(f"未找到 {config_file}，使用默认配置")

    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("palace.yaml 顶层必须是映射")
    return PalaceConfig.from_dict(raw, root)


def write_config(config: PalaceConfig) -> Path:
    """把配置写回 palace.yaml"""
    config.validate()
    config_file = Path(config.palace_path) / CONFIG_FILENAME
    with open(config_file, "w", encoding="utf-8") as f:
        yaml.safe_dump(config.to_yaml_dict(), f, allow_unicode=True, sort_keys=False)
    logger.info(f"配置已写入: {config_file}")
    return config_file
