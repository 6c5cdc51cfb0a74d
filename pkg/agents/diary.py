#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
智能体日记

每个智能体一个只追加的 JSON-lines 文件：<palace>/diaries/<agent_id>.jsonl。
同一智能体的追加串行执行；读取按 (created_at, seq) 排序。
"""

import json
import logging
import os
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

from core.errors import InvalidInputError
from core.palace import is_identifier, utc_now_iso

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiaryEntry:
    agent_id: str
    session_id: str
    text: str
    created_at: str
    seq: int

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


class DiaryStore:
    """一座宫殿下全部智能体的日记"""

    def __init__(self, diary_dir: Union[str, Path]):
        self.diary_dir = Path(diary_dir)
        self._guard = threading.Lock()
        self._locks: Dict[str, threading.Lock] = {}
        self._next_seq: Dict[str, int] = {}

    def _path(self, agent_id: str) -> Path:
        return self.diary_dir / f"{agent_id}.jsonl"

    def _agent_lock(self, agent_id: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(agent_id, threading.Lock())

    @staticmethod
    def _check_agent(agent_id: str) -> None:
        if not is_identifier(agent_id):
            raise InvalidInputError(f"agent_id 必须匹配 [a-z0-9_]+，当前为 {agent_id!r}")

    def _load(self, agent_id: str) -> List[DiaryEntry]:
        path = self._path(agent_id)
        if not path.exists():
            return []
        entries = []
        with open(path, "r", encoding="utf-8") as f:
            for line_number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    entries.append(DiaryEntry(**json.loads(line)))
                except (json.JSONDecodeError, TypeError) as e:
                    logger.warning(f"日记 {path} 第 {line_number} 行无法解析，已跳过: {e}")
        return entries

    def append(self, agent_id: str, session_id: str, text: str) -> DiaryEntry:
        self._check_agent(agent_id)
        if not isinstance(text, str) or not text:
            raise InvalidInputError("日记内容不能为空")
        with self._agent_lock(agent_id):
            if agent_id not in self._next_seq:
                existing = self._load(agent_id)
                self._next_seq[agent_id] = max((e.seq for e in existing), default=-1) + 1
            entry = DiaryEntry(
                agent_id=agent_id,
                session_id=session_id,
                text=text,
                created_at=utc_now_iso(),
                seq=self._next_seq[agent_id],
            )
            self.diary_dir.mkdir(parents=True, exist_ok=True)
            with open(self._path(agent_id), "a", encoding="utf-8") as f:
                f.write(json.dumps(entry.to_dict(), ensure_ascii=False) + "\n")
                f.flush()
                os.fsync(f.fileno())
            self._next_seq[agent_id] += 1
        return entry

    def read(self, agent_id: str, last_n: Optional[int] = None) -> List[DiaryEntry]:
        """最近 last_n 条，按时间正序；未知智能体返回空列表"""
        self._check_agent(agent_id)
        if last_n is not None and last_n < 0:
            raise InvalidInputError(f"last_n 不能为负: {last_n}")
        with self._agent_lock(agent_id):
            entries = sorted(self._load(agent_id), key=lambda e: (e.created_at, e.seq))
        if last_n is None:
            return entries
        return entries[-last_n:] if last_n else []

    def agents(self) -> List[str]:
        if not self.diary_dir.exists():
            return []
        return sorted(p.stem for p in self.diary_dir.glob("*.jsonl"))


# 全局日记实例（按目录缓存）
_global_diaries: Dict[str, DiaryStore] = {}
_diaries_lock = threading.Lock()


def get_diary_store(diary_dir: Union[str, Path]) -> DiaryStore:
    key = str(Path(diary_dir).resolve())
    with _diaries_lock:
        if key not in _global_diaries:
            _global_diaries[key] = DiaryStore(diary_dir)
        return _global_diaries[key]


def reset_diary_stores() -> None:
    with _diaries_lock:
        _global_diaries.clear()


def diary_append(palace, agent_id: str, session_id: str, text: str) -> DiaryEntry:
    return get_diary_store(palace.diary_dir).append(agent_id, session_id, text)


def diary_read(palace, agent_id: str, last_n: Optional[int] = None) -> List[DiaryEntry]:
    return get_diary_store(palace.diary_dir).read(agent_id, last_n)
