#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
对话导出挖掘器

导出格式为 JSON-lines，每行一条发言：
    {"session_id": str, "role": "user"|"assistant", "content": str, "ts": ISO-8601}
同一会话内相邻的 (user, assistant) 组成一个交换对，整体作为一个抽屉逐字保存，
超过 chunk_size 的交换对也不拆分。
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from core.errors import InvalidInputError, NotFoundError, ParseError
from core.palace import (Drawer, DrawerKind, PalaceAddress, format_timestamp,
                         sanitize_identifier)
from core.room_detector import classify_address

logger = logging.getLogger(__name__)

ROLES = ("user", "assistant")


@dataclass
class Exchange:
    """一问一答"""
    user_turn: str
    assistant_turn: str
    session_id: str
    turn_index: int
    timestamp: Optional[str] = None

    def __post_init__(self):
        if not self.user_turn or not self.user_turn.strip():
            raise InvalidInputError(f"会话 {self.session_id} 第 {self.turn_index} 轮的 user 发言为空")
        if not self.assistant_turn or not self.assistant_turn.strip():
            raise InvalidInputError(f"会话 {self.session_id} 第 {self.turn_index} 轮的 assistant 发言为空")
        if self.turn_index < 0:
            raise InvalidInputError(f"turn_index 不能为负: {self.turn_index}")

    def render(self) -> str:
        return f"USER: {self.user_turn}\nASSISTANT: {self.assistant_turn}"

    def to_dict(self) -> Dict[str, object]:
        return {
            "user_turn": self.user_turn,
            "assistant_turn": self.assistant_turn,
            "session_id": self.session_id,
            "turn_index": self.turn_index,
            "timestamp": self.timestamp,
        }


def _parse_record(line: str, line_number: int) -> Dict[str, Optional[str]]:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise ParseError(f"JSON 解析失败: {e.msg}", line_number)
    if not isinstance(record, dict):
        raise ParseError("每行必须是一个 JSON 对象", line_number)

    session_id = record.get("session_id")
    role = record.get("role")
    content = record.get("content")
    ts = record.get("ts")
    if not isinstance(session_id, str) or not session_id:
        raise ParseError("缺少 session_id", line_number)
    if role not in ROLES:
        raise ParseError(f"role 必须是 user 或 assistant，当前为 {role!r}", line_number)
    if not isinstance(content, str) or not content.strip():
        raise ParseError(f"{role} 发言内容为空", line_number)
    if ts is not None:
        if not isinstance(ts, str):
            raise ParseError(f"ts 必须是 ISO-8601 字符串: {ts!r}", line_number)
        try:
            ts = format_timestamp(ts)
        except InvalidInputError as e:
            raise ParseError(str(e), line_number)
    return {"session_id": session_id, "role": role, "content": content, "ts": ts}


def parse_conversation(path: Union[str, Path]) -> List[Exchange]:
    """解析对话导出；不成对的发言记录警告后跳过"""
    path = Path(path)
    if not path.is_file():
        raise NotFoundError(f"对话文件不存在: {path}")

    exchanges: List[Exchange] = []
    pending: Dict[str, Dict[str, Optional[str]]] = {}
    turn_counters: Dict[str, int] = {}

    with open(path, "r", encoding="utf-8") as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            record = _parse_record(line, line_number)
            session_id = record["session_id"]
            if record["role"] == "user":
                if session_id in pending:
                    logger.warning(f"{path}:{line_number} 会话 {session_id} 连续出现 user 发言，前一条未配对")
                pending[session_id] = record
                continue

            user = pending.pop(session_id, None)
            if user is None:
                logger.warning(f"{path}:{line_number} 会话 {session_id} 的 assistant 发言没有对应的 user 发言")
                continue
            index = turn_counters.get(session_id, 0)
            turn_counters[session_id] = index + 1
            exchanges.append(Exchange(
                user_turn=user["content"],
                assistant_turn=record["content"],
                session_id=session_id,
                turn_index=index,
                timestamp=record["ts"] or user["ts"],
            ))

    for session_id in pending:
        logger.warning(f"{path}: 会话 {session_id} 末尾的 user 发言没有回复")
    logger.info(f"解析对话 {path}: {len(exchanges)} 个交换对")
    return exchanges


def drawers_from_exchanges(exchanges: Sequence[Exchange],
                           address: Optional[PalaceAddress] = None,
                           room_keywords: Optional[Dict[str, List[str]]] = None,
                           source_file: Optional[str] = None) -> List[Drawer]:
    """每个交换对一个 convo_exchange 抽屉；closet 为规整后的会话 ID"""
    drawers: List[Drawer] = []
    seen = set()
    for exchange in exchanges:
        content = exchange.render()
        closet = sanitize_identifier(exchange.session_id, "session")
        if address is not None:
            target = PalaceAddress(wing=address.wing, room=address.room, hall=address.hall, closet=closet)
        else:
            target = classify_address(content, None, room_keywords, closet=closet)
        drawer = Drawer.create(
            content=content,
            address=target,
            kind=DrawerKind.CONVO_EXCHANGE,
            source_file=source_file,
            timestamp=exchange.timestamp,
            metadata={"session_id": exchange.session_id, "turn_index": exchange.turn_index},
        )
        if drawer.id in seen:
            continue
        seen.add(drawer.id)
        drawers.append(drawer)
    return drawers


def mine_conversation(path: Union[str, Path],
                      address: Optional[PalaceAddress] = None,
                      room_keywords: Optional[Dict[str, List[str]]] = None) -> List[Drawer]:
    """对话导出 -> 抽屉列表"""
    exchanges = parse_conversation(path)
    return drawers_from_exchanges(exchanges, address, room_keywords, source_file=str(path))
