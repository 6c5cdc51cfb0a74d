#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
房间检测器 - 基于规则的 wing/room 自动分类

wing 取源文件路径的顶层目录名（没有时为 general）；
room 取 room_keywords 表中关键词词频最高的房间（没有命中时为 misc）。
"""

import logging
import re
from pathlib import PurePath
from typing import Dict, List, Optional, Union

from core.palace import PalaceAddress, sanitize_identifier

logger = logging.getLogger(__name__)

DEFAULT_WING = "general"
DEFAULT_ROOM = "misc"


def wing_from_path(source_path: Union[str, PurePath, None]) -> str:
    """相对路径的第一级目录名；单独的文件名或空路径落到 general"""
    if not source_path:
        return DEFAULT_WING
    parts = [p for p in PurePath(source_path).parts if p not in ("/", "\\", ".", "")]
    if len(parts) < 2:
        return DEFAULT_WING
    return sanitize_identifier(parts[0], DEFAULT_WING)


def keyword_hits(text: str, keywords: List[str]) -> int:
    """关键词在文本中出现的总次数（不区分大小写，按词边界匹配）"""
    lowered = text.lower()
    total = 0
    for keyword in keywords:
        if keyword:
            total += len(re.findall(rf"(?<!\w){re.escape(keyword.lower())}(?!\w)", lowered))
    return total


def room_from_text(text: str, room_keywords: Optional[Dict[str, List[str]]] = None) -> str:
    if not room_keywords:
        return DEFAULT_ROOM
    best_room, best_hits = DEFAULT_ROOM, 0
    for room in sorted(room_keywords):
        hits = keyword_hits(text, room_keywords[room] or [])
        if hits > best_hits:
            best_room, best_hits = room, hits
    return sanitize_identifier(best_room, DEFAULT_ROOM) if best_hits else DEFAULT_ROOM


def classify_address(text: str,
                     source_path: Union[str, PurePath, None] = None,
                     room_keywords: Optional[Dict[str, List[str]]] = None,
                     closet: Optional[str] = None) -> PalaceAddress:
    """确定性的地址分类"""
    address = PalaceAddress(
        wing=wing_from_path(source_path),
        room=room_from_text(text, room_keywords),
        closet=closet,
    )
    logger.debug(f"分类结果: {source_path} -> {address.wing}/{address.room}")
    return address
