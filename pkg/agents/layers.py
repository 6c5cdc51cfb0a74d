#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
四层记忆栈

L0 身份（总是加载，约 100 token）
L1 核心记忆（总是加载，500-800 token，按最近写入的抽屉生成）
L2 话题上下文（按需加载，每个话题不超过 500 token）
L3 深度检索（按需，不设预算，直接走 search_memories）

token 数按 ceil(字符数 / 4) 估算，唤醒载荷（L0 + L1 + 协议指令）不超过 900。
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

from core.dialect import key_sentences
from core.errors import InvalidInputError
from core.palace import Drawer, is_identifier
from core.palace_store import Palace
from core.searcher import SearchMode, SearchRequest, deep_search, search_memories
from llm.prompts import L0_HEADER, L1_HEADER, MEMORY_LINE_TEMPLATE, PALACE_PROTOCOL

logger = logging.getLogger(__name__)

WAKEUP_CEILING = 900
MAX_LINE_CHARS = 240
TOPIC_CANDIDATES = 10

__all__ = [
    "LayerBudget", "WakeupPayload", "estimate_tokens", "build_l1", "wakeup",
    "load_topic_context", "deep_search",
]


def estimate_tokens(text: str) -> int:
    """ceil(字符数 / 4)，模型分词器的粗略替身"""
    return math.ceil(len(text) / 4)


@dataclass(frozen=True)
class LayerBudget:
    l0_max: int = 150
    l1_min: int = 500
    l1_max: int = 800
    l2_per_topic_max: int = 500

    def __post_init__(self):
        for name in ("l0_max", "l1_min", "l1_max", "l2_per_topic_max"):
            if getattr(self, name) <= 0:
                raise InvalidInputError(f"{name} 必须为正")
        if self.l1_min > self.l1_max:
            raise InvalidInputError(f"l1_min ({self.l1_min}) 不能大于 l1_max ({self.l1_max})")


@dataclass
class WakeupPayload:
    l0_text: str
    l1_text: str
    token_estimate: int
    protocol_directive: str

    def render(self) -> str:
        return _render(self.l0_text, self.l1_text, self.protocol_directive)

    def to_dict(self) -> dict:
        return {
            "l0_text": self.l0_text,
            "l1_text": self.l1_text,
            "token_estimate": self.token_estimate,
            "protocol_directive": self.protocol_directive,
        }


def _render(l0_text: str, l1_text: str, directive: str) -> str:
    sections = [f"{L0_HEADER}\n{l0_text}"]
    if l1_text:
        sections.append(f"{L1_HEADER}\n{l1_text}")
    sections.append(directive)
    return "\n\n".join(sections)


def _memory_line(drawer: Drawer, sentence: str) -> str:
    if len(sentence) > MAX_LINE_CHARS:
        cut = sentence[:MAX_LINE_CHARS]
        sentence = cut[:cut.rfind(" ")] if " " in cut else cut
    return MEMORY_LINE_TEMPLATE.format(wing=drawer.address.wing, room=drawer.address.room, sentence=sentence)


def _lines_within(drawers: List[Drawer], max_tokens: int) -> List[str]:
    """按顺序逐行加入，下一行会超出预算时停止"""
    lines: List[str] = []
    for drawer in drawers:
        sentences = key_sentences(drawer.content, limit=1)
        if not sentences:
            continue
        candidate = lines + [_memory_line(drawer, sentences[0])]
        if estimate_tokens("\n".join(candidate)) > max_tokens:
            break
        lines = candidate
    return lines


def build_l1(palace: Palace, budget: Optional[LayerBudget] = None, max_tokens: Optional[int] = None) -> str:
    """L1：最近的抽屉各取一个关键句，总量不超过 l1_max"""
    budget = budget or LayerBudget()
    limit = budget.l1_max if max_tokens is None else min(budget.l1_max, max_tokens)
    if limit <= 0:
        return ""
    # 每行至少 2 个 token，取 limit 个抽屉足够填满预算
    drawers = palace.recent_drawers(limit=limit)
    return "\n".join(_lines_within(drawers, limit))


def wakeup(palace: Palace, identity_text: str, budget: Optional[LayerBudget] = None) -> WakeupPayload:
    """组装唤醒载荷：L0 身份 + L1 核心记忆 + 宫殿协议"""
    budget = budget or LayerBudget()
    identity_tokens = estimate_tokens(identity_text)
    if identity_tokens > budget.l0_max:
        raise InvalidInputError(
            f"身份文本估计 {identity_tokens} token，超过 L0 上限 {budget.l0_max}"
        )

    floor = estimate_tokens(_render(identity_text, "", PALACE_PROTOCOL))
    header_cost = estimate_tokens(f"\n\n{L1_HEADER}\n")
    l1_text = build_l1(palace, budget, max_tokens=WAKEUP_CEILING - floor - header_cost)

    # ceil 取整可能让总量多出 1-2 个 token，逐行回退直到满足上限
    lines = l1_text.split("\n") if l1_text else []
    while lines and estimate_tokens(_render(identity_text, "\n".join(lines), PALACE_PROTOCOL)) > WAKEUP_CEILING:
        lines.pop()
    l1_text = "\n".join(lines)

    total = estimate_tokens(_render(identity_text, l1_text, PALACE_PROTOCOL))
    logger.info(f"唤醒载荷: L1 {len(lines)} 行，约 {total} token")
    return WakeupPayload(
        l0_text=identity_text,
        l1_text=l1_text,
        token_estimate=total,
        protocol_directive=PALACE_PROTOCOL,
    )


def load_topic_context(palace: Palace, topic: str, budget: Optional[LayerBudget] = None) -> str:
    """L2：指定房间内与话题最相关的抽屉关键句；未知房间返回空字符串"""
    budget = budget or LayerBudget()
    if not is_identifier(topic) or not palace.has_room(topic):
        return ""
    request = SearchRequest(
        query=topic.replace("_", " "),
        room=topic,
        n_results=TOPIC_CANDIDATES,
        mode=SearchMode.SEMANTIC,
    )
    results = search_memories(palace, request)
    drawers = list(palace.get_drawers([r.drawer_id for r in results]).values())
    return "\n".join(_lines_within(drawers, budget.l2_per_topic_max))
