#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
记忆分层与智能体日记测试

1. token 估计与预算校验
2. 唤醒载荷总量不超过 900 token
3. L2 话题上下文
4. 日记追加、读取、持久化与并发
"""

import json
import random
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pytest

# 添加项目根目录到Python路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from agents.diary import DiaryStore, diary_append, diary_read
from agents.layers import (WAKEUP_CEILING, LayerBudget, build_l1, deep_search, estimate_tokens,
                           load_topic_context, wakeup)
from core.errors import InvalidInputError
from core.palace_store import Palace
from llm.prompts import PALACE_PROTOCOL
from modules.diary_tools import DiaryReadTool

IDENTITY = "I am Atlas, the coding assistant for the platform team."


def test_estimate_tokens():
    assert estimate_tokens("") == 0
    assert estimate_tokens("abcd") == 1
    assert estimate_tokens("abcde") == 2


def test_layer_budget_validation():
    with pytest.raises(InvalidInputError):
        LayerBudget(l1_min=900, l1_max=800)
    with pytest.raises(InvalidInputError):
        LayerBudget(l0_max=0)


def test_wakeup_on_empty_palace(palace):
    payload = wakeup(palace, IDENTITY)
    assert payload.l1_text == ""
    assert payload.protocol_directive == PALACE_PROTOCOL
    assert "Always search before claiming ignorance." in payload.render()
    assert payload.token_estimate == estimate_tokens(payload.render())


def test_wakeup_rejects_long_identity(palace):
    with pytest.raises(InvalidInputError):
        wakeup(palace, "x" * 601)


def test_wakeup_stays_within_ceiling(palace):
    for i in range(120):
        palace.remember(
            f"Decision {i}: the team agreed to keep service {i} on the old cluster until the audit ends. "
            f"Follow-up items are tracked in ticket {i * 7}.",
            "work", f"room_{i % 6}",
        )
    payload = wakeup(palace, IDENTITY)
    assert payload.l1_text
    assert payload.token_estimate <= WAKEUP_CEILING
    assert payload.token_estimate == estimate_tokens(payload.render())
    assert all(line.startswith("- [work/room_") for line in payload.l1_text.split("\n"))
    assert estimate_tokens(build_l1(palace)) <= LayerBudget().l1_max


def test_wakeup_budget_on_random_palaces(tmp_path):
    rng = random.Random(3)
    words = ["alpha", "beta", "gamma", "delta", "omega", "sigma", "kappa", "lambda"]
    for n in range(20):
        with Palace.init(tmp_path / f"p{n}", search_backend="exact", extract_entities=False) as palace:
            for i in range(rng.randint(0, 60)):
                sentence = " ".join(rng.choice(words) for _ in range(rng.randint(1, 120)))
                palace.remember(f"{sentence} {i}.", "w", "r")
            identity = "x" * rng.randint(0, 600)
            payload = wakeup(palace, identity)
            assert payload.token_estimate <= WAKEUP_CEILING
            assert estimate_tokens(payload.render()) <= WAKEUP_CEILING


def test_topic_context(palace):
    for i in range(5):
        palace.remember(f"Billing note {i}: invoices are sent on the first Monday.", "work", "billing")
    palace.remember("Garden note: water the roses.", "home", "garden")
    context = load_topic_context(palace, "billing")
    lines = context.split("\n")
    assert lines
    assert all(line.startswith("- [work/billing]") for line in lines)
    assert estimate_tokens(context) <= LayerBudget().l2_per_topic_max
    assert load_topic_context(palace, "attic") == ""
    assert load_topic_context(palace, "Not A Room") == ""


def test_deep_search_is_reexported(palace):
    palace.remember("Deep memory about the lighthouse keeper.", "lore", "sea")
    assert deep_search(palace, "lighthouse keeper")[0].content == "Deep memory about the lighthouse keeper."


def test_diary_append_and_read(palace):
    for i in range(5):
        entry = diary_append(palace, "scout", "s1", f"observation {i}")
        assert entry.seq == i
    entries = diary_read(palace, "scout", last_n=2)
    assert [e.text for e in entries] == ["observation 3", "observation 4"]
    assert len(diary_read(palace, "scout")) == 5
    assert diary_read(palace, "scout", last_n=0) == []
    assert diary_read(palace, "stranger") == []


def test_diary_read_when_last_n_exceeds_entry_count(palace):
    """last_n 大于条目数时返回全部条目"""
    for i in range(9):
        diary_append(palace, "scout", "s1", f"n{i}")
    expected = [f"n{i}" for i in range(9)]
    assert [e.text for e in diary_read(palace, "scout", last_n=9)] == expected
    assert [e.text for e in diary_read(palace, "scout", last_n=10)] == expected
    assert [e.text for e in diary_read(palace, "scout", last_n=12)] == expected

    # 工具默认 last_n=10
    result = DiaryReadTool().execute({"agent_id": "scout"}, palace)
    assert [e["text"] for e in result["data"]["entries"]] == expected


def test_diary_rejects_bad_input(tmp_path):
    store = DiaryStore(tmp_path / "diaries")
    with pytest.raises(InvalidInputError):
        store.append("Bad Agent", "s", "text")
    with pytest.raises(InvalidInputError):
        store.append("agent", "s", "")
    with pytest.raises(InvalidInputError):
        store.read("agent", last_n=-1)


def test_diary_persists_and_skips_corrupt_lines(tmp_path):
    directory = tmp_path / "diaries"
    DiaryStore(directory).append("scout", "s1", "first")
    with open(directory / "scout.jsonl", "a", encoding="utf-8") as f:
        f.write("{broken json\n")
    reopened = DiaryStore(directory)
    entry = reopened.append("scout", "s2", "second")
    assert entry.seq == 1
    assert [e.text for e in reopened.read("scout")] == ["first", "second"]
    assert reopened.agents() == ["scout"]
    first_line = (directory / "scout.jsonl").read_text(encoding="utf-8").splitlines()[0]
    assert json.loads(first_line)["agent_id"] == "scout"


def test_concurrent_diary_appends(tmp_path):
    store = DiaryStore(tmp_path / "diaries")
    with ThreadPoolExecutor(max_workers=8) as pool:
        entries = list(pool.map(lambda i: store.append("busy", "s", f"note {i}"), range(100)))
    assert sorted(e.seq for e in entries) == list(range(100))
    assert len(store.read("busy")) == 100
