#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
宫殿存储测试

1. 初始化、打开、重新打开后的持久化
2. 精确去重、删除、统计
3. 去重报告与索引修复
4. AAAK 索引模式
5. 实体抽取写入知识图谱
"""

import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pytest
import yaml

# 添加项目根目录到Python路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.dialect import parse_aaak
from core.errors import AddressInvalidError, InvalidInputError, NotFoundError
from core.knowledge_graph import MENTION_PREDICATE
from core.palace import CONFIG_FILENAME, Drawer, PalaceAddress
from core.palace_store import Palace, get_palace, reset_palaces
from core.searcher import SearchMode, search


def test_init_writes_config_and_open_reads_it(tmp_path):
    root = tmp_path / "palace"
    with Palace.init(root, distance_metric="l2", embedding_dim=64) as palace:
        assert palace.config.distance_metric == "l2"
    saved = yaml.safe_load((root / CONFIG_FILENAME).read_text(encoding="utf-8"))
    assert saved["distance_metric"] == "l2"
    assert saved["embedding_dim"] == 64
    with Palace.open(root) as palace:
        assert palace.config.embedding_dim == 64
        assert palace.status()["drawer_count"] == 0


def test_open_missing_palace(tmp_path):
    with pytest.raises(NotFoundError):
        Palace.open(tmp_path / "nothing")
    (tmp_path / "plain").mkdir()
    with pytest.raises(NotFoundError):
        Palace.open(tmp_path / "plain")


def test_remember_deduplicates_exact_content(palace):
    first, dup1 = palace.remember("same fact", "dev", "api")
    second, dup2 = palace.remember("same fact", "dev", "api")
    other, _ = palace.remember("same fact", "dev", "web")
    assert first == second
    assert (dup1, dup2) == (False, True)
    assert other != first
    assert palace.drawer_count() == 2


def test_add_drawers_reports_added_and_deduplicated(palace):
    a = Drawer.create("one", PalaceAddress("w", "r"))
    b = Drawer.create("two", PalaceAddress("w", "r"))
    result = palace.add_drawers([a, b, a])
    assert result.added == [a.id, b.id]
    assert result.deduplicated == [a.id]
    again = palace.add_drawers([b])
    assert again.added == []
    assert again.deduplicated == [b.id]


def test_invalid_address_is_rejected(palace):
    with pytest.raises(AddressInvalidError):
        palace.remember("text", "Dev", "api")
    assert palace.drawer_count() == 0


def test_delete_drawer_removes_everywhere(palace):
    drawer_id, _ = palace.remember("temporary note about lighthouses", "misc", "notes")
    assert palace.delete_drawer(drawer_id)
    assert not palace.delete_drawer(drawer_id)
    assert palace.get_drawer(drawer_id) is None
    assert not palace.index.contains(drawer_id)
    assert drawer_id not in palace.bm25
    assert search(palace, "lighthouses") == []


def test_status_and_listing(palace):
    palace.remember("a", "work", "ops")
    palace.remember("b", "work", "finance")
    palace.remember("c", "home", "garden")
    status = palace.status()
    assert status["drawer_count"] == 3
    assert status["wing_count"] == 2
    assert status["room_count"] == 3
    assert status["indexed_count"] == 3
    assert palace.list_wings() == [
        {"wing": "home", "drawer_count": 1},
        {"wing": "work", "drawer_count": 2},
    ]
    assert [r["room"] for r in palace.list_rooms("work")] == ["finance", "ops"]
    assert palace.has_room("garden")
    assert not palace.has_room("attic")


def test_palace_persists_across_reopen(tmp_path):
    root = tmp_path / "palace"
    with Palace.init(root) as palace:
        for i in range(30):
            palace.remember(f"persistent memory number {i} about sailing", "life", "hobby")
        expected = [r.drawer_id for r in search(palace, "memory number 7 sailing", n_results=5)]
    with Palace.open(root) as palace:
        assert palace.drawer_count() == 30
        assert palace.index.count() == 30
        assert [r.drawer_id for r in search(palace, "memory number 7 sailing", n_results=5)] == expected


def test_whitespace_content_is_rejected_without_side_effects(tmp_path):
    """只有空白的内容被拒绝，抽屉表不变，宫殿仍可重新打开"""
    root = tmp_path / "palace"
    with Palace.init(root, search_backend="exact") as palace:
        palace.remember("real fact about the ledger", "work", "notes")
        with pytest.raises(InvalidInputError):
            palace.remember("   \n\t ", "work", "notes")

        good = Drawer.create("another real fact", PalaceAddress(wing="work", room="notes"))
        blank = Drawer(id="drawer_work_notes_blank", content="   ",
                       address=PalaceAddress(wing="work", room="notes"), timestamp=good.timestamp)
        with pytest.raises(InvalidInputError):
            palace.add_drawers([good, blank])
        assert palace.drawer_count() == 1
        assert palace.index.count() == 1

    with Palace.open(root) as palace:
        assert palace.drawer_count() == 1
        assert palace.index.count() == 1
        assert search(palace, "ledger", n_results=1)[0].content == "real fact about the ledger"


def test_get_palace_caches_by_path(tmp_path):
    root = tmp_path / "palace"
    Palace.init(root).close()
    assert get_palace(root) is get_palace(str(root))
    reset_palaces()


def test_dedup_report_groups_identical_content(palace):
    palace.remember("shared content", "work", "ops")
    palace.remember("shared content", "home", "notes")
    palace.remember("unique content", "work", "ops")
    report = palace.dedup_report()
    assert list(report.columns) == ["content_preview", "copies", "drawer_ids", "addresses"]
    assert len(report) == 1
    row = report.iloc[0]
    assert row["copies"] == 2
    assert row["addresses"] == ["home/notes", "work/ops"]
    assert palace.drawer_count() == 3


def test_repair_rebuilds_derived_state(palace):
    ids = [palace.remember(f"note {i} on the quarterly roadmap", "work", "plans")[0] for i in range(5)]
    before = [r.drawer_id for r in search(palace, "quarterly roadmap note 3")]
    palace.index.clear()
    palace.bm25.clear()
    assert search(palace, "quarterly roadmap") == []
    assert palace.repair() == 5
    assert palace.index.count() == 5
    assert all(drawer_id in palace.bm25 for drawer_id in ids)
    assert [r.drawer_id for r in search(palace, "quarterly roadmap note 3")] == before


def test_aaak_palace_indexes_compressed_text_but_returns_verbatim(tmp_path):
    text = ("We decided to migrate the billing service to Postgres next month. "
            "The current MySQL cluster is costly. Remember to update the runbook.")
    with Palace.init(tmp_path / "aaak", index_text="aaak", search_backend="exact") as palace:
        drawer_id, _ = palace.remember(text, "work", "infra")
        line = palace.get_aaak_line(drawer_id)
        assert line is not None and line.startswith("AAAK|")
        record = parse_aaak(line)
        assert "decision" in record.flags
        results = search(palace, "billing postgres migration")
        assert results[0].drawer_id == drawer_id
        assert results[0].content == text


def test_entity_mentions_are_recorded(palace):
    drawer_id, _ = palace.remember("Alice Johnson met Bob Stone in Paris.", "people", "meetings")
    triples = palace.kg.query_by_subject("Alice Johnson")
    assert [(t.predicate, t.object) for t in triples] == [(MENTION_PREDICATE, drawer_id)]
    assert triples[0].confidence == 0.5
    assert palace.kg.query_by_subject("Bob Stone")


def test_entity_extraction_can_be_disabled(tmp_path):
    with Palace.init(tmp_path / "quiet", extract_entities=False) as palace:
        palace.remember("Alice Johnson met Bob Stone.", "people", "meetings")
        assert palace.kg.stats()["triple_count"] == 0


def test_concurrent_reads_and_writes(palace):
    """多线程读写不报错，写入全部可见"""
    def write(i):
        return palace.remember(f"concurrent fact {i} about rivers", "geo", "rivers")[0]

    def read(i):
        return search(palace, f"rivers fact {i}", mode=SearchMode.HYBRID)

    with ThreadPoolExecutor(max_workers=8) as pool:
        writes = [pool.submit(write, i) for i in range(40)]
        reads = [pool.submit(read, i) for i in range(40)]
        ids = {f.result() for f in writes}
        for f in reads:
            f.result()
    assert len(ids) == 40
    assert palace.drawer_count() == 40
