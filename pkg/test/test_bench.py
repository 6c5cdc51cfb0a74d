#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
评测测试

1. 合成数据集的确定性与不变量
2. recall_any@k 评分
3. 消融网格与方向性检查
"""

import json
import sys
from pathlib import Path

import pytest

# 添加项目根目录到Python路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from bench.ablation_walker import AblationWalker, run_ablations
from bench.fixtures import (fixture_to_json, generate_fixture, keyphrase_sessions, load_fixture,
                            save_fixture)
from bench.harness import (METRIC_LABEL, AblationCondition, evaluate_condition, ingest_fixture,
                           recall_table, score_recall_any)
from core.errors import FixtureError, InvalidInputError, NotFoundError
from core.searcher import SearchMode


@pytest.fixture(scope="module")
def small_fixture():
    return generate_fixture(20, 30, seed=1)


def test_fixture_generation_is_deterministic():
    a = fixture_to_json(generate_fixture(10, 15, seed=7))
    b = fixture_to_json(generate_fixture(10, 15, seed=7))
    c = fixture_to_json(generate_fixture(10, 15, seed=8))
    assert a == b
    assert a != c


def test_default_sized_fixture_invariants():
    fixture = generate_fixture(50, 200, seed=7)
    assert len(fixture.questions) == 50
    assert len(fixture.sessions) == 250
    session_map = fixture.session_map()
    for question in fixture.questions:
        assert keyphrase_sessions(fixture, question.keyphrase) == question.answer_session_ids
        assert question.keyphrase in question.query_text
        assert question.wing_hint == session_map[question.answer_session_ids[0]].wing
    assert len({q.keyphrase for q in fixture.questions}) == 50


def test_generate_rejects_bad_sizes():
    with pytest.raises(InvalidInputError):
        generate_fixture(0, 10, seed=1)
    with pytest.raises(InvalidInputError):
        generate_fixture(5, -1, seed=1)


def test_save_and_load_fixture(tmp_path, small_fixture):
    path = save_fixture(small_fixture, tmp_path / "fixture.json")
    loaded = load_fixture(path)
    assert loaded.to_dict() == small_fixture.to_dict()
    assert path.read_text(encoding="utf-8") == fixture_to_json(small_fixture)


def test_load_fixture_errors(tmp_path, small_fixture):
    with pytest.raises(NotFoundError):
        load_fixture(tmp_path / "missing.json")

    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(FixtureError):
        load_fixture(broken)

    listed = tmp_path / "list.json"
    listed.write_text("[]", encoding="utf-8")
    with pytest.raises(FixtureError):
        load_fixture(listed)

    data = small_fixture.to_dict()
    data["questions"][0]["answer_session_ids"] = ["s_ghost"]
    dangling = tmp_path / "dangling.json"
    dangling.write_text(json.dumps(data), encoding="utf-8")
    with pytest.raises(FixtureError):
        load_fixture(dangling)


def test_hybrid_recall_is_perfect_on_keyphrase_questions(tmp_path, small_fixture):
    report = evaluate_condition(small_fixture, tmp_path / "hybrid", AblationCondition())
    assert report.recall_any_at_k == {1: 1.0, 5: 1.0, 10: 1.0}
    assert report.drawer_count == small_fixture.distinct_exchange_count()
    assert report.to_dict()["metric"] == METRIC_LABEL
    assert "runtime_ms" not in report.to_dict()
    assert "runtime_ms" in report.to_dict(include_timings=True)


def test_recall_is_monotone_in_k(tmp_path, small_fixture):
    palace = ingest_fixture(small_fixture, tmp_path / "mono")
    try:
        for mode in SearchMode:
            report = score_recall_any(palace, small_fixture, ks=[1, 3, 5, 10], mode=mode)
            values = [report.recall_any_at_k[k] for k in (1, 3, 5, 10)]
            assert values == sorted(values)
        keyword = score_recall_any(palace, small_fixture, ks=[1], mode=SearchMode.KEYWORD)
        assert keyword.recall_any_at_k[1] == 1.0
        semantic = score_recall_any(palace, small_fixture, ks=[10], mode=SearchMode.SEMANTIC)
        assert semantic.recall_any_at_k[10] >= 0.5
        with pytest.raises(InvalidInputError):
            score_recall_any(palace, small_fixture, ks=[0])
    finally:
        palace.close()


def test_scoped_recall_stays_perfect(tmp_path, small_fixture):
    report = evaluate_condition(small_fixture, tmp_path / "scoped", AblationCondition(scoped=True))
    assert report.recall_any_at_k[5] == 1.0


def test_recall_table_columns(tmp_path, small_fixture):
    report = evaluate_condition(small_fixture, tmp_path / "table", AblationCondition(metric="l2"))
    table = recall_table([report])
    assert list(table.columns) == ["condition", "drawers", "R@1", "R@5", "R@10"]
    assert table.iloc[0]["condition"] == "verbatim/unscoped/l2"


def test_ablation_grid_and_checks(tmp_path):
    fixture = generate_fixture(8, 12, seed=3)
    walker = AblationWalker(fixture, workdir=tmp_path / "grid")
    conditions = walker.generate_conditions()
    assert len(conditions) == 8
    assert len({c.name for c in conditions}) == 8

    report = walker.run()
    assert report.all_checks_pass, report.checks
    assert set(report.checks) == {
        "cosine_equals_l2", "aaak_le_verbatim", "scoped_ge_unscoped", "drawer_counts_consistent",
    }
    assert len(walker.get_execution_history()) == 8
    assert report.mean_compression_ratio > 0
    assert report.expected_drawers == fixture.distinct_exchange_count()
    assert "PASS  cosine_equals_l2" in report.to_text()


def test_ingest_fixture_refuses_existing_palace_dir(tmp_path):
    """已有宫殿的目录不会被静默复用（条件配置可能不同）"""
    fixture = generate_fixture(3, 3, seed=4)
    ingest_fixture(fixture, tmp_path / "cond", AblationCondition(metric="l2")).close()
    with pytest.raises(InvalidInputError):
        ingest_fixture(fixture, tmp_path / "cond", AblationCondition(metric="cosine"))


def test_ablation_refuses_reused_condition_dir(tmp_path):
    fixture = generate_fixture(3, 3, seed=4)
    walker = AblationWalker(fixture, workdir=tmp_path / "reuse")
    condition = AblationCondition()
    assert walker.execute_condition(condition, tmp_path / "reuse").success
    again = walker.execute_condition(condition, tmp_path / "reuse")
    assert not again.success
    with pytest.raises(RuntimeError):
        walker.aggregate_results([again])


def test_ablation_report_json_is_reproducible(tmp_path):
    fixture = generate_fixture(5, 5, seed=11)
    first = run_ablations(fixture, workdir=tmp_path / "a").to_dict()
    second = run_ablations(fixture, workdir=tmp_path / "b").to_dict()
    assert json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)


@pytest.mark.slow
@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_directional_checks_hold_across_seeds(tmp_path, seed):
    report = run_ablations(generate_fixture(50, 200, seed=seed), workdir=tmp_path / f"seed{seed}")
    assert report.all_checks_pass, report.checks
