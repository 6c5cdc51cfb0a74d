#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
recall_any@k 评测

流程：为每个条件新建一座宫殿 -> 逐会话按交换对挖掘并写入 -> 对每个问题检索一次，
取前 k 条结果的 session_id，只要有一个落在答案会话里就记 1 分。
recall_any 是最宽松的召回定义，报告里会注明。
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from bench.fixtures import EvalFixture, validate_fixture
from core.dialect import compress, compression_ratio
from core.errors import InvalidInputError
from core.palace import CONFIG_FILENAME, PalaceAddress
from core.palace_store import Palace
from core.searcher import SearchMode, SearchRequest, search_memories
from prepare.convo_miner import drawers_from_exchanges

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 5, 10)
METRIC_LABEL = "recall_any (most generous recall variant)"


@dataclass(frozen=True)
class AblationCondition:
    """一个评测条件：索引文本 × 是否按 wing 过滤 × 距离度量"""
    index_text: str = "verbatim"
    scoped: bool = False
    metric: str = "cosine"

    @property
    def name(self) -> str:
        return f"{self.index_text}/{'scoped' if self.scoped else 'unscoped'}/{self.metric}"

    def palace_overrides(self, search_backend: str) -> Dict[str, Any]:
        return {
            "index_text": self.index_text,
            "distance_metric": self.metric,
            "search_backend": search_backend,
            "extract_entities": False,
        }


@dataclass
class EvalReport:
    condition: str
    recall_any_at_k: Dict[int, float]
    n_questions: int
    drawer_count: int
    mode: str = SearchMode.HYBRID.value
    runtime_ms: int = 0
    per_question_hits: Dict[str, int] = field(default_factory=dict)

    def to_dict(self, include_timings: bool = False) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "condition": self.condition,
            "metric": METRIC_LABEL,
            "mode": self.mode,
            "n_questions": self.n_questions,
            "drawer_count": self.drawer_count,
            "recall_any_at_k": {str(k): v for k, v in sorted(self.recall_any_at_k.items())},
        }
        if include_timings:
            data["runtime_ms"] = self.runtime_ms
        return data


def ingest_fixture(fixture: EvalFixture,
                   palace: Union[Palace, str, Path],
                   condition: AblationCondition = AblationCondition(),
                   search_backend: str = "exact") -> Palace:
    """把数据集的所有会话写入宫殿；传入路径时按条件配置新建，路径上已有宫殿则报错"""
    validate_fixture(fixture)
    if not isinstance(palace, Palace):
        if (Path(palace) / CONFIG_FILENAME).exists():
            raise InvalidInputError(f"评测目录已存在宫殿，不会复用旧配置: {palace}")
        palace = Palace.init(palace, **condition.palace_overrides(search_backend))

    drawers = []
    for session in fixture.sessions:
        drawers.extend(drawers_from_exchanges(
            session.exchanges,
            address=PalaceAddress(wing=session.wing, room=session.room),
            source_file=f"fixture:{session.session_id}",
        ))
    result = palace.add_drawers(drawers)
    palace.flush()
    logger.info(f"[{condition.name}] 写入 {len(result.added)} 个抽屉，去重 {len(result.deduplicated)}")
    return palace


def _question_hits(palace: Palace, query: str, wing: Any, answers: Sequence[str],
                   ks: Sequence[int], mode: SearchMode) -> Dict[int, int]:
    request = SearchRequest(query=query, wing=wing, n_results=max(ks), mode=mode)
    sessions = [r.session_id for r in search_memories(palace, request)]
    answer_set = set(answers)
    return {k: int(any(s in answer_set for s in sessions[:k])) for k in ks}


def score_recall_any(palace: Palace,
                     fixture: EvalFixture,
                     ks: Sequence[int] = DEFAULT_KS,
                     scoped: bool = False,
                     mode: SearchMode = SearchMode.HYBRID,
                     condition: str = "",
                     max_workers: int = 4) -> EvalReport:
    """对每个问题检索一次（取 max(ks) 条），计算各 k 下的 recall_any"""
    ks = sorted(set(ks))
    if not ks or any(isinstance(k, bool) or not isinstance(k, int) or k < 1 for k in ks):
        raise InvalidInputError(f"k 必须是正整数: {list(ks)}")
    mode = SearchMode(mode)
    start = time.perf_counter()

    def score_one(question) -> Dict[int, int]:
        wing = question.wing_hint if scoped else None
        return _question_hits(palace, question.query_text, wing, question.answer_session_ids, ks, mode)

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        hits = list(executor.map(score_one, fixture.questions))

    n = len(fixture.questions)
    recall = {k: (float(np.mean([h[k] for h in hits])) if n else 0.0) for k in ks}
    report = EvalReport(
        condition=condition,
        recall_any_at_k=recall,
        n_questions=n,
        drawer_count=palace.drawer_count(),
        mode=mode.value,
        runtime_ms=int((time.perf_counter() - start) * 1000),
        per_question_hits={q.question_id: h[max(ks)] for q, h in zip(fixture.questions, hits)},
    )
    logger.info(f"[{condition or '-'}] " + ", ".join(f"R@{k}={v:.3f}" for k, v in recall.items()))
    return report


def mean_compression_ratio(fixture: EvalFixture) -> float:
    """数据集中全部交换对文本的平均 AAAK 压缩比"""
    ratios = []
    for session in fixture.sessions:
        for exchange in session.exchanges:
            text = exchange.render()
            ratios.append(compression_ratio(text, compress(text)))
    return float(np.mean(ratios)) if ratios else 0.0


def evaluate_condition(fixture: EvalFixture,
                       palace_dir: Union[str, Path],
                       condition: AblationCondition,
                       ks: Sequence[int] = DEFAULT_KS,
                       mode: SearchMode = SearchMode.HYBRID,
                       search_backend: str = "exact") -> EvalReport:
    """新建宫殿 -> 写入 -> 评分 -> 关闭"""
    start = time.perf_counter()
    palace = ingest_fixture(fixture, palace_dir, condition, search_backend)
    try:
        report = score_recall_any(palace, fixture, ks, condition.scoped, mode, condition.name)
    finally:
        palace.close()
    report.runtime_ms = int((time.perf_counter() - start) * 1000)
    return report


def recall_table(reports: List[EvalReport]) -> pd.DataFrame:
    """EvalReport 列表 -> pandas 对比表"""
    rows = []
    for report in reports:
        row: Dict[str, Any] = {"condition": report.condition, "drawers": report.drawer_count}
        for k, value in sorted(report.recall_any_at_k.items()):
            row[f"R@{k}"] = value
        rows.append(row)
    return pd.DataFrame(rows)
