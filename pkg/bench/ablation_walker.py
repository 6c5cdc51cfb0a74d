#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
消融实验协调器

生成条件网格 {verbatim, aaak} × {scoped, unscoped} × {cosine, l2}，
每个条件在独立的新宫殿目录上执行，保留执行历史，
最后聚合成 pandas 对比表并检查三条方向性结论：
- cosine 与 l2 的 recall_any@5 完全相同（单位向量下排序等价）
- aaak 不高于 verbatim
- wing 过滤不低于不过滤（在 verbatim 条件上比较）
"""

import itertools
import logging
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd

from bench.fixtures import EvalFixture
from bench.harness import (DEFAULT_KS, METRIC_LABEL, AblationCondition, EvalReport,
                           evaluate_condition, mean_compression_ratio, recall_table)
from core.searcher import SearchMode

logger = logging.getLogger(__name__)

INDEX_TEXTS = ("verbatim", "aaak")
SCOPES = (True, False)
METRICS = ("cosine", "l2")
CHECK_K = 5


@dataclass
class ConditionResult:
    """单个条件的执行结果"""
    condition: AblationCondition
    success: bool
    report: Optional[EvalReport]
    execution_time: float
    error_message: Optional[str] = None


@dataclass
class AblationReport:
    table: pd.DataFrame
    checks: Dict[str, bool]
    reports: List[EvalReport]
    mean_compression_ratio: float
    expected_drawers: int
    seed: Optional[int] = None

    @property
    def all_checks_pass(self) -> bool:
        return all(self.checks.values())

    def to_dict(self, include_timings: bool = False) -> Dict[str, Any]:
        return {
            "metric": METRIC_LABEL,
            "seed": self.seed,
            "expected_drawers": self.expected_drawers,
            "mean_compression_ratio": round(self.mean_compression_ratio, 6),
            "conditions": [r.to_dict(include_timings) for r in self.reports],
            "checks": dict(self.checks),
        }

    def to_text(self) -> str:
        lines = [self.table.to_string(index=False, float_format=lambda v: f"{v:.3f}"), ""]
        lines.append(f"mean AAAK compression ratio: {self.mean_compression_ratio:.2f}x")
        for name, passed in self.checks.items():
            lines.append(f"{'PASS' if passed else 'FAIL'}  {name}")
        return "\n".join(lines)


class AblationWalker:
    """消融实验执行器

    负责生成条件、逐个执行并聚合结果
    """

    def __init__(self,
                 fixture: EvalFixture,
                 workdir: Union[str, Path, None] = None,
                 ks: Sequence[int] = DEFAULT_KS,
                 mode: SearchMode = SearchMode.HYBRID,
                 search_backend: str = "exact"):
        self.fixture = fixture
        self.workdir = Path(workdir) if workdir else None
        self.ks = tuple(sorted(set(ks)))
        self.mode = SearchMode(mode)
        self.search_backend = search_backend
        self.execution_history: List[ConditionResult] = []
        if CHECK_K not in self.ks:
            self.ks = tuple(sorted(set(self.ks) | {CHECK_K}))

    def generate_conditions(self) -> List[AblationCondition]:
        return [
            AblationCondition(index_text=text, scoped=scoped, metric=metric)
            for text, scoped, metric in itertools.product(INDEX_TEXTS, SCOPES, METRICS)
        ]

    def execute_condition(self, condition: AblationCondition, base_dir: Path) -> ConditionResult:
        """在 base_dir 下的新目录中执行一个条件"""
        start = time.perf_counter()
        palace_dir = base_dir / condition.name.replace("/", "_")
        try:
            if palace_dir.exists() and any(palace_dir.iterdir()):
                raise FileExistsError(f"条件目录必须是新的: {palace_dir}")
            report = evaluate_condition(
                self.fixture, palace_dir, condition, self.ks, self.mode, self.search_backend,
            )
            result = ConditionResult(condition, True, report, time.perf_counter() - start)
            logger.info(f"条件执行成功: {condition.name} (耗时: {result.execution_time:.2f}s)")
        except Exception as e:
            result = ConditionResult(condition, False, None, time.perf_counter() - start, str(e))
            logger.error(f"条件执行失败: {condition.name} - {e}")
        self.execution_history.append(result)
        return result

    def execute_conditions(self, conditions: List[AblationCondition]) -> List[ConditionResult]:
        if self.workdir is not None:
            self.workdir.mkdir(parents=True, exist_ok=True)
            return [self.execute_condition(c, self.workdir) for c in conditions]
        with tempfile.TemporaryDirectory(prefix="palace_bench_") as tmp:
            return [self.execute_condition(c, Path(tmp)) for c in conditions]

    def aggregate_results(self, results: List[ConditionResult]) -> AblationReport:
        failed = [r for r in results if not r.success]
        if failed:
            raise RuntimeError(
                "消融条件执行失败: " + "; ".join(f"{r.condition.name}: {r.error_message}" for r in failed)
            )
        reports = [r.report for r in results]
        by_condition = {r.condition: r.report.recall_any_at_k[CHECK_K] for r in results}
        expected = self.fixture.distinct_exchange_count()

        checks = {
            "cosine_equals_l2": all(
                by_condition[AblationCondition(t, s, "cosine")] == by_condition[AblationCondition(t, s, "l2")]
                for t in INDEX_TEXTS for s in SCOPES
            ),
            "aaak_le_verbatim": all(
                by_condition[AblationCondition("aaak", s, m)] <= by_condition[AblationCondition("verbatim", s, m)]
                for s in SCOPES for m in METRICS
            ),
            "scoped_ge_unscoped": all(
                by_condition[AblationCondition("verbatim", True, m)]
                >= by_condition[AblationCondition("verbatim", False, m)]
                for m in METRICS
            ),
            # 条件隔离：每座宫殿的抽屉数都等于数据集的交换对数
            "drawer_counts_consistent": all(r.drawer_count == expected for r in reports),
        }
        for name, passed in checks.items():
            if not passed:
                logger.warning(f"方向性检查未通过: {name}")

        return AblationReport(
            table=recall_table(reports),
            checks=checks,
            reports=reports,
            mean_compression_ratio=mean_compression_ratio(self.fixture),
            expected_drawers=expected,
            seed=self.fixture.seed,
        )

    def run(self) -> AblationReport:
        return self.aggregate_results(self.execute_conditions(self.generate_conditions()))

    def get_execution_history(self) -> List[ConditionResult]:
        return self.execution_history.copy()

    def clear_execution_history(self) -> None:
        self.execution_history.clear()
        logger.info("执行历史已清空")


def run_ablations(fixture: EvalFixture,
                  workdir: Union[str, Path, None] = None,
                  mode: SearchMode = SearchMode.HYBRID,
                  search_backend: str = "exact") -> AblationReport:
    return AblationWalker(fixture, workdir=workdir, mode=mode, search_backend=search_backend).run()
