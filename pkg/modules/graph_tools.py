#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
知识图谱工具：kg_add / kg_query
"""

from typing import Any, Dict, Optional

from pydantic import Field, model_validator

from core.knowledge_graph import KnowledgeGraph, Triple
from core.palace_store import Palace
from modules.base_module import BaseToolModule, ToolInput


class KgAddInput(ToolInput):
    subject: str = Field(min_length=1)
    predicate: str = Field(min_length=1)
    object: str = Field(min_length=1)
    valid_from: Optional[str] = Field(default=None, description="ISO-8601，含")
    valid_to: Optional[str] = Field(default=None, description="ISO-8601，不含")
    confidence: float = Field(default=1.0, ge=0.0, le=1.0)
    source_closet: Optional[str] = None
    source_file: Optional[str] = None


class KgQueryInput(ToolInput):
    subject: Optional[str] = Field(default=None, min_length=1)
    predicate: Optional[str] = Field(default=None, min_length=1)
    at_time: Optional[str] = Field(default=None, description="只返回该时刻有效的事实（仅按主语查询时生效）")

    @model_validator(mode="after")
    def _need_subject_or_predicate(self) -> "KgQueryInput":
        if self.subject is None and self.predicate is None:
            raise ValueError("subject 与 predicate 至少提供一个")
        return self


class KgAddTool(BaseToolModule):
    tool_name = "kg_add"
    module_name = "添加事实"
    description = "Add a dated fact (subject, predicate, object) to the knowledge graph; exact duplicates are ignored."
    input_model = KgAddInput

    def prepare_data(self, palace: Palace, params: KgAddInput) -> KnowledgeGraph:
        return palace.kg

    def run(self, data: KnowledgeGraph, params: KgAddInput) -> Dict[str, Any]:
        added, triple = data.add_triple_record(Triple(**params.model_dump()))
        return {"added": added, "triple": triple.to_dict()}

    def summarize(self, results: Dict[str, Any]) -> str:
        t = results["triple"]
        prefix = "已添加" if results["added"] else "已存在"
        return f"{prefix}: {t['subject']} -{t['predicate']}-> {t['object']}"


class KgQueryTool(BaseToolModule):
    tool_name = "kg_query"
    module_name = "查询事实"
    description = "Query facts by subject (optionally valid at a point in time) or by predicate."
    input_model = KgQueryInput

    def prepare_data(self, palace: Palace, params: KgQueryInput) -> KnowledgeGraph:
        return palace.kg

    def run(self, data: KnowledgeGraph, params: KgQueryInput) -> Dict[str, Any]:
        if params.subject is not None:
            triples = data.query_by_subject(params.subject, params.at_time)
            if params.predicate is not None:
                triples = [t for t in triples if t.predicate == params.predicate]
        else:
            triples = data.query_by_predicate(params.predicate)
        return {"triples": [t.to_dict() for t in triples]}

    def summarize(self, results: Dict[str, Any]) -> str:
        return f"共 {len(results['triples'])} 条事实"
