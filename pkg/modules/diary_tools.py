#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
智能体日记工具：diary_append / diary_read
"""

from typing import Any, Dict

from pydantic import Field

from agents.diary import DiaryStore, get_diary_store
from core.palace_store import Palace
from modules.base_module import BaseToolModule, Identifier, ToolInput


class DiaryAppendInput(ToolInput):
    agent_id: Identifier
    text: str = Field(min_length=1)
    session_id: str = "default"


class DiaryReadInput(ToolInput):
    agent_id: Identifier
    last_n: int = Field(default=10, ge=1, le=1000)


class DiaryAppendTool(BaseToolModule):
    tool_name = "diary_append"
    module_name = "写日记"
    description = "Append a note to your own agent diary."
    input_model = DiaryAppendInput

    def prepare_data(self, palace: Palace, params: DiaryAppendInput) -> DiaryStore:
        return get_diary_store(palace.diary_dir)

    def run(self, data: DiaryStore, params: DiaryAppendInput) -> Dict[str, Any]:
        entry = data.append(params.agent_id, params.session_id, params.text)
        return {"entry": entry.to_dict()}

    def summarize(self, results: Dict[str, Any]) -> str:
        return f"日记第 {results['entry']['seq']} 条已写入"


class DiaryReadTool(BaseToolModule):
    tool_name = "diary_read"
    module_name = "读日记"
    description = "Read the most recent entries of an agent diary, oldest first."
    input_model = DiaryReadInput

    def prepare_data(self, palace: Palace, params: DiaryReadInput) -> DiaryStore:
        return get_diary_store(palace.diary_dir)

    def run(self, data: DiaryStore, params: DiaryReadInput) -> Dict[str, Any]:
        entries = data.read(params.agent_id, params.last_n)
        return {"agent_id": params.agent_id, "entries": [e.to_dict() for e in entries]}

    def summarize(self, results: Dict[str, Any]) -> str:
        return f"{results['agent_id']} 共 {len(results['entries'])} 条日记"
