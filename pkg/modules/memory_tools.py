#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
记忆工具：recall / remember / forget / rooms / wings / palace_status
"""

from typing import Any, Dict, Optional

from pydantic import Field

from core.palace_store import Palace
from core.searcher import SearchMode, SearchRequest, search_memories
from llm.prompts import PALACE_PROTOCOL
from modules.base_module import BaseToolModule, Identifier, ToolInput


class RecallInput(ToolInput):
    query: str = Field(min_length=1, description="自然语言查询")
    wing: Optional[Identifier] = Field(default=None, description="只在该 wing 内检索")
    room: Optional[Identifier] = Field(default=None, description="只在该 room 内检索")
    n_results: int = Field(default=5, ge=1, le=100, description="最多返回条数")


class RememberInput(ToolInput):
    content: str = Field(min_length=1, description="逐字保存的记忆内容")
    wing: Identifier
    room: Identifier
    hall: Optional[Identifier] = None


class ForgetInput(ToolInput):
    drawer_id: str = Field(min_length=1)


class RoomsInput(ToolInput):
    wing: Optional[Identifier] = None


class EmptyInput(ToolInput):
    pass


class RecallTool(BaseToolModule):
    tool_name = "recall"
    module_name = "记忆检索"
    description = "Hybrid search over verbatim memories, optionally filtered by wing and room."
    input_model = RecallInput

    def prepare_data(self, palace: Palace, params: RecallInput) -> Any:
        request = SearchRequest(
            query=params.query,
            wing=params.wing,
            room=params.room,
            n_results=params.n_results,
            mode=SearchMode.HYBRID,
        )
        return palace, request

    def run(self, data: Any, params: RecallInput) -> Dict[str, Any]:
        palace, request = data
        results = search_memories(palace, request)
        return {"query": params.query, "results": [r.to_dict() for r in results]}

    def summarize(self, results: Dict[str, Any]) -> str:
        return f"找到 {len(results['results'])} 条相关记忆"


class RememberTool(BaseToolModule):
    tool_name = "remember"
    module_name = "写入记忆"
    description = "Store a memory verbatim at wing/room; identical content at the same address is deduplicated."
    input_model = RememberInput

    def prepare_data(self, palace: Palace, params: RememberInput) -> Palace:
        return palace

    def run(self, data: Palace, params: RememberInput) -> Dict[str, Any]:
        drawer_id, deduplicated = data.remember(
            content=params.content, wing=params.wing, room=params.room, hall=params.hall,
        )
        return {"drawer_id": drawer_id, "deduplicated": deduplicated}

    def summarize(self, results: Dict[str, Any]) -> str:
        if results["deduplicated"]:
            return f"记忆已存在: {results['drawer_id']}"
        return f"已写入: {results['drawer_id']}"


class ForgetTool(BaseToolModule):
    tool_name = "forget"
    module_name = "删除记忆"
    description = "Delete a drawer by id. Returns deleted=false when the id is unknown."
    input_model = ForgetInput

    def prepare_data(self, palace: Palace, params: ForgetInput) -> Palace:
        return palace

    def run(self, data: Palace, params: ForgetInput) -> Dict[str, Any]:
        return {"drawer_id": params.drawer_id, "deleted": data.delete_drawer(params.drawer_id)}

    def summarize(self, results: Dict[str, Any]) -> str:
        return "已删除" if results["deleted"] else "抽屉不存在"


class RoomsTool(BaseToolModule):
    tool_name = "rooms"
    module_name = "房间列表"
    description = "List rooms with drawer counts, optionally within one wing."
    input_model = RoomsInput

    def prepare_data(self, palace: Palace, params: RoomsInput) -> Palace:
        return palace

    def run(self, data: Palace, params: RoomsInput) -> Dict[str, Any]:
        return {"rooms": data.list_rooms(params.wing)}

    def summarize(self, results: Dict[str, Any]) -> str:
        return f"共 {len(results['rooms'])} 个房间"


class WingsTool(BaseToolModule):
    tool_name = "wings"
    module_name = "翼列表"
    description = "List wings with drawer counts."
    input_model = EmptyInput

    def prepare_data(self, palace: Palace, params: EmptyInput) -> Palace:
        return palace

    def run(self, data: Palace, params: EmptyInput) -> Dict[str, Any]:
        return {"wings": data.list_wings()}

    def summarize(self, results: Dict[str, Any]) -> str:
        return f"共 {len(results['wings'])} 个 wing"


class PalaceStatusTool(BaseToolModule):
    tool_name = "palace_status"
    module_name = "宫殿状态"
    description = "Palace overview: wing, room and drawer counts plus the palace protocol. Call this first."
    input_model = EmptyInput

    def prepare_data(self, palace: Palace, params: EmptyInput) -> Palace:
        return palace

    def run(self, data: Palace, params: EmptyInput) -> Dict[str, Any]:
        status = data.status()
        status["kg"] = data.kg.stats()
        status["protocol_directive"] = PALACE_PROTOCOL
        return status

    def summarize(self, results: Dict[str, Any]) -> str:
        return (f"{results['wing_count']} 个 wing，{results['room_count']} 个房间，"
                f"{results['drawer_count']} 个抽屉")
