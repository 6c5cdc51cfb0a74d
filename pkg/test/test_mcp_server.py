#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MCP 工具与服务器测试

1. 工具注册表与 execute 的成功/失败字典
2. JSON-RPC 会话脚本
3. 错误码：-32700 / -32601 / -32602
4. stdio 循环
"""

import io
import json
import sys
from pathlib import Path

import pytest

# 添加项目根目录到Python路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from agents.tool_executor import ToolExecutor, get_tool_executor
from core.mcp_server import (INVALID_PARAMS, METHOD_NOT_FOUND, PARSE_ERROR, PROTOCOL_VERSION,
                             MCPServer)
from llm.prompts import PALACE_PROTOCOL
from modules.memory_tools import RecallTool, RememberTool

EXPECTED_TOOLS = [
    "palace_status", "recall", "remember", "forget", "wings", "rooms",
    "kg_add", "kg_query", "diary_append", "diary_read",
]


def _call(server, request_id, name, arguments):
    return server.handle_message({
        "jsonrpc": "2.0", "id": request_id, "method": "tools/call",
        "params": {"name": name, "arguments": arguments},
    })


def _payload(response):
    return json.loads(response["result"]["content"][0]["text"])


def test_executor_lists_registered_tools():
    executor = get_tool_executor()
    assert executor.list_tools() == EXPECTED_TOOLS
    descriptors = executor.list_tool_descriptors()
    assert [d["name"] for d in descriptors] == EXPECTED_TOOLS
    recall = descriptors[1]
    assert "query" in recall["inputSchema"]["properties"]
    assert "query" in recall["inputSchema"]["required"]


def test_executor_unknown_tool(palace):
    result = get_tool_executor().execute_tool("teleport", {}, palace)
    assert result["success"] is False
    assert result["error_type"] == "unknown_tool"


def test_executor_missing_config(tmp_path):
    executor = ToolExecutor(tmp_path / "nothing.json")
    assert executor.list_tools() == []


def test_tool_execute_success_and_errors(palace):
    ok = RememberTool().execute({"content": "The wifi password is on the fridge.",
                                 "wing": "home", "room": "kitchen"}, palace)
    assert ok["success"] is True
    assert ok["module"] == "remember"
    assert ok["data"]["deduplicated"] is False
    assert ok["data"]["drawer_id"].startswith("drawer_home_kitchen_")

    bad = RememberTool().execute({"content": "x", "wing": "Home", "room": "kitchen"}, palace)
    assert bad["success"] is False
    assert bad["error_type"] == "invalid_params"

    extra = RecallTool().execute({"query": "wifi", "colour": "red"}, palace)
    assert extra["error_type"] == "invalid_params"

    found = RecallTool().execute({"query": "wifi password"}, palace)
    assert found["data"]["results"][0]["content"] == "The wifi password is on the fridge."
    assert found["data"]["results"][0]["wing"] == "home"


def test_scripted_session(palace):
    server = MCPServer(palace)
    init = server.handle_message({"jsonrpc": "2.0", "id": 1, "method": "initialize",
                                  "params": {"clientInfo": {"name": "pytest"}}})
    assert init["result"]["protocolVersion"] == PROTOCOL_VERSION
    assert server.handle_message({"jsonrpc": "2.0", "method": "notifications/initialized"}) is None
    assert server.initialized

    tools = server.handle_message({"jsonrpc": "2.0", "id": 2, "method": "tools/list"})
    assert [t["name"] for t in tools["result"]["tools"]] == EXPECTED_TOOLS

    facts = [
        ("We chose Postgres for the ledger service.", "work", "decisions"),
        ("The ledger service deploys on Tuesdays.", "work", "ops"),
        ("Buy oat milk on the way home.", "home", "errands"),
    ]
    ids = []
    for i, (content, wing, room) in enumerate(facts):
        response = _call(server, 10 + i, "remember", {"content": content, "wing": wing, "room": room})
        assert response["result"]["isError"] is False
        ids.append(_payload(response)["drawer_id"])
    again = _payload(_call(server, 13, "remember", {"content": facts[0][0], "wing": "work", "room": "decisions"}))
    assert again == {"drawer_id": ids[0], "deduplicated": True}

    recall = _payload(_call(server, 20, "recall", {"query": "Postgres for the ledger", "wing": "work"}))
    assert recall["results"][0]["drawer_id"] == ids[0]
    assert recall["results"][0]["content"] == facts[0][0]
    assert {r["wing"] for r in recall["results"]} == {"work"}

    status = _payload(_call(server, 21, "palace_status", {}))
    assert status["drawer_count"] == 3
    assert status["wing_count"] == 2
    assert status["protocol_directive"] == PALACE_PROTOCOL

    added = _payload(_call(server, 22, "kg_add", {"subject": "ledger", "predicate": "uses",
                                                  "object": "Postgres", "valid_from": "2024-01-01"}))
    assert added["added"] is True
    queried = _payload(_call(server, 23, "kg_query", {"subject": "ledger", "at_time": "2024-06-01"}))
    assert [(t["predicate"], t["object"]) for t in queried["triples"]] == [("uses", "Postgres")]

    gone = _payload(_call(server, 24, "forget", {"drawer_id": ids[2]}))
    assert gone["deleted"] is True
    missing = _call(server, 25, "forget", {"drawer_id": "drawer_nope"})
    assert missing["result"]["isError"] is False
    assert _payload(missing)["deleted"] is False

    wings = _payload(_call(server, 26, "wings", {}))
    assert wings["wings"] == [{"wing": "work", "drawer_count": 2}]

    entry = _payload(_call(server, 27, "diary_append", {"agent_id": "reviewer", "text": "checked ledger"}))
    assert entry["entry"]["seq"] == 0
    diary = _payload(_call(server, 28, "diary_read", {"agent_id": "reviewer"}))
    assert [e["text"] for e in diary["entries"]] == ["checked ledger"]


def test_parse_error_has_null_id(palace):
    response = MCPServer(palace).handle_line("{not json")
    assert response["id"] is None
    assert response["error"]["code"] == PARSE_ERROR


def test_unknown_method_and_tool(palace):
    server = MCPServer(palace)
    response = server.handle_message({"jsonrpc": "2.0", "id": 1, "method": "resources/list"})
    assert response["error"]["code"] == METHOD_NOT_FOUND
    response = _call(server, 2, "teleport", {})
    assert response["error"]["code"] == METHOD_NOT_FOUND


@pytest.mark.parametrize("name,arguments", [
    ("recall", {}),
    ("recall", {"query": "x", "n_results": 0}),
    ("remember", {"content": "x", "wing": "Bad Wing", "room": "r"}),
    ("remember", {"content": "   ", "wing": "work", "room": "r"}),
    ("kg_query", {}),
    ("kg_add", {"subject": "a", "predicate": "b", "object": "c", "confidence": 2}),
    ("diary_append", {"agent_id": "a", "text": ""}),
])
def test_invalid_arguments_map_to_invalid_params(palace, name, arguments):
    response = _call(MCPServer(palace), 1, name, arguments)
    assert response["error"]["code"] == INVALID_PARAMS
    assert response["id"] == 1


def test_notifications_never_get_a_response(palace):
    server = MCPServer(palace)
    assert server.handle_message({"jsonrpc": "2.0", "method": "notifications/cancelled"}) is None
    assert server.handle_message({"jsonrpc": "2.0", "method": "no_such_method"}) is None


def test_serve_over_stringio(palace):
    lines = [
        json.dumps({"jsonrpc": "2.0", "id": 1, "method": "initialize", "params": {}}),
        json.dumps({"jsonrpc": "2.0", "method": "notifications/initialized"}),
        "",
        json.dumps({"jsonrpc": "2.0", "id": 2, "method": "ping"}),
        "garbage",
    ]
    stdin = io.StringIO("\n".join(lines) + "\n")
    stdout = io.StringIO()
    handled = MCPServer(palace).serve(stdin, stdout)
    assert handled == 4
    responses = [json.loads(line) for line in stdout.getvalue().splitlines()]
    assert [r["id"] for r in responses] == [1, 2, None]
    assert responses[1]["result"] == {}
    assert responses[2]["error"]["code"] == PARSE_ERROR
