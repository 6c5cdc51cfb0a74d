#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MCP 服务器 - 通过 stdio 上的 JSON-RPC 2.0 把宫殿暴露给智能体

每行一条消息，串行处理；stdout 只输出协议消息，日志走 stderr。
支持的方法：initialize、ping、tools/list、tools/call 以及 notifications/*。
"""

import json
import logging
import sys
from typing import Any, Dict, Optional, TextIO

from agents.tool_executor import ToolExecutor, get_tool_executor
from core.palace_store import Palace
from llm.prompts import SERVER_INSTRUCTIONS

logger = logging.getLogger(__name__)

PROTOCOL_VERSION = "2024-11-05"
SERVER_NAME = "loci-memory"
SERVER_VERSION = "0.1.0"

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603

# 映射为 -32602 的工具错误类型；其余领域错误作为 isError 结果返回
INVALID_PARAMS_TYPES = {"invalid_params", "invalid_input", "address_invalid", "parse_error"}


class JsonRpcError(Exception):
    def __init__(self, code: int, message: str, data: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.data = data

    def to_dict(self) -> Dict[str, Any]:
        error: Dict[str, Any] = {"code": self.code, "message": self.message}
        if self.data is not None:
            error["data"] = self.data
        return error


def _error_response(request_id: Any, error: JsonRpcError) -> Dict[str, Any]:
    return {"jsonrpc": "2.0", "id": request_id, "error": error.to_dict()}


class MCPServer:
    """单会话 MCP 服务器"""

    def __init__(self, palace: Palace, executor: Optional[ToolExecutor] = None):
        self.palace = palace
        self.executor = executor or get_tool_executor()
        self.initialized = False

    # ------------------------------------------------------------------
    # 消息分发
    # ------------------------------------------------------------------

    def handle_line(self, line: str) -> Optional[Dict[str, Any]]:
        """处理一行输入，返回响应；通知返回 None"""
        try:
            message = json.loads(line)
        except json.JSONDecodeError as e:
            logger.warning(f"无法解析的消息: {e}")
            return _error_response(None, JsonRpcError(PARSE_ERROR, f"Parse error: {e.msg}"))
        return self.handle_message(message)

    def handle_message(self, message: Any) -> Optional[Dict[str, Any]]:
        if not isinstance(message, dict):
            return _error_response(None, JsonRpcError(INVALID_REQUEST, "Invalid Request: expected a JSON object"))

        is_notification = "id" not in message
        request_id = message.get("id")
        try:
            if message.get("jsonrpc") != "2.0":
                raise JsonRpcError(INVALID_REQUEST, "Invalid Request: jsonrpc must be \"2.0\"")
            method = message.get("method")
            if not isinstance(method, str):
                raise JsonRpcError(INVALID_REQUEST, "Invalid Request: method must be a string")
            if request_id is not None and (isinstance(request_id, bool)
                                           or not isinstance(request_id, (str, int))):
                raise JsonRpcError(INVALID_REQUEST, "Invalid Request: id must be a string or integer")
            params = message.get("params", {})
            if params is None:
                params = {}
            if not isinstance(params, dict):
                raise JsonRpcError(INVALID_PARAMS, "params must be an object")
            result = self._dispatch(method, params)
        except JsonRpcError as e:
            if is_notification:
                logger.debug(f"通知处理失败（不回复）: {e.message}")
                return None
            return _error_response(request_id, e)
        except Exception as e:
            logger.error(f"请求处理异常: {e}", exc_info=True)
            if is_notification:
                return None
            return _error_response(request_id, JsonRpcError(INTERNAL_ERROR, f"Internal error: {e}"))

        if is_notification:
            return None
        return {"jsonrpc": "2.0", "id": request_id, "result": result}

    def _dispatch(self, method: str, params: Dict[str, Any]) -> Dict[str, Any]:
        if method == "initialize":
            return self._initialize(params)
        if method.startswith("notifications/"):
            if method == "notifications/initialized":
                self.initialized = True
            return {}
        if method == "ping":
            return {}
        if method == "tools/list":
            return {"tools": self.executor.list_tool_descriptors()}
        if method == "tools/call":
            return self._call_tool(params)
        raise JsonRpcError(METHOD_NOT_FOUND, f"Method not found: {method}")

    # ------------------------------------------------------------------
    # 方法实现
    # ------------------------------------------------------------------

    def _initialize(self, params: Dict[str, Any]) -> Dict[str, Any]:
        client = params.get("clientInfo") or {}
        logger.info(f"客户端握手: {client.get('name', 'unknown')} {client.get('version', '')}".rstrip())
        return {
            "protocolVersion": PROTOCOL_VERSION,
            "capabilities": {"tools": {"listChanged": False}},
            "serverInfo": {"name": SERVER_NAME, "version": SERVER_VERSION},
            "instructions": SERVER_INSTRUCTIONS,
        }

    def _call_tool(self, params: Dict[str, Any]) -> Dict[str, Any]:
        name = params.get("name")
        if not isinstance(name, str) or not name:
            raise JsonRpcError(INVALID_PARAMS, "tools/call requires a tool name")
        arguments = params.get("arguments")
        if arguments is None:
            arguments = {}
        if not isinstance(arguments, dict):
            raise JsonRpcError(INVALID_PARAMS, "arguments must be an object")
        if not self.executor.has_tool(name):
            raise JsonRpcError(METHOD_NOT_FOUND, f"Unknown tool: {name}")

        outcome = self.executor.execute_tool(name, arguments, self.palace)
        if outcome["success"]:
            text = json.dumps(outcome["data"], ensure_ascii=False)
            return {"content": [{"type": "text", "text": text}], "isError": False}

        error_type = outcome["error_type"]
        if error_type in INVALID_PARAMS_TYPES:
            raise JsonRpcError(INVALID_PARAMS, outcome["error"], {"error_type": error_type})
        if error_type == "internal_error":
            raise JsonRpcError(INTERNAL_ERROR, outcome["error"], {"error_type": error_type})
        text = json.dumps({"error": outcome["error"], "error_type": error_type}, ensure_ascii=False)
        return {"content": [{"type": "text", "text": text}], "isError": True}

    # ------------------------------------------------------------------
    # stdio 循环
    # ------------------------------------------------------------------

    def serve(self, stdin: Optional[TextIO] = None, stdout: Optional[TextIO] = None) -> int:
        """读到 EOF 为止，返回处理的消息数"""
        stdin = stdin or sys.stdin
        stdout = stdout or sys.stdout
        handled = 0
        logger.info(f"MCP 服务器启动: {self.palace.path}")
        for line in stdin:
            if not line.strip():
                continue
            handled += 1
            response = self.handle_line(line)
            if response is not None:
                stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
                stdout.flush()
        logger.info(f"输入结束，共处理 {handled} 条消息")
        self.palace.flush()
        return handled


def serve(palace: Palace, stdin: Optional[TextIO] = None, stdout: Optional[TextIO] = None) -> int:
    return MCPServer(palace).serve(stdin, stdout)
