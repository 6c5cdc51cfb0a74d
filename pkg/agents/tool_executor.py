#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
工具执行器 - 负责加载和执行 MCP 工具模块

工具清单来自 modules/tools_config.json，按需 importlib 导入并缓存实例。
"""

import importlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from modules.base_module import BaseToolModule

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = Path(__file__).parent.parent / "modules" / "tools_config.json"


class ToolExecutor:
    """工具执行器

    负责读取注册表、实例化工具并执行
    """

    def __init__(self, config_path: Union[str, Path, None] = None):
        self.config_path = Path(config_path) if config_path else DEFAULT_CONFIG
        self.tool_configs: Dict[str, Dict[str, Any]] = {}
        self.tool_instances: Dict[str, BaseToolModule] = {}
        self._load_config()

    def _load_config(self) -> None:
        try:
            with open(self.config_path, "r", encoding="utf-8") as f:
                config = json.load(f)
        except FileNotFoundError:
            logger.error(f"工具配置文件不存在: {self.config_path}")
            return
        except json.JSONDecodeError as e:
            logger.error(f"工具配置文件格式错误: {self.config_path}: {e}")
            return

        for tool_config in config.get("modules", []):
            tool_id = tool_config.get("module_id")
            if not tool_id:
                logger.warning(f"工具配置缺少 module_id，已跳过: {tool_config}")
                continue
            if tool_id in self.tool_configs:
                logger.warning(f"工具 {tool_id} 重复注册，保留第一个")
                continue
            self.tool_configs[tool_id] = tool_config
        logger.info(f"工具注册表加载完成: {len(self.tool_configs)} 个工具")

    def _load_tool(self, tool_config: Dict[str, Any]) -> Optional[BaseToolModule]:
        file_path = tool_config.get("file_path", "")
        class_name = tool_config.get("class_name", "")
        if not file_path or not class_name:
            logger.error(f"工具配置不完整: {tool_config}")
            return None

        # modules/memory_tools.py -> modules.memory_tools
        module_path = file_path.replace("\\", "/").removesuffix(".py").replace("/", ".")
        try:
            module = importlib.import_module(module_path)
        except ImportError as e:
            logger.error(f"导入工具模块失败 {module_path}: {e}")
            return None

        tool_class = getattr(module, class_name, None)
        if tool_class is None:
            logger.error(f"模块 {module_path} 中未找到类 {class_name}")
            return None
        instance = tool_class()
        if instance.tool_name != tool_config["module_id"]:
            logger.error(f"工具名不一致: 注册为 {tool_config['module_id']}，类声明为 {instance.tool_name}")
            return None
        return instance

    def get_tool(self, tool_id: str) -> Optional[BaseToolModule]:
        """取工具实例，未注册或加载失败时返回 None"""
        if tool_id in self.tool_instances:
            return self.tool_instances[tool_id]
        tool_config = self.tool_configs.get(tool_id)
        if tool_config is None:
            return None
        instance = self._load_tool(tool_config)
        if instance is not None:
            self.tool_instances[tool_id] = instance
            logger.debug(f"成功加载工具: {tool_id}")
        return instance

    def has_tool(self, tool_id: str) -> bool:
        return self.get_tool(tool_id) is not None

    def list_tools(self) -> List[str]:
        return [tool_id for tool_id in self.tool_configs if self.get_tool(tool_id) is not None]

    def list_tool_descriptors(self) -> List[Dict[str, Any]]:
        """tools/list 返回的描述列表，顺序同注册表"""
        return [self.get_tool(tool_id).get_tool_descriptor() for tool_id in self.list_tools()]

    def execute_tool(self, tool_id: str, parameters: Optional[Dict[str, Any]], palace: Any) -> Dict[str, Any]:
        """执行工具；未知工具返回 error_type=unknown_tool"""
        tool = self.get_tool(tool_id)
        if tool is None:
            return {
                "success": False,
                "error": f"未知工具: {tool_id}",
                "error_type": "unknown_tool",
                "module": tool_id,
                "parameters": parameters or {},
            }
        result = tool.execute(parameters, palace)
        if result["success"]:
            logger.info(f"工具执行成功: {tool_id}")
        else:
            logger.info(f"工具执行失败: {tool_id} ({result['error_type']})")
        return result


# 全局工具执行器实例
_global_executor: Optional[ToolExecutor] = None


def get_tool_executor() -> ToolExecutor:
    """获取全局工具执行器实例"""
    global _global_executor
    if _global_executor is None:
        _global_executor = ToolExecutor()
    return _global_executor


def reset_tool_executor() -> None:
    """重置全局工具执行器实例"""
    global _global_executor
    _global_executor = None
