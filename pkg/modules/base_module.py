#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
基础工具模块类
所有 MCP 工具都要继承这个类，保证接口一致

执行流程固定为三步：prepare_data -> run -> summarize，
execute() 负责参数校验和错误包装，永远不抛异常。
"""

from abc import ABC, abstractmethod
from datetime import datetime
from typing import Annotated, Any, Dict, Optional, Type

import logging
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, StringConstraints, ValidationError

from core.errors import PalaceError

logger = logging.getLogger(__name__)

# 宫殿地址段与智能体 ID 的统一格式
Identifier = Annotated[str, StringConstraints(pattern=r"^[a-z0-9_]+$")]


class ToolInput(BaseModel):
    """工具参数模型基类，多余字段直接拒绝"""

    model_config = ConfigDict(extra="forbid")


class BaseToolModule(ABC):
    """工具模块基类

    子类需要声明 tool_name / description / input_model，
    并实现 prepare_data、run、summarize 三个方法。
    """

    tool_name: str = "base_tool"
    module_name: str = "基础工具模块"
    description: str = "工具模块基类"
    input_model: Type[ToolInput] = ToolInput

    def validate_parameters(self, parameters: Optional[Dict[str, Any]]) -> ToolInput:
        """按 input_model 校验参数，失败时抛 pydantic.ValidationError"""
        return self.input_model.model_validate(parameters or {})

    @abstractmethod
    def prepare_data(self, palace: Any, params: ToolInput) -> Any:
        """准备执行所需的数据（通常是宫殿句柄或派生对象）"""

    @abstractmethod
    def run(self, data: Any, params: ToolInput) -> Dict[str, Any]:
        """执行工具逻辑，返回可序列化的结果"""

    @abstractmethod
    def summarize(self, results: Dict[str, Any]) -> str:
        """一句话总结结果"""

    def execute(self, parameters: Optional[Dict[str, Any]], palace: Any) -> Dict[str, Any]:
        """标准执行流程

        Returns:
            {"success", "module", "parameters", "data", "summary", "timestamp"}，
            失败时由 _handle_error 生成 {"success": False, "error", "error_type", ...}
        """
        try:
            params = self.validate_parameters(parameters)
            data = self.prepare_data(palace, params)
            results = self.run(data, params)
            summary = self.summarize(results)
            return {
                "success": True,
                "module": self.tool_name,
                "parameters": parameters or {},
                "data": self._convert_to_serializable(results),
                "summary": summary,
                "timestamp": datetime.now().isoformat(),
            }
        except Exception as e:
            return self._handle_error(e, parameters)

    def _handle_error(self, error: Exception, parameters: Optional[Dict[str, Any]]) -> Dict[str, Any]:
        if isinstance(error, ValidationError):
            error_type = "invalid_params"
            message = f"参数校验失败: {error.error_count()} 处错误; " + "; ".join(
                f"{'.'.join(str(p) for p in item['loc']) or '<root>'}: {item['msg']}"
                for item in error.errors(include_url=False)
            )
            logger.warning(f"工具 {self.tool_name} {message}")
        elif isinstance(error, PalaceError):
            error_type = error.error_type
            message = error.message
            logger.warning(f"工具 {self.tool_name} 执行失败 ({error_type}): {message}")
        else:
            error_type = "internal_error"
            message = f"{type(error).__name__}: {error}"
            logger.error(f"工具 {self.tool_name} 内部错误: {message}", exc_info=True)
        return {
            "success": False,
            "error": message,
            "error_type": error_type,
            "module": self.tool_name,
            "parameters": parameters or {},
            "timestamp": datetime.now().isoformat(),
        }

    def input_schema(self) -> Dict[str, Any]:
        return self.input_model.model_json_schema()

    def get_tool_descriptor(self) -> Dict[str, Any]:
        """tools/list 中的一项"""
        return {
            "name": self.tool_name,
            "description": self.description,
            "inputSchema": self.input_schema(),
        }

    def get_module_info(self) -> Dict[str, Any]:
        return {
            "tool_name": self.tool_name,
            "module_name": self.module_name,
            "description": self.description,
            "input_schema": self.input_schema(),
        }

    def _convert_to_serializable(self, obj: Any) -> Any:
        """把 numpy / pandas / dataclass 对象转成 JSON 可序列化的结构"""
        if isinstance(obj, dict):
            return {str(k): self._convert_to_serializable(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [self._convert_to_serializable(item) for item in obj]
        if isinstance(obj, pd.DataFrame):
            return self._convert_to_serializable(obj.to_dict("records"))
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, np.generic):
            return obj.item()
        if hasattr(obj, "to_dict") and callable(obj.to_dict):
            return self._convert_to_serializable(obj.to_dict())
        return obj
