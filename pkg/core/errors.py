#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
记忆宫殿异常定义

所有领域异常都继承 PalaceError，同时继承对应的内置异常类型，
调用方用 except ValueError / LookupError 也能捕获。
"""

from typing import Optional


class PalaceError(Exception):
    """记忆宫殿异常基类"""

    error_type: str = "palace_error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def to_dict(self) -> dict:
        return {"error_type": self.error_type, "error": self.message}


class InvalidInputError(PalaceError, ValueError):
    """输入不合法（空文本、参数越界等）"""

    error_type = "invalid_input"


class AddressInvalidError(InvalidInputError):
    """宫殿地址不合法，field 指出出错的字段"""

    error_type = "address_invalid"

    def __init__(self, field: str, value: object):
        super().__init__(f"地址字段 {field} 不合法: {value!r}（需匹配 [a-z0-9_]+）")
        self.field = field
        self.value = value

    def to_dict(self) -> dict:
        data = super().to_dict()
        data["field"] = self.field
        return data


class ConfigError(PalaceError, ValueError):
    """palace.yaml 无法解析或取值违反约束"""

    error_type = "config_error"


class NotFoundError(PalaceError, LookupError):
    """宫殿、抽屉或三元组不存在"""

    error_type = "not_found"


class ParseError(InvalidInputError):
    """对话导出文件格式错误，line_number 从 1 开始"""

    error_type = "parse_error"

    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"第 {line_number} 行: {message}"
        super().__init__(message)
        self.line_number = line_number

    def to_dict(self) -> dict:
        data = super().to_dict()
        data["line_number"] = self.line_number
        return data


class EmbeddingError(PalaceError, RuntimeError):
    """外部向量化服务调用失败"""

    error_type = "embedding_error"


class FixtureError(InvalidInputError):
    """评测数据集违反不变量"""

    error_type = "fixture_error"
