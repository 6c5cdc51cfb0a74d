#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
工具模块包
每个 MCP 工具是一个 BaseToolModule 子类，由 tools_config.json 注册
"""

from .base_module import BaseToolModule, Identifier, ToolInput

__all__ = ['BaseToolModule', 'Identifier', 'ToolInput']
__version__ = '0.1.0'
