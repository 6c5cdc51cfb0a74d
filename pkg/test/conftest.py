#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
测试公共夹具

- 把项目根目录加入 sys.path
- 每个用例结束后清空全局缓存（宫殿、日记、工具执行器、向量化客户端）
"""

import sys
from pathlib import Path

import pytest

# 添加项目根目录到Python路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from agents.diary import reset_diary_stores
from agents.tool_executor import reset_tool_executor
from core.palace_store import Palace, reset_palaces
from llm.embedder import reset_embedders


@pytest.fixture(autouse=True)
def _reset_global_caches():
    yield
    reset_palaces()
    reset_diary_stores()
    reset_tool_executor()
    reset_embedders()


@pytest.fixture
def palace(tmp_path):
    """精确检索后端的空宫殿"""
    p = Palace.init(tmp_path / "palace", search_backend="exact")
    yield p
    p.close()


@pytest.fixture
def hnsw_palace(tmp_path):
    p = Palace.init(tmp_path / "palace_hnsw")
    yield p
    p.close()
