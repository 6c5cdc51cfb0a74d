#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
外部向量化服务测试

用 httpx.MockTransport 模拟 POST /embed，不访问网络。
"""

import json
import sys
from pathlib import Path

import httpx
import numpy as np
import pytest

# 添加项目根目录到Python路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.errors import EmbeddingError, InvalidInputError
from llm.embedder import HttpEmbeddingProvider, embed_text, embed_texts, get_embedder, reset_embedders


def _provider(handler, dim=3):
    return HttpEmbeddingProvider(dim, "http://embedder.local", transport=httpx.MockTransport(handler))


def test_http_provider_posts_texts_and_normalizes():
    seen = []

    def handler(request):
        seen.append((str(request.url), json.loads(request.content)))
        texts = json.loads(request.content)["texts"]
        return httpx.Response(200, json={"vectors": [[3.0, 4.0, 0.0] for _ in texts]})

    provider = _provider(handler)
    matrix = embed_texts(provider, ["first text", "second text"])
    assert seen == [("http://embedder.local/embed", {"texts": ["first text", "second text"]})]
    assert matrix.shape == (2, 3)
    assert np.allclose(matrix[0], [0.6, 0.8, 0.0])
    assert not provider.deterministic
    provider.close()


def test_http_provider_dimension_mismatch():
    provider = _provider(lambda request: httpx.Response(200, json={"vectors": [[1.0, 0.0]]}))
    with pytest.raises(EmbeddingError):
        embed_text(provider, "hello")


def test_http_provider_vector_count_mismatch():
    provider = _provider(lambda request: httpx.Response(200, json={"vectors": []}))
    with pytest.raises(EmbeddingError):
        embed_text(provider, "hello")


def test_http_provider_connection_error():
    def handler(request):
        raise httpx.ConnectError("connection refused", request=request)

    with pytest.raises(EmbeddingError):
        embed_text(_provider(handler), "hello")


def test_http_provider_error_status_and_bad_json():
    with pytest.raises(EmbeddingError):
        embed_text(_provider(lambda request: httpx.Response(500, text="boom")), "hello")
    with pytest.raises(EmbeddingError):
        embed_text(_provider(lambda request: httpx.Response(200, text="not json")), "hello")


def test_get_embedder_http_branch():
    with pytest.raises(InvalidInputError):
        get_embedder("http", 8)
    with pytest.raises(InvalidInputError):
        get_embedder("onnx", 8)

    provider = get_embedder("http", 8, url="http://embedder.local/")
    assert isinstance(provider, HttpEmbeddingProvider)
    assert provider.url == "http://embedder.local/embed"
    assert get_embedder("http", 8, url="http://embedder.local/") is provider
    reset_embedders()
    assert get_embedder("http", 8, url="http://embedder.local/") is not provider
