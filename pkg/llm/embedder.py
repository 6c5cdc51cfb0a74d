#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
向量化客户端模块 - 封装文本向量化逻辑

内置 HashEmbeddingProvider：词 unigram + 字符 trigram 的带符号特征哈希
（scikit-learn HashingVectorizer），完全离线、结果确定；
可选 HttpEmbeddingProvider：调用本地 HTTP 服务 POST /embed。
"""

import logging
from abc import ABC, abstractmethod
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import httpx
import numpy as np
from sklearn.feature_extraction.text import HashingVectorizer

from core.errors import EmbeddingError, InvalidInputError

logger = logging.getLogger(__name__)

# 单位化后的定长实数向量
EmbeddingVector = np.ndarray

NORM_TOLERANCE = 1e-6


class EmbeddingProvider(ABC):
    """向量化服务基类"""

    name: str = "base"
    deterministic: bool = True

    def __init__(self, dim: int):
        if dim <= 0:
            raise InvalidInputError(f"向量维度必须为正整数，当前为 {dim}")
        self.dim = dim

    @abstractmethod
    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        """返回形状为 (len(texts), dim) 的原始向量矩阵（未必单位化）"""
        raise NotImplementedError("子类必须实现embed_batch方法")

    def get_provider_info(self) -> Dict[str, object]:
        return {"name": self.name, "dim": self.dim, "deterministic": self.deterministic}


@lru_cache(maxsize=8)
def _hashing_vectorizers(dim: int) -> Tuple[HashingVectorizer, HashingVectorizer]:
    words = HashingVectorizer(
        n_features=dim,
        analyzer="word",
        token_pattern=r"(?u)\b\w+\b",
        lowercase=True,
        alternate_sign=True,
        norm=None,
        dtype=np.float64,
    )
    trigrams = HashingVectorizer(
        n_features=dim,
        analyzer="char_wb",
        ngram_range=(3, 3),
        lowercase=True,
        alternate_sign=True,
        norm=None,
        dtype=np.float64,
    )
    return words, trigrams


def _hash_features(texts: Sequence[str], dim: int) -> np.ndarray:
    words, trigrams = _hashing_vectorizers(dim)
    features = words.transform(texts) + trigrams.transform(texts)
    return np.asarray(features.toarray(), dtype=np.float64)


def _unit_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    # 哈希完全抵消的极端文本落到固定的基向量上
    zero_rows = (norms == 0).ravel()
    if np.any(zero_rows):
        matrix = matrix.copy()
        matrix[zero_rows, 0] = 1.0
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return matrix / norms


def builtin_hash_embed(text: str, dim: int = 384) -> EmbeddingVector:
    """内置哈希向量化，(text, dim) 的纯函数"""
    if dim <= 0:
        raise InvalidInputError(f"向量维度必须为正整数，当前为 {dim}")
    return _unit_rows(_hash_features([text], dim))[0]


class HashEmbeddingProvider(EmbeddingProvider):
    """内置特征哈希向量化"""

    name = "builtin"
    deterministic = True

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        return _hash_features(list(texts), self.dim)


class HttpEmbeddingProvider(EmbeddingProvider):
    """外部向量化服务：POST {url}/embed {"texts": [...]} -> {"vectors": [[...]]}"""

    name = "http"
    deterministic = False

    def __init__(self,
                 dim: int,
                 url: str,
                 timeout: float = 30.0,
                 transport: Optional[httpx.BaseTransport] = None):
        super().__init__(dim)
        self.url = url.rstrip("/")
        if not self.url.endswith("/embed"):
            self.url = f"{self.url}/embed"
        self.timeout = timeout
        self._http = httpx.Client(timeout=timeout, transport=transport)
        logger.info(f"外部向量化服务: {self.url}，维度: {dim}")

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        try:
            response = self._http.post(self.url, json={"texts": list(texts)})
            response.raise_for_status()
            body = response.json()
        except httpx.HTTPError as e:
            logger.error(f"向量化服务调用失败: {e}")
            raise EmbeddingError(f"向量化服务调用失败: {e}")
        except ValueError as e:
            raise EmbeddingError(f"向量化服务返回的不是合法 JSON: {e}")

        vectors = body.get("vectors") if isinstance(body, dict) else None
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise EmbeddingError("向量化服务返回的 vectors 数量与输入不一致")
        try:
            matrix = np.asarray(vectors, dtype=np.float64)
        except (TypeError, ValueError) as e:
            raise EmbeddingError(f"向量化服务返回了无法解析的向量: {e}")
        if matrix.ndim != 2 or matrix.shape[1] != self.dim:
            raise EmbeddingError(
                f"向量维度不匹配: 期望 {self.dim}，实际 {matrix.shape[-1] if matrix.ndim else 0}"
            )
        return matrix

    def close(self) -> None:
        self._http.close()


def embed_texts(provider: EmbeddingProvider, texts: Sequence[str]) -> np.ndarray:
    """批量向量化并单位化，每行都是一个 EmbeddingVector"""
    texts = list(texts)
    for text in texts:
        if not isinstance(text, str) or not text.strip():
            raise InvalidInputError("待向量化的文本不能为空")
    if not texts:
        return np.zeros((0, provider.dim), dtype=np.float64)
    matrix = provider.embed_batch(texts)
    if matrix.shape != (len(texts), provider.dim):
        raise EmbeddingError(f"向量化结果形状错误: {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise EmbeddingError("向量化结果中存在非有限值")
    return _unit_rows(matrix)


def embed_text(provider: EmbeddingProvider, text: str) -> EmbeddingVector:
    """向量化单条文本，返回单位向量"""
    return embed_texts(provider, [text])[0]


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise InvalidInputError(f"向量维度不一致: {a.shape} vs {b.shape}")


def cosine_distance(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """1 - a·b / (‖a‖‖b‖)，取值 [0, 2]"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_pair(a, b)
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise InvalidInputError("零向量没有余弦距离")
    similarity = float(a @ b) / (norm_a * norm_b)
    return float(min(2.0, max(0.0, 1.0 - similarity)))


def l2_distance(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """欧氏距离"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_pair(a, b)
    return float(np.linalg.norm(a - b))


# 全局向量化客户端缓存
_global_embedders: Dict[Tuple[str, int, Optional[str]], EmbeddingProvider] = {}


def get_embedder(name: str = "builtin",
                 dim: int = 384,
                 url: Optional[str] = None,
                 timeout: float = 30.0) -> EmbeddingProvider:
    """获取向量化客户端实例（按配置缓存）"""
    key = (name, dim, url)
    if key not in _global_embedders:
        if name == "builtin":
            _global_embedders[key] = HashEmbeddingProvider(dim)
        elif name == "http":
            if not url:
                raise InvalidInputError("http 向量化服务需要 url")
            _global_embedders[key] = HttpEmbeddingProvider(dim, url, timeout)
        else:
            raise InvalidInputError(f"不支持的向量化服务: {name}")
        logger.info(f"向量化客户端初始化成功: {name} (dim={dim})")
    return _global_embedders[key]


def reset_embedders():
    """重置全局向量化客户端缓存"""
    for provider in _global_embedders.values():
        if isinstance(provider, HttpEmbeddingProvider):
            provider.close()
    _global_embedders.clear()
