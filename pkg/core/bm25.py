#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
BM25 关键词索引

倒排索引 + Okapi BM25（k1=1.2, b=0.75）。文档为抽屉的索引文本，
按小写 unigram 切词。IDF 取 ln(1 + (N - n + 0.5) / (n + 0.5))，恒为非负。
文档统计量（N、df、平均长度）在每次查询的过滤子集上计算。
"""

import logging
import math
import re
from collections import Counter, defaultdict
from typing import Callable, Dict, Iterable, List, Optional, Tuple

logger = logging.getLogger(__name__)

K1 = 1.2
B = 0.75

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


def tokenize(text: str) -> List[str]:
    return _TOKEN_RE.findall(text.lower())


def idf(n_docs: int, doc_freq: int) -> float:
    return math.log(1.0 + (n_docs - doc_freq + 0.5) / (doc_freq + 0.5))


class BM25Index:
    """增量维护的倒排索引"""

    def __init__(self, k1: float = K1, b: float = B):
        self.k1 = k1
        self.b = b
        self._postings: Dict[str, Dict[str, int]] = defaultdict(dict)
        self._doc_len: Dict[str, int] = {}
        self._doc_terms: Dict[str, List[str]] = {}

    def __len__(self) -> int:
        return len(self._doc_len)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._doc_len

    def add(self, doc_id: str, text: str) -> None:
        if doc_id in self._doc_len:
            return
        counts = Counter(tokenize(text))
        for term, tf in counts.items():
            self._postings[term][doc_id] = tf
        self._doc_len[doc_id] = sum(counts.values())
        self._doc_terms[doc_id] = list(counts)

    def remove(self, doc_id: str) -> bool:
        if doc_id not in self._doc_len:
            return False
        for term in self._doc_terms.pop(doc_id):
            postings = self._postings.get(term)
            if postings is not None:
                postings.pop(doc_id, None)
                if not postings:
                    del self._postings[term]
        del self._doc_len[doc_id]
        return True

    def clear(self) -> None:
        self._postings.clear()
        self._doc_len.clear()
        self._doc_terms.clear()

    def score(self,
              query_terms: Iterable[str],
              doc_id: str,
              allowed: Optional[Callable[[str], bool]] = None) -> float:
        """单个文档的 BM25 得分；文档不存在或无命中词时为 0"""
        if doc_id not in self._doc_len:
            return 0.0
        return self.search(list(query_terms), allowed=allowed, limit=None).get(doc_id, 0.0)

    def search(self,
               query_terms: List[str],
               allowed: Optional[Callable[[str], bool]] = None,
               limit: Optional[int] = None) -> Dict[str, float]:
        """对过滤子集打分，返回得分 > 0 的 {doc_id: score}"""
        if allowed is None:
            doc_ids = list(self._doc_len)
        else:
            doc_ids = [d for d in self._doc_len if allowed(d)]
        n_docs = len(doc_ids)
        if n_docs == 0:
            return {}
        allowed_set = set(doc_ids)
        avgdl = sum(self._doc_len[d] for d in doc_ids) / n_docs or 1.0

        scores: Dict[str, float] = defaultdict(float)
        for term in dict.fromkeys(query_terms):
            postings = self._postings.get(term)
            if not postings:
                continue
            hits = [(d, tf) for d, tf in postings.items() if d in allowed_set]
            if not hits:
                continue
            term_idf = idf(n_docs, len(hits))
            for doc_id, tf in hits:
                norm = self.k1 * (1.0 - self.b + self.b * self._doc_len[doc_id] / avgdl)
                scores[doc_id] += term_idf * tf * (self.k1 + 1.0) / (tf + norm)

        positive = {d: s for d, s in scores.items() if s > 0}
        if limit is not None:
            ranked = rank_scores(positive)[:limit]
            return dict(ranked)
        return positive


def rank_scores(scores: Dict[str, float]) -> List[Tuple[str, float]]:
    """按得分降序、ID 升序排列"""
    return sorted(scores.items(), key=lambda item: (-item[1], item[0]))


def bm25_score(index: BM25Index, query: str, doc_id: str) -> float:
    """query 对单个抽屉的 BM25 得分（全库统计量）"""
    return index.score(tokenize(query), doc_id)
