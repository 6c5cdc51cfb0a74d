#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
AAAK 方言：确定性的抽取式有损摘要

从文本中抽取实体、主题词、关键句、情绪和标记，序列化为单行：
    AAAK|E:a,b|T:x,y|K:"s1"|"s2"|M:positive|F:todo
AAAK 不是无损压缩，无法从它还原原文，本模块也不提供还原操作。
"""

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from sklearn.feature_extraction.text import ENGLISH_STOP_WORDS

from core.errors import InvalidInputError, ParseError
from core.knowledge_graph import extract_entities

logger = logging.getLogger(__name__)

MAX_TOPICS = 5
MAX_KEY_SENTENCES = 3
FIRST_SENTENCE_WEIGHT = 1.5
GUARDED_LENGTH = 400
SUMMARY_MAX_CHARS = 200

HEADER = "AAAK"

STOPWORDS = frozenset(ENGLISH_STOP_WORDS) | {"user", "assistant", "just", "like", "really"}

ABBREVIATIONS = frozenset({
    "e.g", "i.e", "etc", "vs", "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "inc",
})

EMOTION_KEYWORDS: Dict[str, frozenset] = {
    "positive": frozenset({"happy", "glad", "great", "love", "excited", "awesome",
                           "excellent", "pleased", "thanks", "wonderful"}),
    "negative": frozenset({"sad", "angry", "frustrated", "hate", "worried", "annoyed",
                           "upset", "terrible", "disappointed", "afraid"}),
    "neutral": frozenset({"okay", "ok", "fine", "calm", "neutral", "normal"}),
    "urgent": frozenset({"urgent", "asap", "immediately", "critical", "deadline",
                         "emergency", "blocker"}),
}

FLAG_KEYWORDS: Dict[str, frozenset] = {
    "todo": frozenset({"todo", "need", "must", "should", "remember", "fix", "later"}),
    "decision": frozenset({"decided", "decide", "decision", "chose", "choose", "agreed", "settled"}),
    "question": frozenset({"how", "why", "what", "which", "whether"}),
    "fact": frozenset({"fact", "always", "never", "confirmed", "known", "note"}),
}

_BOUNDARY_RE = re.compile(r"[.!?]+(?=\s|$)")
_WORD_RE = re.compile(r"[a-z]+")
_ALL_WORDS_RE = re.compile(r"[a-z0-9']+")


@dataclass
class AaakRecord:
    entities: List[str] = field(default_factory=list)
    topics: List[str] = field(default_factory=list)
    key_sentences: List[str] = field(default_factory=list)
    emotions: List[str] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)
    source_drawer_id: Optional[str] = None

    def __post_init__(self):
        for name in ("entities", "topics", "emotions", "flags"):
            if any(not value for value in getattr(self, name)):
                raise InvalidInputError(f"AAAK 字段 {name} 中不能有空字符串")

    def to_dict(self) -> Dict[str, object]:
        return {
            "entities": list(self.entities),
            "topics": list(self.topics),
            "key_sentences": list(self.key_sentences),
            "emotions": list(self.emotions),
            "flags": list(self.flags),
            "source_drawer_id": self.source_drawer_id,
        }


# ----------------------------------------------------------------------
# 切句与打分
# ----------------------------------------------------------------------

def _is_abbreviation(line: str, end: int) -> bool:
    start = end
    while start > 0 and (line[start - 1].isalpha() or line[start - 1] == "."):
        start -= 1
    word = line[start:end].lower().rstrip(".")
    return word in ABBREVIATIONS


def split_sentences(text: str) -> List[str]:
    """按 . ! ? 后接空白或结尾切句，换行也是句界；每句都是原文的连续子串"""
    sentences: List[str] = []
    for line in text.split("\n"):
        start = 0
        for match in _BOUNDARY_RE.finditer(line):
            if _is_abbreviation(line, match.start()):
                continue
            piece = line[start:match.end()].strip()
            if piece:
                sentences.append(piece)
            start = match.end()
        tail = line[start:].strip()
        if tail:
            sentences.append(tail)
    return sentences


def content_terms(text: str) -> List[str]:
    """小写字母词，长度 >= 3 且不在停用词表中"""
    return [w for w in _WORD_RE.findall(text.lower()) if len(w) >= 3 and w not in STOPWORDS]


def top_topics(text: str, limit: int = MAX_TOPICS) -> List[str]:
    counts = Counter(content_terms(text))
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return [term for term, _ in ranked[:limit]]


def _ranked_sentences(sentences: List[str], tf: Counter) -> List[int]:
    """按 (TF 和 × 位置权重) 降序返回句子下标"""
    scored: List[Tuple[float, int]] = []
    for idx, sentence in enumerate(sentences):
        score = float(sum(tf[t] for t in content_terms(sentence)))
        if idx == 0:
            score *= FIRST_SENTENCE_WEIGHT
        scored.append((-score, idx))
    scored.sort()
    return [idx for _, idx in scored]


def key_sentences(text: str, limit: int = MAX_KEY_SENTENCES) -> List[str]:
    """得分最高的 limit 个句子，按原文顺序返回"""
    sentences = split_sentences(text)
    if not sentences:
        return []
    ranked = _ranked_sentences(sentences, Counter(content_terms(text)))
    chosen = sorted(ranked[:limit])
    return [sentences[i] for i in chosen]


def _match_vocabulary(words: set, vocabulary: Dict[str, frozenset]) -> List[str]:
    return [label for label, keywords in vocabulary.items() if words & keywords]


# ----------------------------------------------------------------------
# 压缩
# ----------------------------------------------------------------------

def compress(content: str,
             source_drawer_id: Optional[str] = None,
             keyword_entities: Sequence[str] = ()) -> AaakRecord:
    """把文本压缩成 AaakRecord（确定性、纯抽取）"""
    if not content or not content.strip():
        raise InvalidInputError("AAAK 压缩的输入不能为空")

    sentences = split_sentences(content)
    tf = Counter(content_terms(content))
    ranked = _ranked_sentences(sentences, tf)[:MAX_KEY_SENTENCES]

    words = set(_ALL_WORDS_RE.findall(content.lower()))
    flags = _match_vocabulary(words, FLAG_KEYWORDS)
    if "?" in content and "question" not in flags:
        flags.append("question")
        flags.sort(key=list(FLAG_KEYWORDS).index)

    record = AaakRecord(
        entities=extract_entities(content, keyword_entities),
        topics=[term for term, _ in sorted(tf.items(), key=lambda item: (-item[1], item[0]))[:MAX_TOPICS]],
        key_sentences=[sentences[i] for i in sorted(ranked)],
        emotions=_match_vocabulary(words, EMOTION_KEYWORDS),
        flags=flags,
        source_drawer_id=source_drawer_id,
    )
    if len(content) > GUARDED_LENGTH:
        _shrink_to_fit(record, ranked, sentences, len(content))
    return record


def _truncate_at_word(sentence: str, max_chars: int) -> str:
    cut = sentence[:max_chars]
    space = cut.rfind(" ")
    if space > 0:
        cut = cut[:space]
    return cut.rstrip()


def _shrink_to_fit(record: AaakRecord, ranked: List[int], sentences: List[str], limit: int) -> None:
    """保证序列化结果严格短于原文"""
    while len(serialize_aaak(record)) >= limit:
        if len(ranked) > 1:
            ranked.pop()
            record.key_sentences = [sentences[i] for i in sorted(ranked)]
        elif record.key_sentences:
            sentence = record.key_sentences[0]
            shorter = _truncate_at_word(sentence, len(sentence) // 2)
            record.key_sentences = [shorter] if shorter and len(shorter) < len(sentence) else []
        elif record.entities:
            record.entities.pop()
        elif record.topics:
            record.topics.pop()
        else:
            record.emotions, record.flags = [], []
            break


def compression_ratio(content: str, rec: AaakRecord) -> float:
    return len(content) / len(serialize_aaak(rec))


def summary_line(texts: Sequence[str], max_chars: int = SUMMARY_MAX_CHARS) -> str:
    """壁橱摘要行："主题词 ...; 首个关键句"，单行且不超过 max_chars"""
    joined = "\n".join(t for t in texts if t)
    topics = " ".join(top_topics(joined))
    sentences = key_sentences(joined, limit=1)
    line = f"{topics}; {sentences[0]}" if sentences else topics
    line = " ".join(line.split())
    if len(line) > max_chars:
        line = _truncate_at_word(line, max_chars) or line[:max_chars]
    return line


# ----------------------------------------------------------------------
# 序列化
# ----------------------------------------------------------------------

def _escape(value: str) -> str:
    return (value.replace("\\", "\\\\")
            .replace("|", "\\|")
            .replace(",", "\\,")
            .replace('"', '\\"')
            .replace("\n", "\\n"))


def _unescape(value: str) -> str:
    out: List[str] = []
    i = 0
    while i < len(value):
        ch = value[i]
        if ch == "\\" and i + 1 < len(value):
            nxt = value[i + 1]
            out.append("\n" if nxt == "n" else nxt)
            i += 2
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def _split_unescaped(value: str, sep: str) -> List[str]:
    parts: List[str] = []
    current: List[str] = []
    i = 0
    while i < len(value):
        ch = value[i]
        if ch == "\\" and i + 1 < len(value):
            current.append(value[i:i + 2])
            i += 2
            continue
        if ch == sep:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
        i += 1
    parts.append("".join(current))
    return parts


def _join_list(values: Sequence[str]) -> str:
    return ",".join(_escape(v) for v in values)


def serialize_aaak(rec: AaakRecord) -> str:
    """单行 AAAK 表示（source_drawer_id 不序列化）"""
    sentences = "|".join(f'"{_escape(s)}"' for s in rec.key_sentences)
    return (
        f"{HEADER}|E:{_join_list(rec.entities)}|T:{_join_list(rec.topics)}"
        f"|K:{sentences}|M:{_join_list(rec.emotions)}|F:{_join_list(rec.flags)}"
    )


def _parse_list(raw: str) -> List[str]:
    if not raw:
        return []
    items = _split_unescaped(raw, ",")
    if not all(items):
        raise ParseError(f"AAAK 列表中有空项: {raw!r}")
    return [_unescape(item) for item in items]


def _parse_sentence(raw: str, line: str) -> str:
    if len(raw) < 2 or not raw.startswith('"') or not raw.endswith('"'):
        raise ParseError(f"AAAK 关键句必须用双引号包围: {raw!r} (in {line!r})")
    return _unescape(raw[1:-1])


def parse_aaak(line: str) -> AaakRecord:
    """serialize_aaak 的逆操作"""
    parts = _split_unescaped(line.rstrip("\n"), "|")
    if not parts or parts[0] != HEADER:
        raise ParseError(f"不是 AAAK 行: {line!r}")

    sections: Dict[str, object] = {}
    current_key: Optional[str] = None
    for part in parts[1:]:
        if part.startswith('"') and current_key == "K":
            sections["K"].append(_parse_sentence(part, line))
            continue
        if len(part) < 2 or part[1] != ":" or part[0] not in "ETKMF":
            raise ParseError(f"无法识别的 AAAK 字段: {part!r}")
        current_key, raw = part[0], part[2:]
        if current_key in sections:
            raise ParseError(f"AAAK 字段重复: {current_key}")
        if current_key == "K":
            sections["K"] = [_parse_sentence(raw, line)] if raw else []
        else:
            sections[current_key] = _parse_list(raw)

    missing = [key for key in "ETKMF" if key not in sections]
    if missing:
        raise ParseError(f"AAAK 行缺少字段: {', '.join(missing)}")
    return AaakRecord(
        entities=sections["E"],
        topics=sections["T"],
        key_sentences=sections["K"],
        emotions=sections["M"],
        flags=sections["F"],
    )
