#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
AAAK 压缩方言测试

1. 切句（缩写不断句）
2. 压缩结果的各字段
3. 序列化与解析
4. 长文本压缩后必须更短
"""

import random
import sys
from pathlib import Path

import pytest

# 添加项目根目录到Python路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from core.dialect import (GUARDED_LENGTH, AaakRecord, compress, compression_ratio, key_sentences,
                          parse_aaak, serialize_aaak, split_sentences, summary_line, top_topics)
from core.errors import InvalidInputError, ParseError

SAMPLE = (
    "We decided to move the analytics pipeline to Apache Spark next quarter. "
    "The pipeline currently runs on a single cron host and it keeps failing. "
    "Dr. Chen is worried about the migration deadline. "
    "How will we backfill the old analytics data?"
)


def test_split_sentences_respects_abbreviations():
    text = "Dr. Smith arrived. He said hi! Really? e.g. this one\nnew line"
    assert split_sentences(text) == [
        "Dr. Smith arrived.", "He said hi!", "Really?", "e.g. this one", "new line",
    ]


def test_sentences_are_contiguous_substrings():
    for sentence in split_sentences(SAMPLE):
        assert sentence in SAMPLE


def test_top_topics_and_key_sentences():
    topics = top_topics(SAMPLE)
    assert topics[:2] == ["analytics", "pipeline"]
    assert len(topics) <= 5
    chosen = key_sentences(SAMPLE, limit=2)
    assert len(chosen) == 2
    assert chosen[0] == split_sentences(SAMPLE)[0]


def test_compress_fields():
    record = compress(SAMPLE, source_drawer_id="drawer_x")
    assert record.source_drawer_id == "drawer_x"
    assert "Apache Spark" in record.entities
    assert record.topics[0] == "analytics"
    assert 1 <= len(record.key_sentences) <= 3
    assert "negative" in record.emotions
    assert "urgent" in record.emotions
    assert "decision" in record.flags
    assert "question" in record.flags


def test_compress_is_deterministic():
    assert compress(SAMPLE) == compress(SAMPLE)


def test_compress_rejects_empty():
    with pytest.raises(InvalidInputError):
        compress("   ")


def test_serialize_parse_round_trip_with_escapes():
    record = AaakRecord(
        entities=["A|B", "C,D"],
        topics=["alpha", "beta"],
        key_sentences=['He said "hi", then left|done.', "back\\slash\nnewline"],
        emotions=["positive"],
        flags=["todo", "fact"],
    )
    line = serialize_aaak(record)
    assert "\n" not in line
    assert line.startswith("AAAK|E:")
    assert parse_aaak(line) == record


def test_serialize_empty_record():
    line = serialize_aaak(AaakRecord())
    assert line == "AAAK|E:|T:|K:|M:|F:"
    assert parse_aaak(line) == AaakRecord()


def test_empty_list_entries_are_rejected():
    """列表字段不允许空字符串（序列化后无法区分），空关键句可以往返"""
    with pytest.raises(InvalidInputError):
        AaakRecord(entities=[""])
    with pytest.raises(InvalidInputError):
        AaakRecord(topics=["alpha", ""], flags=["todo"])
    with pytest.raises(ParseError):
        parse_aaak("AAAK|E:a,,b|T:|K:|M:|F:")
    record = AaakRecord(key_sentences=["", "second"])
    assert parse_aaak(serialize_aaak(record)) == record


@pytest.mark.parametrize("line", [
    "NOPE|E:|T:|K:|M:|F:",
    "AAAK|E:|T:|K:|M:",
    "AAAK|E:|T:|K:unquoted|M:|F:",
    "AAAK|E:|E:|T:|K:|M:|F:",
    "AAAK|X:|T:|K:|M:|F:",
])
def test_parse_rejects_malformed_lines(line):
    with pytest.raises(ParseError):
        parse_aaak(line)


def test_long_text_compresses_shorter():
    rng = random.Random(5)
    words = ["server", "deploy", "budget", "meeting", "design", "review", "customer", "latency",
             "Kafka", "Postgres", "queue", "retry", "timeout", "release", "owner", "on-call"]
    for _ in range(50):
        sentences = []
        while sum(len(s) for s in sentences) <= GUARDED_LENGTH + rng.randint(1, 2000):
            n = rng.randint(3, 25)
            sentences.append(" ".join(rng.choice(words) for _ in range(n)).capitalize() + ".")
        text = " ".join(sentences)
        record = compress(text)
        assert len(serialize_aaak(record)) < len(text)
        assert compression_ratio(text, record) > 1.0


def test_pathological_long_text_still_shrinks():
    text = "x" * 900
    record = compress(text)
    assert len(serialize_aaak(record)) < len(text)


def test_summary_line_is_single_bounded_line():
    line = summary_line([SAMPLE, "Another note about the analytics backfill.\nWith a second line."])
    assert "\n" not in line
    assert len(line) <= 200
    assert line.startswith("analytics")
