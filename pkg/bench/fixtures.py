#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
评测数据集

合成的“唯一关键短语”数据集：每个问题的答案会话里埋一个由种子生成的伪词短语，
干扰会话共用同一套词表但不含任何关键短语；wing 按轮转分配。
同一组参数和种子生成的数据集逐字节相同。
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Union

import numpy as np

from core.errors import FixtureError, InvalidInputError, NotFoundError
from prepare.convo_miner import Exchange

logger = logging.getLogger(__name__)

EXCHANGES_PER_SESSION = 3
WINGS = ("work", "family", "health", "travel")
ROOMS = ("planning", "chat", "notes")

# 查询框架词不出现在任何会话里，BM25 只会命中关键短语
QUERY_TEMPLATE = "which session mentioned {keyphrase}"

VOCABULARY = (
    "garden", "coffee", "budget", "meeting", "project", "weather", "dinner", "ticket",
    "report", "doctor", "window", "kitchen", "music", "movie", "book", "letter",
    "market", "river", "mountain", "morning", "evening", "weekend", "holiday", "friend",
    "neighbor", "office", "printer", "laptop", "battery", "recipe", "bread", "cheese",
    "apple", "orange", "lemon", "paint", "color", "chair", "table", "lamp",
    "carpet", "bicycle", "train", "airport", "hotel", "museum", "concert", "guitar",
    "piano", "school", "lesson", "homework", "teacher", "student", "camera", "photo",
    "album", "bakery", "forest", "beach", "sandwich", "jacket", "umbrella", "bridge",
)

USER_TEMPLATES = (
    "Can you help me plan the {0} and the {1} for the {2}?",
    "I keep thinking about the {0} near the {1}, any ideas about the {2}?",
    "Do you remember what we said about the {0}, the {1} and the {2}?",
    "Please draft a note on the {0}; also the {1} and the {2}.",
)
ASSISTANT_TEMPLATES = (
    "Sure. Start with the {0}, then sort out the {1} and keep the {2} simple.",
    "Good idea. The {0} matters most, the {1} can wait, and the {2} is fine.",
    "Here is a short plan: {0} first, {1} next, {2} last.",
)
ANSWER_USER_TEMPLATE = "Let me tell you about {keyphrase} and the {0}, it matters for the {1}."
ANSWER_ASSISTANT_TEMPLATE = "Understood, I will keep {keyphrase} in mind along with the {0}."

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


@dataclass
class FixtureQuestion:
    question_id: str
    query_text: str
    answer_session_ids: List[str]
    wing_hint: Optional[str] = None
    keyphrase: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "question_id": self.question_id,
            "query_text": self.query_text,
            "answer_session_ids": list(self.answer_session_ids),
            "wing_hint": self.wing_hint,
            "keyphrase": self.keyphrase,
        }


@dataclass
class FixtureSession:
    session_id: str
    wing: str
    room: str
    exchanges: List[Exchange] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "session_id": self.session_id,
            "wing": self.wing,
            "room": self.room,
            "exchanges": [
                {"user_turn": e.user_turn, "assistant_turn": e.assistant_turn, "timestamp": e.timestamp}
                for e in self.exchanges
            ],
        }


@dataclass
class EvalFixture:
    questions: List[FixtureQuestion]
    sessions: List[FixtureSession]
    seed: Optional[int] = None

    def session_map(self) -> Dict[str, FixtureSession]:
        return {s.session_id: s for s in self.sessions}

    def exchange_count(self) -> int:
        return sum(len(s.exchanges) for s in self.sessions)

    def distinct_exchange_count(self) -> int:
        """同一 wing/room 下内容相同的交换对只算一次，与抽屉去重口径一致"""
        return len({(s.wing, s.room, e.render()) for s in self.sessions for e in s.exchanges})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "questions": [q.to_dict() for q in self.questions],
            "sessions": [s.to_dict() for s in self.sessions],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvalFixture":
        try:
            questions = [
                FixtureQuestion(
                    question_id=q["question_id"],
                    query_text=q["query_text"],
                    answer_session_ids=list(q["answer_session_ids"]),
                    wing_hint=q.get("wing_hint"),
                    keyphrase=q.get("keyphrase"),
                )
                for q in data["questions"]
            ]
            sessions = [
                FixtureSession(
                    session_id=s["session_id"],
                    wing=s["wing"],
                    room=s["room"],
                    exchanges=[
                        Exchange(
                            user_turn=e["user_turn"],
                            assistant_turn=e["assistant_turn"],
                            session_id=s["session_id"],
                            turn_index=i,
                            timestamp=e.get("timestamp"),
                        )
                        for i, e in enumerate(s["exchanges"])
                    ],
                )
                for s in data["sessions"]
            ]
        except (KeyError, TypeError) as e:
            raise FixtureError(f"数据集结构不完整: {e}")
        except InvalidInputError as e:
            raise FixtureError(f"数据集中存在非法交换对: {e}")
        return cls(questions=questions, sessions=sessions, seed=data.get("seed"))


def validate_fixture(fixture: EvalFixture) -> EvalFixture:
    """检查不变量：会话 ID 唯一，问题 ID 唯一，答案会话必须存在"""
    session_ids: Set[str] = set()
    for session in fixture.sessions:
        if session.session_id in session_ids:
            raise FixtureError(f"会话 ID 重复: {session.session_id}")
        session_ids.add(session.session_id)
        if not session.exchanges:
            raise FixtureError(f"会话 {session.session_id} 没有交换对")

    question_ids: Set[str] = set()
    for question in fixture.questions:
        if question.question_id in question_ids:
            raise FixtureError(f"问题 ID 重复: {question.question_id}")
        question_ids.add(question.question_id)
        if not question.query_text or not question.query_text.strip():
            raise FixtureError(f"问题 {question.question_id} 的查询为空")
        if not question.answer_session_ids:
            raise FixtureError(f"问题 {question.question_id} 没有答案会话")
        missing = [sid for sid in question.answer_session_ids if sid not in session_ids]
        if missing:
            raise FixtureError(f"问题 {question.question_id} 引用了不存在的会话: {missing}")
    return fixture


def _pseudo_word(rng: np.random.Generator, syllables: int = 3) -> str:
    return "".join(
        _CONSONANTS[rng.integers(len(_CONSONANTS))] + _VOWELS[rng.integers(len(_VOWELS))]
        for _ in range(syllables)
    )


def _keyphrases(rng: np.random.Generator, n: int) -> List[str]:
    """n 个两词伪词短语，词之间互不重复且不在词表中"""
    used: Set[str] = set(VOCABULARY)
    phrases = []
    while len(phrases) < n:
        words = []
        while len(words) < 2:
            word = _pseudo_word(rng)
            if word not in used:
                used.add(word)
                words.append(word)
        phrases.append(" ".join(words))
    return phrases


def _pick(rng: np.random.Generator, count: int) -> List[str]:
    return [VOCABULARY[i] for i in rng.choice(len(VOCABULARY), size=count, replace=False)]


def _filler_exchange(rng: np.random.Generator) -> tuple:
    user = USER_TEMPLATES[rng.integers(len(USER_TEMPLATES))].format(*_pick(rng, 3))
    assistant = ASSISTANT_TEMPLATES[rng.integers(len(ASSISTANT_TEMPLATES))].format(*_pick(rng, 3))
    return user, assistant


def generate_fixture(n_questions: int, n_distractor_sessions: int, seed: int) -> EvalFixture:
    """生成确定性的合成数据集，共 n_questions + n_distractor_sessions 个会话"""
    if n_questions <= 0 or n_distractor_sessions < 0:
        raise InvalidInputError(
            f"问题数必须为正、干扰会话数不能为负: {n_questions}, {n_distractor_sessions}"
        )
    rng = np.random.default_rng(seed)
    keyphrases = _keyphrases(rng, n_questions)

    # 先生成内容，再打乱顺序统一编号，答案会话不会集中在前面
    drafts: List[Dict[str, Any]] = []
    for q_index, keyphrase in enumerate(keyphrases):
        turns = [_filler_exchange(rng) for _ in range(EXCHANGES_PER_SESSION)]
        slot = int(rng.integers(EXCHANGES_PER_SESSION))
        a, b = _pick(rng, 2)
        turns[slot] = (
            ANSWER_USER_TEMPLATE.format(a, b, keyphrase=keyphrase),
            ANSWER_ASSISTANT_TEMPLATE.format(a, keyphrase=keyphrase),
        )
        drafts.append({"question": q_index, "turns": turns})
    for _ in range(n_distractor_sessions):
        drafts.append({"question": None, "turns": [_filler_exchange(rng) for _ in range(EXCHANGES_PER_SESSION)]})

    order = rng.permutation(len(drafts))
    sessions: List[FixtureSession] = []
    answer_of: Dict[int, FixtureSession] = {}
    width = max(4, len(str(len(drafts))))
    for position, draft_index in enumerate(order):
        draft = drafts[int(draft_index)]
        session_id = f"s{position:0{width}d}"
        session = FixtureSession(
            session_id=session_id,
            wing=WINGS[position % len(WINGS)],
            room=ROOMS[int(rng.integers(len(ROOMS)))],
            exchanges=[
                Exchange(user_turn=u, assistant_turn=a, session_id=session_id, turn_index=i)
                for i, (u, a) in enumerate(draft["turns"])
            ],
        )
        sessions.append(session)
        if draft["question"] is not None:
            answer_of[draft["question"]] = session

    questions = [
        FixtureQuestion(
            question_id=f"q{i:0{width}d}",
            query_text=QUERY_TEMPLATE.format(keyphrase=keyphrase),
            answer_session_ids=[answer_of[i].session_id],
            wing_hint=answer_of[i].wing,
            keyphrase=keyphrase,
        )
        for i, keyphrase in enumerate(keyphrases)
    ]
    fixture = EvalFixture(questions=questions, sessions=sessions, seed=seed)
    logger.info(f"生成数据集: {len(questions)} 个问题，{len(sessions)} 个会话 (seed={seed})")
    return validate_fixture(fixture)


def keyphrase_sessions(fixture: EvalFixture, keyphrase: str) -> List[str]:
    """穷举扫描：包含该短语的会话 ID"""
    hits = []
    for session in fixture.sessions:
        if any(keyphrase in e.render() for e in session.exchanges):
            hits.append(session.session_id)
    return hits


def fixture_to_json(fixture: EvalFixture) -> str:
    return json.dumps(fixture.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def save_fixture(fixture: EvalFixture, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(fixture_to_json(fixture), encoding="utf-8")
    logger.info(f"数据集已保存: {path}")
    return path


def load_fixture(path: Union[str, Path]) -> EvalFixture:
    path = Path(path)
    if not path.exists():
        raise NotFoundError(f"数据集文件不存在: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FixtureError(f"数据集文件不是合法 JSON: {e}")
    if not isinstance(data, dict):
        raise FixtureError("数据集顶层必须是对象")
    return validate_fixture(EvalFixture.from_dict(data))
