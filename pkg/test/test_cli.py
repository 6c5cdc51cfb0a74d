#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
命令行测试

退出码：0 成功，1 用户错误，2 内部错误；--json 输出单个 JSON 文档。
"""

import json
import sys
from pathlib import Path

# 添加项目根目录到Python路径
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from palace_cli import EXIT_OK, EXIT_USER_ERROR, main


def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


def test_init_and_status(tmp_path, capsys):
    root = tmp_path / "palace"
    assert main(["init", str(root), "--backend", "exact", "--metric", "l2"]) == EXIT_OK
    capsys.readouterr()
    assert main(["--json", "--palace", str(root), "status"]) == EXIT_OK
    status = _json_out(capsys)
    assert status["drawer_count"] == 0
    assert status["distance_metric"] == "l2"
    assert "Always search before claiming ignorance." in status["protocol_directive"]


def test_missing_palace_is_a_user_error(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("PALACE_PATH", raising=False)
    assert main(["recall", "anything"]) == EXIT_USER_ERROR
    assert "PALACE_PATH" in capsys.readouterr().err
    assert main(["--palace", str(tmp_path / "nowhere"), "status"]) == EXIT_USER_ERROR


def test_palace_path_from_environment(tmp_path, monkeypatch, capsys):
    root = tmp_path / "env_palace"
    main(["init", str(root), "--backend", "exact"])
    monkeypatch.setenv("PALACE_PATH", str(root))
    capsys.readouterr()
    assert main(["--json", "wings"]) == EXIT_OK
    assert _json_out(capsys) == []


def test_usage_errors_exit_with_one(capsys):
    assert main(["teleport"]) == EXIT_USER_ERROR
    assert main([]) == EXIT_USER_ERROR
    assert main(["recall"]) == EXIT_USER_ERROR


def test_remember_recall_forget(tmp_path, capsys):
    root = str(tmp_path / "palace")
    main(["init", root, "--backend", "exact"])
    text = "The staging database password rotates every  90 days."
    capsys.readouterr()
    assert main(["--json", "--palace", root, "remember", text, "--wing", "ops", "--room", "secrets"]) == EXIT_OK
    drawer_id = _json_out(capsys)["drawer_id"]

    assert main(["--json", "--palace", root, "recall", "staging password rotation"]) == EXIT_OK
    results = _json_out(capsys)
    assert results[0]["drawer_id"] == drawer_id
    assert results[0]["content"] == text

    assert main(["--palace", root, "remember", "x", "--wing", "Ops", "--room", "r"]) == EXIT_USER_ERROR
    assert main(["--palace", root, "forget", drawer_id]) == EXIT_OK
    assert main(["--palace", root, "forget", drawer_id]) == EXIT_USER_ERROR


def test_kg_and_diary_commands(tmp_path, capsys):
    root = str(tmp_path / "palace")
    main(["init", root, "--backend", "exact"])
    assert main(["--palace", root, "kg", "add", "Max", "works_at", "Acme", "--valid-from", "2023-01-01"]) == EXIT_OK
    capsys.readouterr()
    assert main(["--json", "--palace", root, "kg", "query", "--subject", "Max", "--at", "2024-01-01"]) == EXIT_OK
    assert [t["object"] for t in _json_out(capsys)] == ["Acme"]
    assert main(["--palace", root, "kg", "query"]) == EXIT_USER_ERROR

    assert main(["--palace", root, "diary", "append", "scout", "first note"]) == EXIT_OK
    capsys.readouterr()
    assert main(["--json", "--palace", root, "diary", "read", "scout"]) == EXIT_OK
    assert [e["text"] for e in _json_out(capsys)] == ["first note"]


def test_wakeup_command(tmp_path, capsys):
    root = str(tmp_path / "palace")
    main(["init", root, "--backend", "exact"])
    main(["--palace", root, "remember", "We ship the mobile app on Thursdays.", "--wing", "work", "--room", "release"])
    capsys.readouterr()
    assert main(["--json", "--palace", root, "wakeup", "--identity", "I am the release bot."]) == EXIT_OK
    payload = _json_out(capsys)
    assert payload["token_estimate"] <= 900
    assert "[work/release]" in payload["l1_text"]
    assert main(["--palace", root, "wakeup"]) == EXIT_USER_ERROR


def test_bench_generate_is_byte_identical(tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    args = ["bench", "generate", "--questions", "5", "--distractors", "5", "--seed", "3"]
    assert main(args + ["--out", str(first)]) == EXIT_OK
    assert main(args + ["--out", str(second)]) == EXIT_OK
    assert first.read_bytes() == second.read_bytes()


def test_bench_run_reports_checks(tmp_path, capsys):
    fixture = tmp_path / "fixture.json"
    main(["bench", "generate", "--questions", "6", "--distractors", "6", "--seed", "2", "--out", str(fixture)])
    capsys.readouterr()
    assert main(["--json", "bench", "run", "--fixture", str(fixture), "--workdir", str(tmp_path / "work")]) == EXIT_OK
    report = _json_out(capsys)
    assert len(report["conditions"]) == 8
    assert all(report["checks"].values())
    assert report["metric"].startswith("recall_any")
    assert "runtime_ms" not in report["conditions"][0]
