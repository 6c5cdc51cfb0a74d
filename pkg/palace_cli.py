#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
记忆宫殿命令行入口

数据输出到 stdout（--json 时为单个 JSON 文档），日志和错误输出到 stderr。
退出码：0 成功，1 用户错误（参数、输入、宫殿不存在），2 内部错误。
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import pandas as pd
from dotenv import load_dotenv

# 添加项目根目录到Python路径
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from agents.diary import diary_append, diary_read  # noqa: E402
from agents.layers import LayerBudget, load_topic_context, wakeup  # noqa: E402
from bench.ablation_walker import run_ablations  # noqa: E402
from bench.fixtures import generate_fixture, load_fixture, save_fixture  # noqa: E402
from core.errors import InvalidInputError, NotFoundError, PalaceError  # noqa: E402
from core.knowledge_graph import Triple  # noqa: E402
from core.mcp_server import MCPServer  # noqa: E402
from core.palace import PalaceAddress  # noqa: E402
from core.palace_store import Palace  # noqa: E402
from core.searcher import SearchMode, follow_tunnels, search  # noqa: E402
from llm.prompts import PALACE_PROTOCOL  # noqa: E402
from prepare.convo_miner import mine_conversation  # noqa: E402
from prepare.miner import mine_project  # noqa: E402

logger = logging.getLogger("palace_cli")

EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_INTERNAL_ERROR = 2


class UsageError(Exception):
    """argparse 用法错误"""


class PalaceArgumentParser(argparse.ArgumentParser):
    """用法错误时输出到 stderr 并以退出码 1 结束"""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


@dataclass
class CommandOutput:
    data: Any
    text: str


# ----------------------------------------------------------------------
# 公共工具
# ----------------------------------------------------------------------

def _open_palace(args: argparse.Namespace) -> Palace:
    if not args.palace:
        raise NotFoundError("未找到宫殿：请用 --palace 指定或设置环境变量 PALACE_PATH")
    return Palace.open(args.palace)


def _with_palace(handler: Callable[[Palace, argparse.Namespace], CommandOutput]):
    def wrapper(args: argparse.Namespace) -> CommandOutput:
        palace = _open_palace(args)
        try:
            return handler(palace, args)
        finally:
            palace.close()
    return wrapper


def _format_add_result(result) -> CommandOutput:
    data = {"added": len(result.added), "deduplicated": len(result.deduplicated)}
    return CommandOutput(data, f"新增 {data['added']} 个抽屉，去重 {data['deduplicated']} 个")


def _table_text(rows: List[Dict[str, Any]], columns: List[str]) -> str:
    if not rows:
        return "(空)"
    return pd.DataFrame(rows, columns=columns).to_string(index=False)


# ----------------------------------------------------------------------
# 宫殿生命周期
# ----------------------------------------------------------------------

def cmd_init(args: argparse.Namespace) -> CommandOutput:
    overrides: Dict[str, Any] = {}
    if args.metric:
        overrides["distance_metric"] = args.metric
    if args.backend:
        overrides["search_backend"] = args.backend
    if args.index_text:
        overrides["index_text"] = args.index_text
    if args.dim:
        overrides["embedding_dim"] = args.dim
    with Palace.init(args.path, **overrides) as palace:
        status = palace.status()
    return CommandOutput(status, f"宫殿已就绪: {status['palace_path']}")


@_with_palace
def cmd_status(palace: Palace, args: argparse.Namespace) -> CommandOutput:
    status = palace.status()
    status["kg"] = palace.kg.stats()
    status["protocol_directive"] = PALACE_PROTOCOL
    text = "\n".join([
        f"宫殿: {status['palace_path']}",
        f"wing: {status['wing_count']}  房间: {status['room_count']}  抽屉: {status['drawer_count']}",
        f"壁橱: {status['closet_count']}  隧道: {status['tunnel_count']}  已索引: {status['indexed_count']}",
        f"三元组: {status['kg']['triple_count']}  实体: {status['kg']['entity_count']}",
        "",
        PALACE_PROTOCOL,
    ])
    return CommandOutput(status, text)


@_with_palace
def cmd_wings(palace: Palace, args: argparse.Namespace) -> CommandOutput:
    wings = palace.list_wings()
    return CommandOutput(wings, _table_text(wings, ["wing", "drawer_count"]))


@_with_palace
def cmd_rooms(palace: Palace, args: argparse.Namespace) -> CommandOutput:
    rooms = palace.list_rooms(args.wing)
    return CommandOutput(rooms, _table_text(rooms, ["wing", "room", "drawer_count"]))


@_with_palace
def cmd_repair(palace: Palace, args: argparse.Namespace) -> CommandOutput:
    count = palace.repair()
    return CommandOutput({"rebuilt": count}, f"已重建 {count} 个抽屉的索引")


@_with_palace
def cmd_dedup_report(palace: Palace, args: argparse.Namespace) -> CommandOutput:
    report = palace.dedup_report()
    records = report.to_dict("records")
    text = "没有重复内容" if report.empty else report[["copies", "content_preview"]].to_string(index=False)
    return CommandOutput(records, text)


# ----------------------------------------------------------------------
# 写入
# ----------------------------------------------------------------------

@_with_palace
def cmd_mine(palace: Palace, args: argparse.Namespace) -> CommandOutput:
    drawers = mine_project(args.directory, palace.config, wing=args.wing, max_workers=args.workers)
    return _format_add_result(palace.add_drawers(drawers))


@_with_palace
def cmd_mine_convo(palace: Palace, args: argparse.Namespace) -> CommandOutput:
    if (args.wing is None) != (args.room is None):
        raise InvalidInputError("--wing 与 --room 需要同时指定")
    address = PalaceAddress(wing=args.wing, room=args.room) if args.wing else None
    drawers = mine_conversation(args.file, address, palace.config.room_keywords)
    return _format_add_result(palace.add_drawers(drawers))


@_with_palace
def cmd_remember(palace: Palace, args: argparse.Namespace) -> CommandOutput:
    drawer_id, deduplicated = palace.remember(
        args.text, wing=args.wing, room=args.room, hall=args.hall, closet=args.closet,
    )
    data = {"drawer_id": drawer_id, "deduplicated": deduplicated}
    return CommandOutput(data, f"{'已存在' if deduplicated else '已写入'}: {drawer_id}")


@_with_palace
def cmd_forget(palace: Palace, args: argparse.Namespace) -> CommandOutput:
    deleted = palace.delete_drawer(args.drawer_id)
    if not deleted:
        raise NotFoundError(f"抽屉不存在: {args.drawer_id}")
    return CommandOutput({"drawer_id": args.drawer_id, "deleted": True}, f"已删除: {args.drawer_id}")


# ----------------------------------------------------------------------
# 检索与记忆栈
# ----------------------------------------------------------------------

@_with_palace
def cmd_recall(palace: Palace, args: argparse.Namespace) -> CommandOutput:
    results = search(
        palace, args.query, wing=args.wing, room=args.room, hall=args.hall,
        n_results=args.n_results, max_distance=args.max_distance, mode=args.mode,
    )
    data = [r.to_dict() for r in results]
    if not results:
        return CommandOutput(data, "没有找到相关记忆")
    blocks = []
    for i, r in enumerate(results, start=1):
        distance = "-" if r.distance is None else f"{r.distance:.4f}"
        blocks.append(
            f"[{i}] {r.drawer_id}  {r.address.wing}/{r.address.room}  "
            f"fused={r.fused_score:.5f} dist={distance} bm25={r.keyword_score:.3f} ({r.provenance.value})\n"
            f"{r.content}"
        )
    return CommandOutput(data, "\n\n".join(blocks))


@_with_palace
def cmd_wakeup(palace: Palace, args: argparse.Namespace) -> CommandOutput:
    identity = args.identity
    if args.identity_file:
        identity = Path(args.identity_file).read_text(encoding="utf-8").strip()
    if not identity:
        raise InvalidInputError("需要 --identity 或 --identity-file")
    payload = wakeup(palace, identity, LayerBudget())
    return CommandOutput(payload.to_dict(), payload.render())


@_with_palace
def cmd_topic(palace: Palace, args: argparse.Namespace) -> CommandOutput:
    text = load_topic_context(palace, args.room)
    return CommandOutput({"room": args.room, "context": text}, text or "(该房间没有内容)")


@_with_palace
def cmd_tunnel(palace: Palace, args: argparse.Namespace) -> CommandOutput:
    if args.tunnel_command == "add":
        created = palace.add_tunnel(args.from_id, args.to_id, args.label)
        data = {"from_drawer_id": args.from_id, "to_drawer_id": args.to_id, "created": created}
        return CommandOutput(data, "隧道已建立" if created else "隧道已存在")
    drawers = follow_tunnels(palace, args.drawer_id)
    data = [d.to_dict() for d in drawers]
    text = "\n".join(f"{d.id}  {d.address.wing}/{d.address.room}" for d in drawers) or "(没有隧道)"
    return CommandOutput(data, text)


# ----------------------------------------------------------------------
# 知识图谱与日记
# ----------------------------------------------------------------------

def _triple_line(t: Triple) -> str:
    interval = f"[{t.valid_from or '-∞'}, {t.valid_to or '+∞'})"
    return f"{t.id}  {t.subject} -{t.predicate}-> {t.object}  {interval}  conf={t.confidence:.2f}"


@_with_palace
def cmd_kg(palace: Palace, args: argparse.Namespace) -> CommandOutput:
    kg = palace.kg
    command = args.kg_command
    if command == "add":
        added, triple = kg.add_triple_record(Triple(
            subject=args.subject, predicate=args.predicate, object=args.object,
            valid_from=args.valid_from, valid_to=args.valid_to, confidence=args.confidence,
            source_closet=args.source_closet, source_file=args.source_file,
        ))
        return CommandOutput({"added": added, "triple": triple.to_dict()},
                             f"{'已添加' if added else '已存在'}: {_triple_line(triple)}")
    if command == "query":
        if args.subject:
            triples = kg.query_by_subject(args.subject, args.at)
            if args.predicate:
                triples = [t for t in triples if t.predicate == args.predicate]
        elif args.predicate:
            triples = kg.query_by_predicate(args.predicate)
        else:
            raise InvalidInputError("kg query 需要 --subject 或 --predicate")
        return CommandOutput([t.to_dict() for t in triples],
                             "\n".join(_triple_line(t) for t in triples) or "(没有匹配的事实)")
    if command == "close":
        triple = kg.close_validity(args.triple_id, args.valid_to)
        return CommandOutput(triple.to_dict(), f"已截止: {_triple_line(triple)}")
    if command == "dump":
        count = kg.dump_jsonl(args.path)
        return CommandOutput({"exported": count, "path": args.path}, f"导出 {count} 条三元组")
    count = kg.load_jsonl(args.path)
    return CommandOutput({"imported": count, "path": args.path}, f"导入 {count} 条新三元组")


@_with_palace
def cmd_diary(palace: Palace, args: argparse.Namespace) -> CommandOutput:
    if args.diary_command == "append":
        entry = diary_append(palace, args.agent_id, args.session, args.text)
        return CommandOutput(entry.to_dict(), f"已写入 {args.agent_id} 的日记（第 {entry.seq} 条）")
    entries = diary_read(palace, args.agent_id, args.last)
    text = "\n".join(f"{e.created_at}  [{e.session_id}] {e.text}" for e in entries) or "(日记为空)"
    return CommandOutput([e.to_dict() for e in entries], text)


# ----------------------------------------------------------------------
# 服务与评测
# ----------------------------------------------------------------------

def cmd_serve(args: argparse.Namespace) -> Optional[CommandOutput]:
    palace = _open_palace(args)
    try:
        MCPServer(palace).serve()
    finally:
        palace.close()
    return None


def cmd_bench(args: argparse.Namespace) -> CommandOutput:
    if args.bench_command == "generate":
        fixture = generate_fixture(args.questions, args.distractors, args.seed)
        path = save_fixture(fixture, args.out)
        data = {"path": str(path), "questions": len(fixture.questions), "sessions": len(fixture.sessions)}
        return CommandOutput(data, f"数据集已写入 {path}: {data['questions']} 个问题，{data['sessions']} 个会话")

    if args.fixture:
        fixture = load_fixture(args.fixture)
    else:
        fixture = generate_fixture(args.questions, args.distractors, args.seed)
    report = run_ablations(fixture, workdir=args.workdir, mode=args.mode, search_backend=args.backend)
    return CommandOutput(report.to_dict(include_timings=args.timings), report.to_text())


# ----------------------------------------------------------------------
# 参数解析
# ----------------------------------------------------------------------

def build_parser() -> PalaceArgumentParser:
    parser = PalaceArgumentParser(prog="palace", description="本地记忆宫殿")
    parser.add_argument("--palace", default=os.getenv("PALACE_PATH"),
                        help="宫殿目录（默认读取环境变量 PALACE_PATH）")
    parser.add_argument("--json", action="store_true", help="以 JSON 输出")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v 输出 INFO 日志，-vv 输出 DEBUG")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=PalaceArgumentParser)

    p = sub.add_parser("init", help="创建宫殿")
    p.add_argument("path")
    p.add_argument("--metric", choices=["cosine", "l2"])
    p.add_argument("--backend", choices=["hnsw", "exact"])
    p.add_argument("--index-text", choices=["verbatim", "aaak"])
    p.add_argument("--dim", type=int)
    p.set_defaults(handler=cmd_init)

    p = sub.add_parser("mine", help="挖掘项目目录")
    p.add_argument("directory")
    p.add_argument("--wing")
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(handler=cmd_mine)

    p = sub.add_parser("mine-convo", help="挖掘对话导出（JSON-lines）")
    p.add_argument("file")
    p.add_argument("--wing")
    p.add_argument("--room")
    p.set_defaults(handler=cmd_mine_convo)

    p = sub.add_parser("recall", help="检索记忆")
    p.add_argument("query")
    p.add_argument("--wing")
    p.add_argument("--room")
    p.add_argument("--hall")
    p.add_argument("-k", "--n-results", type=int, default=5)
    p.add_argument("--max-distance", type=float, default=0.0)
    p.add_argument("--mode", choices=[m.value for m in SearchMode], default=SearchMode.HYBRID.value)
    p.set_defaults(handler=cmd_recall)

    p = sub.add_parser("remember", help="写入一条记忆")
    p.add_argument("text")
    p.add_argument("--wing", required=True)
    p.add_argument("--room", required=True)
    p.add_argument("--hall")
    p.add_argument("--closet")
    p.set_defaults(handler=cmd_remember)

    p = sub.add_parser("forget", help="删除抽屉")
    p.add_argument("drawer_id")
    p.set_defaults(handler=cmd_forget)

    sub.add_parser("status", help="宫殿概览").set_defaults(handler=cmd_status)
    sub.add_parser("wings", help="列出 wing").set_defaults(handler=cmd_wings)
    p = sub.add_parser("rooms", help="列出房间")
    p.add_argument("--wing")
    p.set_defaults(handler=cmd_rooms)
    sub.add_parser("dedup-report", help="列出内容完全相同的抽屉组").set_defaults(handler=cmd_dedup_report)
    sub.add_parser("repair", help="由抽屉表重建全部索引").set_defaults(handler=cmd_repair)

    p = sub.add_parser("wakeup", help="生成唤醒载荷（L0 + L1 + 协议）")
    p.add_argument("--identity")
    p.add_argument("--identity-file")
    p.set_defaults(handler=cmd_wakeup)

    p = sub.add_parser("topic", help="加载某个房间的 L2 话题上下文")
    p.add_argument("room")
    p.set_defaults(handler=cmd_topic)

    p = sub.add_parser("tunnel", help="抽屉间隧道")
    tunnel = p.add_subparsers(dest="tunnel_command", required=True, parser_class=PalaceArgumentParser)
    tp = tunnel.add_parser("add")
    tp.add_argument("from_id")
    tp.add_argument("to_id")
    tp.add_argument("--label", default="")
    tp = tunnel.add_parser("follow")
    tp.add_argument("drawer_id")
    p.set_defaults(handler=cmd_tunnel)

    p = sub.add_parser("kg", help="时间知识图谱")
    kg = p.add_subparsers(dest="kg_command", required=True, parser_class=PalaceArgumentParser)
    kp = kg.add_parser("add")
    kp.add_argument("subject")
    kp.add_argument("predicate")
    kp.add_argument("object")
    kp.add_argument("--valid-from")
    kp.add_argument("--valid-to")
    kp.add_argument("--confidence", type=float, default=1.0)
    kp.add_argument("--source-closet")
    kp.add_argument("--source-file")
    kp = kg.add_parser("query")
    kp.add_argument("--subject")
    kp.add_argument("--predicate")
    kp.add_argument("--at")
    kp = kg.add_parser("close")
    kp.add_argument("triple_id")
    kp.add_argument("valid_to")
    kp = kg.add_parser("dump")
    kp.add_argument("path")
    kp = kg.add_parser("load")
    kp.add_argument("path")
    p.set_defaults(handler=cmd_kg)

    p = sub.add_parser("diary", help="智能体日记")
    diary = p.add_subparsers(dest="diary_command", required=True, parser_class=PalaceArgumentParser)
    dp = diary.add_parser("append")
    dp.add_argument("agent_id")
    dp.add_argument("text")
    dp.add_argument("--session", default="default")
    dp = diary.add_parser("read")
    dp.add_argument("agent_id")
    dp.add_argument("--last", type=int, default=10)
    p.set_defaults(handler=cmd_diary)

    sub.add_parser("serve", help="在 stdio 上运行 MCP 服务器").set_defaults(handler=cmd_serve)

    p = sub.add_parser("bench", help="合成数据集与消融评测")
    bench = p.add_subparsers(dest="bench_command", required=True, parser_class=PalaceArgumentParser)
    for name in ("generate", "run"):
        bp = bench.add_parser(name)
        bp.add_argument("--questions", type=int, default=50)
        bp.add_argument("--distractors", type=int, default=200)
        bp.add_argument("--seed", type=int, default=7)
        if name == "generate":
            bp.add_argument("--out", required=True)
        else:
            bp.add_argument("--fixture")
            bp.add_argument("--workdir")
            bp.add_argument("--mode", choices=[m.value for m in SearchMode], default=SearchMode.HYBRID.value)
            bp.add_argument("--backend", choices=["hnsw", "exact"], default="exact")
            bp.add_argument("--timings", action="store_true", help="在 JSON 报告中包含耗时")
    p.set_defaults(handler=cmd_bench)

    return parser


def _setup_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return EXIT_USER_ERROR
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    _setup_logging(args.verbose)
    try:
        output = args.handler(args)
    except PalaceError as e:
        sys.stderr.write(f"错误 ({e.error_type}): {e.message}\n")
        return EXIT_USER_ERROR
    except (FileNotFoundError, IsADirectoryError, PermissionError) as e:
        sys.stderr.write(f"错误: {e}\n")
        return EXIT_USER_ERROR
    except Exception as e:
        logger.error(f"内部错误: {e}", exc_info=args.verbose > 0)
        sys.stderr.write(f"内部错误: {type(e).__name__}: {e}\n")
        return EXIT_INTERNAL_ERROR

    if output is not None:
        if args.json:
            sys.stdout.write(json.dumps(output.data, ensure_ascii=False, indent=2, default=str) + "\n")
        else:
            sys.stdout.write(output.text + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
