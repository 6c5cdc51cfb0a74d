#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
项目目录挖掘器

扫描项目目录下匹配 include_globs 的文本文件，规范化后按固定窗口切块，
每块成为一个 project_chunk 抽屉。写入路径不做任何模型推理或网络访问。
"""

import fnmatch
import logging
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import pandas as pd

from core.errors import InvalidInputError, NotFoundError
from core.palace import (Drawer, DrawerKind, PalaceAddress, PalaceConfig, format_timestamp,
                         sanitize_identifier)
from core.room_detector import classify_address

logger = logging.getLogger(__name__)

DEFAULT_WORKERS = 4

_BLANK_RUN_RE = re.compile(r"\n{3,}")


@dataclass(frozen=True)
class Chunk:
    text: str
    start_offset: int
    end_offset: int


def normalize(text: str) -> str:
    """统一换行为 \\n，去掉行尾空白，连续空行压缩为一个"""
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    text = "\n".join(line.rstrip() for line in text.split("\n"))
    return _BLANK_RUN_RE.sub("\n\n", text)


def chunk_count(length: int, chunk_size: int, overlap: int) -> int:
    if length <= chunk_size:
        return 1
    return 1 + math.ceil((length - chunk_size) / (chunk_size - overlap))


def chunk_text(text: str, chunk_size: int = 800, overlap: int = 100) -> List[Chunk]:
    """固定窗口切块，相邻块重叠 overlap 个字符（按 Unicode 码点计）"""
    if chunk_size <= 0:
        raise InvalidInputError(f"chunk_size 必须为正，当前为 {chunk_size}")
    if overlap < 0 or overlap >= chunk_size:
        raise InvalidInputError(f"chunk_overlap 必须在 [0, chunk_size) 内，当前为 {overlap}")
    if not text:
        raise InvalidInputError("待切块的文本不能为空")

    step = chunk_size - overlap
    chunks = []
    for i in range(chunk_count(len(text), chunk_size, overlap)):
        start = i * step
        end = min(start + chunk_size, len(text))
        chunks.append(Chunk(text=text[start:end], start_offset=start, end_offset=end))
    return chunks


class ProjectMiner:
    """项目目录挖掘器"""

    def __init__(self, config: PalaceConfig, max_workers: int = DEFAULT_WORKERS):
        self.config = config
        self.max_workers = max_workers

    def get_source_files(self, root: Path) -> List[Path]:
        """目录下所有匹配 include_globs 的文件（跳过隐藏目录）"""
        files = []
        for dirpath, dirnames, filenames in os.walk(root):
            dirnames[:] = sorted(d for d in dirnames if not d.startswith("."))
            for name in filenames:
                if any(fnmatch.fnmatch(name, pattern) for pattern in self.config.include_globs):
                    files.append(Path(dirpath) / name)
        return sorted(files)

    def mine_file(self, path: Path, root: Path, wing: Optional[str] = None) -> List[Drawer]:
        """单个文件 -> 抽屉列表；读取失败时记录警告并返回空列表"""
        try:
            raw = path.read_text(encoding="utf-8")
            mtime = path.stat().st_mtime
        except (OSError, UnicodeDecodeError) as e:
            logger.warning(f"跳过无法读取的文件 {path}: {e}")
            return []

        text = normalize(raw)
        if not text.strip():
            return []

        relative = path.relative_to(root).as_posix()
        closet = sanitize_identifier(path.stem, "file")
        timestamp = format_timestamp(pd.Timestamp(mtime, unit="s"))
        drawers = []
        for index, chunk in enumerate(chunk_text(text, self.config.chunk_size, self.config.chunk_overlap)):
            if not chunk.text.strip():
                continue
            address = classify_address(chunk.text, relative, self.config.room_keywords, closet=closet)
            if wing:
                address = PalaceAddress(wing=wing, room=address.room, closet=closet)
            drawers.append(Drawer.create(
                content=chunk.text,
                address=address,
                kind=DrawerKind.PROJECT_CHUNK,
                source_file=relative,
                timestamp=timestamp,
                metadata={
                    "chunk_index": index,
                    "start_offset": chunk.start_offset,
                    "end_offset": chunk.end_offset,
                },
            ))
        return drawers

    def mine(self, directory: Union[str, Path], wing: Optional[str] = None) -> List[Drawer]:
        root = Path(directory)
        if not root.is_dir():
            raise NotFoundError(f"项目目录不存在: {root}")

        files = self.get_source_files(root)
        logger.info(f"找到 {len(files)} 个待挖掘文件: {root}")

        merged: Dict[str, Drawer] = {}
        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            # map 按输入顺序返回，同 ID 时保留路径序靠前的文件
            for drawers in pool.map(lambda p: self.mine_file(p, root, wing), files):
                for drawer in drawers:
                    merged.setdefault(drawer.id, drawer)

        logger.info(f"挖掘完成: {len(files)} 个文件，{len(merged)} 个抽屉")
        return [merged[drawer_id] for drawer_id in sorted(merged)]


def mine_project(directory: Union[str, Path],
                 config: PalaceConfig,
                 wing: Optional[str] = None,
                 max_workers: int = DEFAULT_WORKERS) -> List[Drawer]:
    """挖掘项目目录；同一目录重复挖掘得到相同的抽屉集合"""
    return ProjectMiner(config, max_workers=max_workers).mine(directory, wing=wing)
