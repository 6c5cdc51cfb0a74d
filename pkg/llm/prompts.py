#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Prompts定义模块 - 交给智能体的固定文本

PALACE_PROTOCOL 随 palace_status 与唤醒载荷一起返回，要求智能体先检索再回答。
"""

# 宫殿协议指令（英文，直接交给模型）
PALACE_PROTOCOL = (
    "PALACE_PROTOCOL: You have a memory palace. Before answering any question about "
    "people, projects, decisions or past conversations, call recall first. "
    "Always search before claiming ignorance. "
    "Quote drawers verbatim, and store new durable facts with remember."
)

# 唤醒载荷各层的标题
L0_HEADER = "## L0 IDENTITY"
L1_HEADER = "## L1 ESSENTIAL"

# L1 / L2 中每个抽屉一行
MEMORY_LINE_TEMPLATE = "- [{wing}/{room}] {sentence}"

# MCP initialize 返回的服务说明
SERVER_INSTRUCTIONS = (
    "Local memory palace. Use recall to search verbatim memories, remember to store them, "
    "kg_add / kg_query for dated facts and diary_append / diary_read for your own notes."
)
