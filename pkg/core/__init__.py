#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""宫殿核心：存储、索引、检索、知识图谱与 AAAK"""
