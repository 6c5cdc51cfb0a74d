#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""项目文件与对话导出的挖掘"""
