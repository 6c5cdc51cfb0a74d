#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""向量化客户端与固定提示文本"""
