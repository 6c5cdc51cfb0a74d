#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""记忆栈、智能体日记与工具执行器"""
