#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
评测包：合成数据集、recall_any@k 评测与消融实验
"""
