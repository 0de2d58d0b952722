#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
命令行启动脚本

用法: python scirender.py render scene.scene.json --out out/frame
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), 'backend'))

from cli import main  # noqa: E402

if __name__ == '__main__':
    sys.exit(main())
