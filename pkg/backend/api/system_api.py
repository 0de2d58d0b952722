#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
系统信息与性能API
"""

import logging
import platform
from datetime import datetime

import numpy as np
import psutil
from flask import Blueprint, jsonify

from config import Config

logger = logging.getLogger(__name__)

# 创建蓝图
system_bp = Blueprint('system', __name__, url_prefix='/api/system')


def handle_api_error(func):
    """API错误处理装饰器"""
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except Exception as e:
            logger.error(f"系统API错误: {e}")
            return jsonify({'error': '服务器内部错误', 'code': 500}), 500
    wrapper.__name__ = func.__name__
    return wrapper


@system_bp.route('/info', methods=['GET'])
@handle_api_error
def system_info():
    """系统基本信息"""
    return jsonify({
        'name': '科研可视化渲染服务',
        'version': '1.0.0',
        'description': '场景图、确定性路径追踪渲染与点云网格化',
        'python': platform.python_version(),
        'numpy': np.__version__,
        'threads': Config.resolve_threads(),
        'timestamp': datetime.now().isoformat()
    })


@system_bp.route('/performance', methods=['GET'])
@handle_api_error
def get_system_performance():
    """CPU、内存与磁盘使用情况"""
    cpu_usage = psutil.cpu_percent(interval=0.1)
    memory = psutil.virtual_memory()
    disk = psutil.disk_usage('/')
    process = psutil.Process()

    try:
        load_average = psutil.getloadavg()[0] if hasattr(psutil, 'getloadavg') else cpu_usage / 100
    except OSError:
        load_average = cpu_usage / 100

    performance_data = {
        'cpu_usage': round(cpu_usage, 1),
        'cpu_count': psutil.cpu_count(logical=True),
        'memory_usage': round(memory.percent, 1),
        'memory_total': round(memory.total / (1024 ** 3), 2),  # GB
        'memory_used': round(memory.used / (1024 ** 3), 2),    # GB
        'disk_usage': round((disk.used / disk.total) * 100, 1),
        'process_rss_mb': round(process.memory_info().rss / (1024 ** 2), 2),
        'process_threads': process.num_threads(),
        'load_average': round(load_average, 2),
        'timestamp': datetime.now().isoformat()
    }
    return jsonify({'success': True, 'data': performance_data})


@system_bp.errorhandler(405)
def method_not_allowed(error):
    return jsonify({'error': '请求方法不允许', 'code': 405}), 405
