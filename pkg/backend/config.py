#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
系统配置文件
渲染器、几何工具与渲染服务的默认参数，均可通过环境变量覆盖
"""

import os

import psutil


def _env_tuple(name, default):
    """读取逗号分隔的浮点元组环境变量"""
    raw = os.environ.get(name)
    if not raw:
        return default
    return tuple(float(x) for x in raw.split(','))


class Config:
    """应用配置类"""

    # 渲染服务(Flask)配置
    SECRET_KEY = os.environ.get('SECRET_KEY') or 'scirender-service-2024'
    DEBUG = os.environ.get('FLASK_DEBUG', 'False').lower() == 'true'
    HOST = os.environ.get('FLASK_HOST', '127.0.0.1')
    PORT = int(os.environ.get('FLASK_PORT', 5000))
    MAX_CONTENT_LENGTH = 256 * 1024 * 1024  # 场景文档最大256MB

    # 日志配置
    LOG_DIR = os.environ.get('LOG_DIR', 'logs')
    LOG_LEVEL = os.environ.get('SCIRENDER_LOG_LEVEL', 'INFO').upper()
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    # 输出目录(渲染任务结果)
    OUTPUT_FOLDER = os.environ.get('OUTPUT_FOLDER', 'outputs/')
    JOB_WORKERS = int(os.environ.get('JOB_WORKERS', 2))  # 同时执行的渲染任务数
    JOB_RETENTION_SECONDS = int(os.environ.get('JOB_RETENTION_SECONDS', 3600))  # 已结束任务保留时长
    JOB_CLEANUP_INTERVAL = int(os.environ.get('JOB_CLEANUP_INTERVAL', 300))  # 清理检查间隔(秒)

    # 渲染器配置
    THREADS = int(os.environ.get('SCIRENDER_THREADS', 0))  # 0 表示使用硬件并行度
    DEFAULT_SAMPLES = int(os.environ.get('DEFAULT_SAMPLES', 16))
    DEFAULT_MAX_BOUNCES = int(os.environ.get('DEFAULT_MAX_BOUNCES', 4))
    DEFAULT_RESOLUTION = (int(os.environ.get('DEFAULT_WIDTH', 640)),
                          int(os.environ.get('DEFAULT_HEIGHT', 480)))
    DEFAULT_SEED = int(os.environ.get('DEFAULT_SEED', 0))
    TILE_SIZE = int(os.environ.get('TILE_SIZE', 32))  # 分块大小(像素)
    MAX_RAYS_PER_BATCH = int(os.environ.get('MAX_RAYS_PER_BATCH', 65536))
    RUSSIAN_ROULETTE_START = int(os.environ.get('RUSSIAN_ROULETTE_START', 3))
    MAX_TRANSPARENT_STEPS = int(os.environ.get('MAX_TRANSPARENT_STEPS', 8))
    BVH_LEAF_SIZE = int(os.environ.get('BVH_LEAF_SIZE', 8))
    BEZIER_SIDES = int(os.environ.get('BEZIER_SIDES', 8))  # 贝塞尔曲线管道截面边数

    # 场景文件配置
    SCENE_FORMAT_VERSION = 1
    SIDECAR_THRESHOLD = int(os.environ.get('SIDECAR_THRESHOLD', 4096))  # 超过该元素数的数组写入.bin
    FLOAT_SIGNIFICANT_DIGITS = 9

    # 点云工具配置
    NORMAL_ESTIMATION_K = int(os.environ.get('NORMAL_ESTIMATION_K', 12))
    BACK_COLOR = _env_tuple('BACK_COLOR', (0.8, 0.8, 0.8))
    BACK_ALPHA = float(os.environ.get('BACK_ALPHA', 0.2))

    # 网格化流程配置
    MESHIFY_TEXTURE_RESOLUTION = int(os.environ.get('MESHIFY_TEXTURE_RESOLUTION', 1024))
    MESHIFY_GAP_PX = int(os.environ.get('MESHIFY_GAP_PX', 2))
    MESHIFY_BAKE_K = int(os.environ.get('MESHIFY_BAKE_K', 4))
    MESHIFY_TARGET_FACES = int(os.environ.get('MESHIFY_TARGET_FACES', 20000))
    MESHIFY_DILATION_STEPS = int(os.environ.get('MESHIFY_DILATION_STEPS', 16))

    @staticmethod
    def resolve_threads(requested=None):
        """解析工作线程数: 参数 > 环境变量 > 硬件并行度"""
        if requested:
            return max(1, int(requested))
        if Config.THREADS > 0:
            return Config.THREADS
        return psutil.cpu_count(logical=True) or 1

    @staticmethod
    def init_app(app=None):
        """初始化应用配置"""
        # 确保必要的目录存在
        for directory in [Config.LOG_DIR, Config.OUTPUT_FOLDER]:
            if directory and not os.path.exists(directory):
                os.makedirs(directory, exist_ok=True)


class DevelopmentConfig(Config):
    """开发环境配置"""
    DEBUG = True


class ProductionConfig(Config):
    """生产环境配置"""
    DEBUG = False


class TestingConfig(Config):
    """测试环境配置"""
    TESTING = True
    THREADS = 2
    DEFAULT_SAMPLES = 4
    DEFAULT_RESOLUTION = (32, 32)


# 配置字典
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}
