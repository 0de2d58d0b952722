#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
科研可视化渲染服务 - 主应用文件
"""

import logging
import os
from datetime import datetime

from flask import Flask, jsonify
from flask_cors import CORS

# 导入配置
from config import Config, config

# 导入API蓝图
from api.render_api import render_bp
from api.system_api import system_bp

# 导入服务
from services.render_job_service import render_job_service

# 创建Flask应用
app = Flask(__name__)
app.config.from_object(config[os.environ.get('SCIRENDER_ENV', 'default')])

# 启用CORS支持跨域请求
CORS(app)

# 注册API蓝图
app.register_blueprint(render_bp)
app.register_blueprint(system_bp)

# 配置日志
Config.init_app(app)
logging.basicConfig(
    level=getattr(logging, Config.LOG_LEVEL, logging.INFO),
    format=Config.LOG_FORMAT,
    handlers=[
        logging.FileHandler(os.path.join(Config.LOG_DIR, 'app.log'), encoding='utf-8'),
        logging.StreamHandler()
    ]
)
logger = logging.getLogger(__name__)


# 健康检查接口
@app.route('/api/health')
def health_check():
    """服务健康检查"""
    status = render_job_service.get_status()['data']
    return jsonify({
        'status': 'healthy',
        'timestamp': datetime.now().isoformat(),
        'scheduler': 'running' if status['isRunning'] else 'stopped',
        'jobs': status['jobs']
    })


# 错误处理
@app.errorhandler(404)
def not_found(error):
    return jsonify({'error': '接口不存在', 'code': 404}), 404


@app.errorhandler(413)
def payload_too_large(error):
    return jsonify({'error': '场景文档过大', 'code': 413}), 413


@app.errorhandler(500)
def internal_error(error):
    logger.error(f"内部服务器错误: {error}")
    return jsonify({'error': '内部服务器错误', 'code': 500}), 500


if __name__ == '__main__':
    # 启动渲染调度器
    logger.info("正在启动渲染调度器...")
    render_job_service.start()

    logger.info("启动科研可视化渲染服务...")
    try:
        app.run(
            host=app.config['HOST'],
            port=app.config['PORT'],
            debug=app.config['DEBUG']
        )
    finally:
        logger.info("正在停止渲染调度器...")
        render_job_service.shutdown(wait=False)
        logger.info("渲染调度器已停止")
