#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
渲染任务API
提交场景文档、查询任务状态、下载渲染输出
"""

import logging
import os
from datetime import datetime

from flask import Blueprint, jsonify, request, send_file

from services.render_job_service import render_job_service

logger = logging.getLogger(__name__)

# 创建蓝图
render_bp = Blueprint('render', __name__, url_prefix='/api/render')

OUTPUT_MIMETYPES = {'color': 'image/png', 'albedo': 'image/png', 'depth': 'application/octet-stream'}


@render_bp.route('/jobs', methods=['POST'])
def submit_render_job():
    """提交渲染任务

    请求体: {"scene": 场景文档, "samples": N, "resolution": [W, H], "seed": S, "passes": [...]}
    也可以直接提交场景文档本身
    """
    try:
        data = request.get_json(silent=True)
        if not data or not isinstance(data, dict):
            return jsonify({
                'success': False,
                'error': '请求数据为空',
                'message': '请提供有效的JSON场景文档',
                'timestamp': datetime.now().isoformat()
            }), 400

        if 'scene' in data:
            document = data['scene']
            options = {k: v for k, v in data.items() if k != 'scene'}
        else:
            document, options = data, {}

        result = render_job_service.submit_job(document, options)
        if not result['success']:
            return jsonify({
                'success': False,
                'error': '场景验证失败',
                'message': result['message'],
                'details': result.get('error'),
                'timestamp': datetime.now().isoformat()
            }), 400

        return jsonify({
            'success': True,
            'message': result['message'],
            'data': result['data'],
            'timestamp': datetime.now().isoformat()
        }), 202

    except Exception as e:
        logger.error(f"提交渲染任务失败: {e}")
        return jsonify({
            'success': False,
            'error': '提交任务失败',
            'message': str(e),
            'timestamp': datetime.now().isoformat()
        }), 500


@render_bp.route('/jobs', methods=['GET'])
def list_render_jobs():
    """任务列表"""
    result = render_job_service.list_jobs()
    result['timestamp'] = datetime.now().isoformat()
    return jsonify(result)


@render_bp.route('/jobs/<job_id>', methods=['GET'])
def get_render_job(job_id):
    """查询任务状态"""
    result = render_job_service.get_job(job_id)
    result['timestamp'] = datetime.now().isoformat()
    if not result['success']:
        return jsonify(result), 404
    return jsonify(result)


@render_bp.route('/jobs/<job_id>/<pass_name>', methods=['GET'])
def get_render_output(job_id, pass_name):
    """下载某个通道的输出 (color/albedo 为 PNG, depth 为 PFM)"""
    if pass_name not in OUTPUT_MIMETYPES:
        return jsonify({'success': False, 'error': f'未知的渲染通道: {pass_name}', 'code': 404}), 404
    path = render_job_service.get_output_path(job_id, pass_name)
    if path is None or not os.path.exists(path):
        return jsonify({'success': False, 'error': '输出不存在或任务未完成', 'code': 404}), 404
    return send_file(os.path.abspath(path), mimetype=OUTPUT_MIMETYPES[pass_name],
                     download_name=os.path.basename(path))


@render_bp.route('/status', methods=['GET'])
def get_scheduler_status():
    """调度器状态"""
    result = render_job_service.get_status()
    result['timestamp'] = datetime.now().isoformat()
    return jsonify(result)
