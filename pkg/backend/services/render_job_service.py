#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
渲染任务调度服务
接收场景文档, 在后台调度器中执行渲染并保存输出; 定时清理过期任务
"""

import logging
import os
import shutil
import threading
import uuid
from datetime import datetime, timedelta
from typing import Any, Dict, Optional

from apscheduler.executors.pool import ThreadPoolExecutor
from apscheduler.schedulers.background import BackgroundScheduler
from apscheduler.triggers.date import DateTrigger
from apscheduler.triggers.interval import IntervalTrigger

from config import Config
from models.base import SceneRenderError
from services.image_io_service import image_io_service
from services.render_service import render_service
from services.scene_io_service import scene_io_service

logger = logging.getLogger(__name__)

JOB_STATUSES = ('queued', 'running', 'done', 'failed')
# 请求体中允许覆盖的渲染设置
OVERRIDE_FIELDS = {'samples': 'samples_per_pixel', 'resolution': 'resolution', 'seed': 'seed', 'passes': 'passes',
                   'maxBounces': 'max_bounces'}


class RenderJobService:
    """渲染任务调度服务"""

    def __init__(self, output_folder: Optional[str] = None, workers: Optional[int] = None):
        self.output_folder = output_folder or Config.OUTPUT_FOLDER
        self.scheduler = BackgroundScheduler(executors={'default': ThreadPoolExecutor(workers or Config.JOB_WORKERS)})
        self.is_running = False
        self._lock = threading.Lock()
        self._jobs: Dict[str, Dict[str, Any]] = {}

    def start(self) -> Dict[str, Any]:
        """启动调度器"""
        try:
            with self._lock:
                if self.is_running:
                    return {'success': True, 'message': '渲染调度器已在运行中', 'status': 'running'}
                self.scheduler.start()
                self.scheduler.add_job(
                    func=self.cleanup_expired,
                    trigger=IntervalTrigger(seconds=Config.JOB_CLEANUP_INTERVAL),
                    id='job_cleanup',
                    name='过期渲染任务清理',
                    replace_existing=True
                )
                self.is_running = True
            logger.info("渲染调度器启动成功")
            return {'success': True, 'message': '渲染调度器启动成功', 'status': 'running'}
        except Exception as e:
            logger.error(f"启动渲染调度器失败: {e}")
            return {'success': False, 'message': f'启动失败: {str(e)}', 'status': 'error'}

    def shutdown(self, wait: bool = True) -> Dict[str, Any]:
        """停止调度器"""
        with self._lock:
            if not self.is_running:
                return {'success': True, 'message': '渲染调度器未运行', 'status': 'stopped'}
            self.scheduler.shutdown(wait=wait)
            self.is_running = False
        logger.info("渲染调度器已停止")
        return {'success': True, 'message': '渲染调度器已停止', 'status': 'stopped'}

    def _settings_overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        overrides = {}
        for key, value in (options or {}).items():
            if key not in OVERRIDE_FIELDS:
                raise SceneRenderError(f"不支持的渲染参数: {key}")
            if key == 'resolution' and value is not None:
                value = tuple(value)
            if key == 'passes' and value is not None:
                value = tuple(value)
            overrides[OVERRIDE_FIELDS[key]] = value
        return overrides

    def submit_job(self, document: Dict[str, Any], options: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """
        提交渲染任务

        Args:
            document: 场景文档(数组内联)
            options: 可选覆盖 {samples, resolution, seed, passes, maxBounces}

        Returns:
            {'success', 'message', 'data': {'jobId', 'status'}}
        """
        try:
            scene = scene_io_service.document_to_scene(document, base_dir=self.output_folder)
            settings = scene.settings.override(**self._settings_overrides(options))
            scene.require_camera()
        except SceneRenderError as e:
            logger.error(f"渲染任务参数无效: {e.message}")
            return {'success': False, 'message': e.message, 'error': e.to_dict()}

        if not self.is_running:
            self.start()
        job_id = uuid.uuid4().hex
        job = {
            'jobId': job_id,
            'status': 'queued',
            'createdAt': datetime.now().isoformat(),
            'startedAt': None,
            'finishedAt': None,
            'settings': settings.to_dict(),
            'stats': None,
            'error': None,
            'outputs': {},
        }
        with self._lock:
            self._jobs[job_id] = job
        self.scheduler.add_job(
            func=self._run_job,
            trigger=DateTrigger(run_date=datetime.now()),
            args=[job_id, scene, settings],
            id=f'render_{job_id}',
            name=f'渲染任务 {job_id}',
            misfire_grace_time=None
        )
        logger.info(f"渲染任务已排队: {job_id}")
        return {'success': True, 'message': '渲染任务已提交', 'data': {'jobId': job_id, 'status': 'queued'}}

    def _update(self, job_id: str, **fields) -> None:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is not None:
                job.update(fields)

    def _run_job(self, job_id: str, scene, settings) -> None:
        """在调度器线程中执行渲染"""
        self._update(job_id, status='running', startedAt=datetime.now().isoformat())
        logger.info(f"渲染任务开始: {job_id}")
        try:
            output = render_service.render(scene, settings)
            prefix = os.path.join(self.output_folder, job_id, 'render')
            outputs = image_io_service.write_render_outputs(output, prefix)
            self._update(job_id, status='done', stats=output.stats, outputs=outputs,
                         finishedAt=datetime.now().isoformat())
            logger.info(f"渲染任务完成: {job_id} ({output.stats.get('elapsed_seconds')} 秒)")
        except SceneRenderError as e:
            logger.error(f"渲染任务失败: {job_id}: {e.message}")
            self._update(job_id, status='failed', error=e.to_dict(), finishedAt=datetime.now().isoformat())
        except Exception as e:
            logger.error(f"渲染任务异常: {job_id}: {e}")
            self._update(job_id, status='failed', error={'error': type(e).__name__, 'message': str(e)},
                         finishedAt=datetime.now().isoformat())

    def get_job(self, job_id: str) -> Dict[str, Any]:
        """查询任务状态"""
        with self._lock:
            job = self._jobs.get(job_id)
            data = None if job is None else {k: v for k, v in job.items() if k != 'outputs'}
            if job is not None:
                data['passes'] = sorted(job['outputs'])
        if data is None:
            return {'success': False, 'message': f'渲染任务不存在: {job_id}'}
        return {'success': True, 'data': data}

    def list_jobs(self) -> Dict[str, Any]:
        with self._lock:
            jobs = [{'jobId': j['jobId'], 'status': j['status'], 'createdAt': j['createdAt']}
                    for j in self._jobs.values()]
        return {'success': True, 'data': jobs, 'total': len(jobs)}

    def get_output_path(self, job_id: str, pass_name: str) -> Optional[str]:
        """已完成任务某个通道的输出文件路径"""
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None or job['status'] != 'done':
                return None
            return job['outputs'].get(pass_name)

    def cleanup_expired(self, now: Optional[datetime] = None) -> int:
        """删除结束时间早于保留期限的任务及其输出"""
        now = now or datetime.now()
        cutoff = now - timedelta(seconds=Config.JOB_RETENTION_SECONDS)
        with self._lock:
            expired = [job_id for job_id, job in self._jobs.items()
                       if job['finishedAt'] and datetime.fromisoformat(job['finishedAt']) < cutoff]
            for job_id in expired:
                del self._jobs[job_id]
        for job_id in expired:
            shutil.rmtree(os.path.join(self.output_folder, job_id), ignore_errors=True)
        if expired:
            logger.info(f"清理过期渲染任务: {len(expired)} 个")
        return len(expired)

    def get_status(self) -> Dict[str, Any]:
        """调度器状态与各状态任务数"""
        with self._lock:
            counts = {status: 0 for status in JOB_STATUSES}
            for job in self._jobs.values():
                counts[job['status']] += 1
        return {'success': True, 'data': {'isRunning': self.is_running, 'jobs': counts}}


# 创建全局实例
render_job_service = RenderJobService()
