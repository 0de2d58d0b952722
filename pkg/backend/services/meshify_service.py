#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
点云网格化服务
法线估计(缺省时) → 滚球重建 → QEM 简化 → 逐面图集 → 投影与烘焙
各阶段的错误包装为带阶段标签的 MeshifyStageError
"""

import logging
import time
from typing import Any, Callable, Dict, Optional

import numpy as np

from models.base import (BindError, EmptyBakeError, InsufficientPointsError, MeshifyStageError, SceneRenderError,
                         ValidationError, as_float_array)
from models.geometry import TriMesh
from models.meshify_config import MeshifyConfig, TexturedMesh
from services.atlas_service import atlas_service
from services.bake_service import bake_service
from services.ball_pivot_service import ball_pivot_service
from services.pointcloud_service import KnnIndex, pointcloud_service
from services.simplify_service import simplify_service

logger = logging.getLogger(__name__)

# 未指定球半径时, 按平均最近邻距离的倍数自动选择
AUTO_RADIUS_FACTORS = (1.0, 2.0, 4.0)
MIN_POINTS = 4


def compact_mesh(mesh: TriMesh) -> TriMesh:
    """去掉未被任何面引用的顶点"""
    used = np.unique(mesh.faces)
    if used.size == mesh.vertex_count:
        return mesh
    remap = np.full(mesh.vertex_count, -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    normals = None if mesh.normals is None else mesh.normals[used]
    return TriMesh(mesh.vertices[used], remap[mesh.faces], normals=normals,
                   position=mesh.pose.position, rotation=mesh.pose.rotation)


class MeshifyService:
    """点云网格化服务"""

    def auto_radii(self, points: np.ndarray) -> list:
        """按平均最近邻距离估计滚球半径"""
        distance, _ = KnnIndex(points).query(points, 2)
        spacing = float(np.mean(distance[:, 1]))
        if spacing <= 0.0:
            raise ValidationError("点间距为零, 无法估计滚球半径")
        return [spacing * f for f in AUTO_RADIUS_FACTORS]

    def _run_stage(self, stats: Dict[str, Any], stage: str, func: Callable, *args, **kwargs):
        logger.info(f"网格化阶段开始: {stage}")
        start = time.perf_counter()
        try:
            result = func(*args, **kwargs)
        except MeshifyStageError:
            raise
        except (SceneRenderError, ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
            logger.error(f"网格化阶段失败: {stage}: {e}")
            raise MeshifyStageError(stage, e) from e
        elapsed = time.perf_counter() - start
        stats['stages'].append(stage)
        stats['timings'][stage] = round(elapsed, 6)
        logger.info(f"网格化阶段完成: {stage} ({elapsed:.3f}s)")
        return result

    def meshify_pc(self, points, colors, normals=None, config: Optional[MeshifyConfig] = None) -> TexturedMesh:
        """
        点云 → 带纹理网格

        Args:
            points: N×3 点 (N ≥ 4)
            colors: N×3 或 N×4 线性颜色
            normals: 可选 N×3 法线; 缺省时按近邻估计并朝外定向
            config: 网格化参数

        Returns:
            TexturedMesh, stats 记录各阶段耗时与计数
        """
        config = config or MeshifyConfig()
        points = as_float_array(points, (3,), 'points')
        n = points.shape[0]
        if n < MIN_POINTS:
            cause = InsufficientPointsError(f"网格化至少需要 {MIN_POINTS} 个点, 实际 {n}", points=n)
            logger.error(f"网格化阶段失败: input: {cause}")
            raise MeshifyStageError('input', cause) from cause
        if colors is None:
            raise EmptyBakeError("烘焙需要颜色 (bake requires colors)")
        colors = np.asarray(colors, dtype=np.float64)
        if colors.ndim != 2 or colors.shape[0] != n or colors.shape[1] not in (3, 4):
            raise BindError(f"颜色形状 {colors.shape} 与点数 {n} 不一致")

        stats: Dict[str, Any] = {'points': n, 'stages': [], 'timings': {}}
        if normals is None:
            normals = self._run_stage(stats, 'normals', self._estimate_normals, points, config.normal_k)
            stats['normals_estimated'] = True
        else:
            normals = as_float_array(normals, (3,), 'normals')
            if normals.shape[0] != n:
                raise BindError(f"法线数量 {normals.shape[0]} 与点数 {n} 不一致")
            stats['normals_estimated'] = False
            logger.info("已提供法线, 跳过法线估计阶段")

        radii = config.bpa_radii or self._run_stage(stats, 'radii', self.auto_radii, points)
        stats['bpa_radii'] = list(radii)
        mesh = self._run_stage(stats, 'ball_pivot', ball_pivot_service.ball_pivot, points, normals, radii)
        mesh = compact_mesh(mesh)
        stats['faces_reconstructed'] = mesh.face_count

        mesh, info = self._run_stage(stats, 'simplify', simplify_service.simplify_mesh, mesh, config.target_faces,
                                     return_info=True)
        stats['faces'] = mesh.face_count
        stats['reached_target'] = info['reached_target']

        faces_uv = self._run_stage(stats, 'atlas', atlas_service.build_face_atlas, mesh,
                                   config.texture_resolution, config.gap_px)
        texture = self._run_stage(stats, 'bake', self._project_and_bake, mesh, faces_uv, points, colors, config,
                                  stats)
        stats['texture_resolution'] = config.texture_resolution

        result = TexturedMesh(mesh, faces_uv, texture, stats)
        logger.info(f"网格化完成: {n} 点 → {mesh.face_count} 面, 纹理 {config.texture_resolution}²")
        return result

    def _estimate_normals(self, points: np.ndarray, k: int) -> np.ndarray:
        k = min(int(k), points.shape[0])
        normals = pointcloud_service.estimate_normals_from_pointcloud(points, k=k)
        return pointcloud_service.orient_outward(points, normals)

    def _project_and_bake(self, mesh: TriMesh, faces_uv, points, colors, config: MeshifyConfig,
                          stats: Dict[str, Any]):
        projections = bake_service.project_points_to_mesh(points, mesh)
        stats['projection_max_distance'] = float(projections[2].max())
        return bake_service.bake_texture(mesh, faces_uv, points, colors, projections, config.bake_k,
                                         config.texture_resolution, config.dilation_steps, stats)


# 创建全局实例
meshify_service = MeshifyService()
