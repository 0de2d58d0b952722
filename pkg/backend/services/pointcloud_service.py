#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
点云工具服务
基于近邻协方差估计法线; 根据法线与相机方向为点着色(背向点淡化)
"""

import logging
from typing import Optional, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from config import Config
from models.base import BindError, InsufficientPointsError, ValidationError, as_float_array
from models.geometry import PointCloud
from models.rotation import vec3

logger = logging.getLogger(__name__)

# 两个最小特征值之差不超过该值时视为退化邻域
DEGENERATE_EIGEN_GAP = 1e-9


class KnnIndex:
    """精确 k 近邻索引 (kd 树)

    查询结果按距离升序, 距离相同按点序号升序
    """

    def __init__(self, points: np.ndarray):
        self.points = as_float_array(points, (3,), 'points')
        self._tree = cKDTree(self.points)

    def __len__(self):
        return self.points.shape[0]

    def query(self, queries: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
        """返回 (距离 Q×k', 序号 Q×k'), k' = min(k, N)"""
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        k = min(int(k), len(self))
        if k < 1:
            return np.zeros((queries.shape[0], 0)), np.zeros((queries.shape[0], 0), dtype=np.int64)
        distances, index = self._tree.query(queries, k=k)
        distances = np.asarray(distances, dtype=np.float64).reshape(queries.shape[0], k)
        index = np.asarray(index, dtype=np.int64).reshape(queries.shape[0], k)
        # 先按序号再按距离稳定排序, 得到 (距离, 序号) 字典序
        order = np.argsort(index, axis=1, kind='stable')
        distances = np.take_along_axis(distances, order, axis=1)
        index = np.take_along_axis(index, order, axis=1)
        order = np.argsort(distances, axis=1, kind='stable')
        return np.take_along_axis(distances, order, axis=1), np.take_along_axis(index, order, axis=1)


def _canonical_sign(normals: np.ndarray) -> np.ndarray:
    """无参考方向时: 绝对值最大的分量取正"""
    major = np.argmax(np.abs(normals), axis=1)
    sign = np.sign(normals[np.arange(normals.shape[0]), major])
    return normals * np.where(sign < 0.0, -1.0, 1.0)[:, None]


class PointCloudService:
    """点云工具服务"""

    def estimate_normals_from_pointcloud(self, points, k: int = Config.NORMAL_ESTIMATION_K,
                                         orientation_reference=None,
                                         return_flags: bool = False) -> Union[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
        """
        估计每个点的单位法线

        法线为 k 近邻(含自身)协方差最小特征值对应的特征向量;
        给出 orientation_reference 时翻转使 n·(reference − p) ≥ 0

        Args:
            points: N×3 点坐标
            k: 近邻数 (≥ 3)
            orientation_reference: 可选的朝向参考点
            return_flags: 同时返回退化邻域标记

        Returns:
            N×3 法线, 或 (法线, 退化标记)
        """
        points = as_float_array(points, (3,), 'points')
        k = int(k)
        if k < 3:
            raise ValidationError(f"近邻数 k 必须 ≥ 3: {k}")
        n = points.shape[0]
        if n < k:
            raise InsufficientPointsError(f"点数 {n} 少于近邻数 {k}", points=n, k=k)
        if np.all(points == points[0]):
            raise ValidationError("所有点重合, 无法估计法线")

        _, neighbors = KnnIndex(points).query(points, k)
        local = points[neighbors]
        centered = local - local.mean(axis=1, keepdims=True)
        covariance = np.einsum('nki,nkj->nij', centered, centered) / k
        eigenvalues, eigenvectors = np.linalg.eigh(covariance)
        normals = eigenvectors[:, :, 0]
        normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
        degenerate = (eigenvalues[:, 1] - eigenvalues[:, 0]) <= DEGENERATE_EIGEN_GAP

        if orientation_reference is not None:
            reference = vec3(orientation_reference)
            facing = np.sum(normals * (reference - points), axis=1)
            normals = np.where((facing < 0.0)[:, None], -normals, normals)
        else:
            normals = _canonical_sign(normals)

        if np.any(degenerate):
            logger.warning(f"法线估计: {int(degenerate.sum())}/{n} 个点的邻域退化, 法线方向不可靠")
        logger.debug(f"法线估计完成: {n} 点, k={k}")
        if return_flags:
            return normals, degenerate
        return normals

    def orient_outward(self, points, normals) -> np.ndarray:
        """无参考点时的一致朝向: 背离点云质心; 与质心方向正交的法线保持规范符号"""
        points = as_float_array(points, (3,), 'points')
        normals = as_float_array(normals, (3,), 'normals')
        offset = points - points.mean(axis=0)
        facing = np.sum(normals * offset, axis=1)
        scale = max(float(np.abs(offset).max()), 1.0)
        flip = facing < -1e-9 * scale
        keep = np.abs(facing) <= 1e-9 * scale
        oriented = np.where(flip[:, None], -normals, normals)
        oriented[keep] = _canonical_sign(normals[keep])
        return oriented

    def approximate_colors_from_camera(self, points, normals, camera_position, front_colors=(0.8, 0.8, 0.8),
                                       back_color=Config.BACK_COLOR, back_alpha: float = Config.BACK_ALPHA) -> np.ndarray:
        """
        按相机方向为点着色

        n·(camera − p) < 0 的点视为背向, 使用 (back_color, back_alpha); 正向点保留原颜色, alpha 为 1

        Returns:
            N×4 RGBA
        """
        points = as_float_array(points, (3,), 'points')
        normals = as_float_array(normals, (3,), 'normals')
        if normals.shape[0] != points.shape[0]:
            raise BindError(f"法线数量 {normals.shape[0]} 与点数 {points.shape[0]} 不一致")
        front = np.asarray(front_colors, dtype=np.float64)
        if front.ndim == 1:
            front = front[None, :]
        if front.ndim != 2 or front.shape[1] not in (3, 4):
            raise BindError(f"颜色形状无效: {front.shape}")
        if front.shape[0] not in (1, points.shape[0]):
            raise BindError(f"颜色数量 {front.shape[0]} 必须为 1 或点数 {points.shape[0]}")
        if not 0.0 <= float(back_alpha) <= 1.0:
            raise ValidationError(f"back_alpha 必须在 [0,1] 内: {back_alpha}")
        back = np.asarray(back_color, dtype=np.float64).reshape(-1)[:3]

        facing = np.sum(normals * (vec3(camera_position) - points), axis=1)
        back_facing = facing < 0.0
        result = np.empty((points.shape[0], 4))
        result[:, :3] = np.broadcast_to(front[:, :3], (points.shape[0], 3))
        result[:, 3] = 1.0
        result[back_facing, :3] = back
        result[back_facing, 3] = float(back_alpha)
        logger.debug(f"相机着色: 背向点 {int(back_facing.sum())}/{points.shape[0]}")
        return result

    def colorize_pointcloud(self, cloud: PointCloud, camera_position, back_color=Config.BACK_COLOR,
                            back_alpha: float = Config.BACK_ALPHA) -> np.ndarray:
        """为场景中的点云按相机位置重新着色(世界坐标), 无法线时先估计"""
        points = cloud.world_points()
        if cloud.normals is None:
            normals = self.estimate_normals_from_pointcloud(points, orientation_reference=camera_position)
        else:
            normals = cloud.pose.apply_directions(cloud.normals)
        colors = self.approximate_colors_from_camera(points, normals, camera_position,
                                                     cloud.colors, back_color, back_alpha)
        cloud.set_colors(colors)
        return colors


# 创建全局实例
pointcloud_service = PointCloudService()
