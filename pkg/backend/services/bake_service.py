#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
颜色烘焙服务
点投影到网格最近点; 纹素中心反求三维曲面点, 取最近 k 个投影点的反距离加权平均颜色,
未覆盖的纹素按邻域迭代扩张填充
"""

import logging
from typing import Optional, Tuple

import numpy as np

from config import Config
from models.appearance import Image
from models.base import BindError, EmptyBakeError, ValidationError, as_float_array
from models.geometry import TriMesh
from services.atlas_service import uv_to_pixels
from services.bvh import BVH
from services.pointcloud_service import KnnIndex

logger = logging.getLogger(__name__)

# 反距离权重 1/(d + ε)
IDW_EPSILON = 1e-6
# 纹素中心在三角形内的判定容差(重心坐标)
_INSIDE_EPS = 1e-9

_NEIGHBOR_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


def _barycentric_2d(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> Optional[np.ndarray]:
    """二维重心坐标 (K×3), 三角形退化时返回 None"""
    v0 = b - a
    v1 = c - a
    det = v0[0] * v1[1] - v1[0] * v0[1]
    if abs(det) < 1e-12:
        return None
    d = p - a
    l1 = (d[:, 0] * v1[1] - v1[0] * d[:, 1]) / det
    l2 = (v0[0] * d[:, 1] - d[:, 0] * v0[1]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=1)


class BakeService:
    """投影与烘焙服务"""

    def project_points_to_mesh(self, points, mesh: TriMesh) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        每个点到网格(三角形集合)的最近点

        Returns:
            (面序号 N, 重心坐标 N×3, 距离 N); 距离相同时取序号最小的面
        """
        points = as_float_array(points, (3,), 'points')
        if mesh.face_count == 0:
            raise ValidationError("投影目标网格没有面")
        bvh = BVH('triangle', mesh.vertices[mesh.faces])
        face_index, bary, distance = bvh.closest_points(points)
        logger.debug(f"点投影: {points.shape[0]} 点 → {mesh.face_count} 面, 最大距离 "
                     f"{float(distance.max()) if distance.size else 0.0:.6g}")
        return face_index, bary, distance

    def rasterize(self, mesh: TriMesh, faces_uv: np.ndarray, resolution: int):
        """纹素中心落在某个图集三角形内的纹素: 返回 (行, 列, 面序号, 三维曲面点)"""
        pixels = uv_to_pixels(faces_uv, resolution)
        corners = mesh.vertices[mesh.faces]
        owner = np.full((resolution, resolution), -1, dtype=np.int64)
        rows_all, cols_all, faces_all, positions_all = [], [], [], []
        for f in range(mesh.face_count):
            tri = pixels[f]
            lo = np.floor(tri.min(axis=0) - 0.5).astype(np.int64)
            hi = np.ceil(tri.max(axis=0) - 0.5).astype(np.int64)
            lo = np.clip(lo, 0, resolution - 1)
            hi = np.clip(hi, 0, resolution - 1)
            cols, rows = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1))
            cols = cols.reshape(-1)
            rows = rows.reshape(-1)
            centers = np.stack([cols + 0.5, rows + 0.5], axis=1).astype(np.float64)
            bary = _barycentric_2d(centers, tri[0], tri[1], tri[2])
            if bary is None:
                continue
            inside = np.all(bary >= -_INSIDE_EPS, axis=1) & (owner[rows, cols] < 0)
            if not np.any(inside):
                continue
            rows, cols, bary = rows[inside], cols[inside], bary[inside]
            owner[rows, cols] = f
            rows_all.append(rows)
            cols_all.append(cols)
            faces_all.append(np.full(rows.shape[0], f, dtype=np.int64))
            positions_all.append(bary @ corners[f])
        if not rows_all:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, empty, np.zeros((0, 3))
        return (np.concatenate(rows_all), np.concatenate(cols_all), np.concatenate(faces_all),
                np.concatenate(positions_all))

    @staticmethod
    def dilate(pixels: np.ndarray, covered: np.ndarray, steps: int) -> np.ndarray:
        """未覆盖纹素取已覆盖 8 邻域的平均颜色, 迭代 steps 次; 返回更新后的覆盖标记"""
        h, w = covered.shape
        for _ in range(int(steps)):
            if covered.all():
                break
            total = np.zeros_like(pixels)
            count = np.zeros((h, w))
            padded = np.pad(pixels * covered[..., None], ((1, 1), (1, 1), (0, 0)))
            padded_mask = np.pad(covered.astype(np.float64), 1)
            for dy, dx in _NEIGHBOR_OFFSETS:
                total += padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
                count += padded_mask[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
            grow = (~covered) & (count > 0)
            if not np.any(grow):
                break
            pixels[grow] = total[grow] / count[grow][:, None]
            covered = covered | grow
        return covered

    def bake_texture(self, mesh: TriMesh, faces_uv, points, point_colors, projections, bake_k: int = Config.MESHIFY_BAKE_K,
                     resolution: int = Config.MESHIFY_TEXTURE_RESOLUTION,
                     dilation_steps: int = Config.MESHIFY_DILATION_STEPS, stats: Optional[dict] = None) -> Image:
        """
        烘焙纹理

        Args:
            mesh: 网格
            faces_uv: M×3×2 逐面 UV
            points: N×3 原始点
            point_colors: N×3 或 N×4 线性颜色
            projections: project_points_to_mesh 的结果
            bake_k: 参与平均的近邻数
            resolution: 纹理边长
            stats: 可选, 写入 texels_baked / texels_dilated / atlas_occupancy

        Returns:
            R×R×3 线性图像, 未被覆盖也未被扩张到的纹素为黑色
        """
        points = as_float_array(points, (3,), 'points')
        colors = np.asarray(point_colors, dtype=np.float64)
        if colors.ndim != 2 or colors.shape[1] not in (3, 4) or colors.shape[0] != points.shape[0]:
            raise BindError(f"颜色形状 {colors.shape} 与点数 {points.shape[0]} 不一致")
        faces_uv = np.asarray(faces_uv, dtype=np.float64)
        if faces_uv.shape != (mesh.face_count, 3, 2):
            raise BindError(f"faces_uv 形状 {faces_uv.shape} 与面数 {mesh.face_count} 不一致")
        face_index, bary, _ = projections
        face_index = np.asarray(face_index, dtype=np.int64)
        valid = face_index >= 0
        if points.shape[0] == 0 or not np.any(valid):
            raise EmptyBakeError("没有可用于烘焙的投影点")

        corners = mesh.vertices[mesh.faces[face_index[valid]]]
        projected = np.einsum('kc,kcd->kd', np.asarray(bary)[valid], corners)
        rgb = colors[valid, :3]

        rows, cols, _, positions = self.rasterize(mesh, faces_uv, resolution)
        pixels = np.zeros((resolution, resolution, 3))
        covered = np.zeros((resolution, resolution), dtype=bool)
        if rows.size:
            distance, neighbors = KnnIndex(projected).query(positions, bake_k)
            weights = 1.0 / (distance + IDW_EPSILON)
            texel_colors = np.einsum('tk,tkc->tc', weights, rgb[neighbors]) / weights.sum(axis=1, keepdims=True)
            pixels[rows, cols] = texel_colors
            covered[rows, cols] = True
        baked = int(covered.sum())
        covered = self.dilate(pixels, covered, dilation_steps)
        if stats is not None:
            stats['texels_baked'] = baked
            stats['texels_dilated'] = int(covered.sum()) - baked
            stats['atlas_occupancy'] = baked / float(resolution * resolution)
        logger.info(f"纹理烘焙: {projected.shape[0]} 个投影点, 覆盖纹素 {baked}, "
                    f"扩张后 {int(covered.sum())}/{resolution * resolution}")
        return Image(np.clip(pixels, 0.0, None))


# 创建全局实例
bake_service = BakeService()
