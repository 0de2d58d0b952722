#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
逐面纹理图集
每个正方形格子放两个直角三角形(左上/右下), 格子按行排列在 R×R 纹理上

像素坐标 x 向右, y 向下(第 0 行为图像顶部); 输出 UV: u = x/R, v = 1 − y/R
三角形距格子边界 (g+1)/2 像素, 两个三角形斜边沿 x+y 方向相距 2(g+1),
保守光栅化后不同三角形的像素足迹互不相交且间隔不小于 g
"""

import logging
import math
from typing import Tuple

import numpy as np

from models.base import AtlasCapacityError, ValidationError
from models.geometry import TriMesh

logger = logging.getLogger(__name__)

# 格子边长下限 = 2·gap + MIN_CELL_MARGIN
MIN_CELL_MARGIN = 3
# 两条直角边长度比的下限(保持三维形状比例时)
MIN_LEG_RATIO = 0.5


def grid_size(face_count: int) -> int:
    """每行格子数 n = ceil(sqrt(ceil(M/2)))"""
    cells = (int(face_count) + 1) // 2
    return max(1, math.isqrt(cells - 1) + 1) if cells > 0 else 1


def minimal_resolution(face_count: int, gap_px: int) -> int:
    """容纳 face_count 个面的最小纹理分辨率"""
    return grid_size(face_count) * (2 * int(gap_px) + MIN_CELL_MARGIN)


class AtlasService:
    """纹理图集服务"""

    def layout(self, face_count: int, resolution: int, gap_px: int) -> Tuple[int, int]:
        """返回 (每行格子数, 格子边长像素), 容量不足时报错"""
        if face_count < 1:
            raise ValidationError("图集至少需要一个面")
        if gap_px < 1:
            raise ValidationError(f"gap_px 必须 ≥ 1: {gap_px}")
        n = grid_size(face_count)
        cell = int(resolution) // n
        if cell < 2 * gap_px + MIN_CELL_MARGIN:
            minimal = minimal_resolution(face_count, gap_px)
            raise AtlasCapacityError(f"纹理分辨率 {resolution} 放不下 {face_count} 个面 (间隔 {gap_px}), "
                                     f"最小分辨率为 {minimal}", minimal_resolution=minimal)
        return n, cell

    def _leg_lengths(self, mesh: TriMesh, right: np.ndarray, leg: float) -> Tuple[np.ndarray, np.ndarray]:
        """按直角顶点两侧三维边长之比缩短较短的直角边"""
        faces = mesh.faces
        rows = np.arange(faces.shape[0])
        v = mesh.vertices[faces]
        vr = v[rows, right]
        e1 = np.linalg.norm(v[rows, (right + 1) % 3] - vr, axis=1)
        e2 = np.linalg.norm(v[rows, (right + 2) % 3] - vr, axis=1)
        longest = np.maximum(np.maximum(e1, e2), 1e-300)
        leg1 = leg * np.clip(e1 / longest, MIN_LEG_RATIO, 1.0)
        leg2 = leg * np.clip(e2 / longest, MIN_LEG_RATIO, 1.0)
        return leg1, leg2

    def build_face_pixels(self, mesh: TriMesh, resolution: int, gap_px: int) -> np.ndarray:
        """每个面在图集上的像素坐标三角形 (M×3×2, 与面的角点顺序一致)"""
        m = mesh.face_count
        n, cell = self.layout(m, resolution, gap_px)
        inset = 0.5 * (gap_px + 1)
        leg = float(cell - 2 * gap_px - 2)

        # 最长边的对顶点放在直角处
        v = mesh.vertices[mesh.faces]
        edge_lengths = np.stack([np.linalg.norm(v[:, 2] - v[:, 1], axis=1),
                                 np.linalg.norm(v[:, 0] - v[:, 2], axis=1),
                                 np.linalg.norm(v[:, 1] - v[:, 0], axis=1)], axis=1)
        right = np.argmax(edge_lengths, axis=1)
        leg1, leg2 = self._leg_lengths(mesh, right, leg)

        index = np.arange(m)
        slot = index % 2
        cell_index = index // 2
        x0 = (cell_index % n) * cell
        y0 = (cell_index // n) * cell
        # 0 号位: 直角在左上, 直角边向右/向下; 1 号位: 直角在右下, 直角边向左/向上
        sign = np.where(slot == 0, 1.0, -1.0)
        corner_x = np.where(slot == 0, x0 + inset, x0 + cell - inset)
        corner_y = np.where(slot == 0, y0 + inset, y0 + cell - inset)

        pixels = np.empty((m, 3, 2))
        rows = np.arange(m)
        pixels[rows, right] = np.stack([corner_x, corner_y], axis=1)
        pixels[rows, (right + 1) % 3] = np.stack([corner_x + sign * leg1, corner_y], axis=1)
        pixels[rows, (right + 2) % 3] = np.stack([corner_x, corner_y + sign * leg2], axis=1)
        return pixels

    def build_face_atlas(self, mesh: TriMesh, texture_resolution: int, gap_px: int) -> np.ndarray:
        """
        生成逐面 UV (faces_uv, M×3×2), 所有坐标在 [0,1] 内

        Raises:
            AtlasCapacityError: 分辨率不足, minimal_resolution 为可容纳的最小分辨率
        """
        pixels = self.build_face_pixels(mesh, texture_resolution, gap_px)
        uv = pixels_to_uv(pixels, texture_resolution)
        logger.info(f"图集生成: {mesh.face_count} 个面, 分辨率 {texture_resolution}, 间隔 {gap_px}px")
        return uv


def pixels_to_uv(pixels: np.ndarray, resolution: int) -> np.ndarray:
    uv = np.empty_like(pixels, dtype=np.float64)
    uv[..., 0] = pixels[..., 0] / resolution
    uv[..., 1] = 1.0 - pixels[..., 1] / resolution
    return np.clip(uv, 0.0, 1.0)


def uv_to_pixels(uv: np.ndarray, resolution: int) -> np.ndarray:
    uv = np.asarray(uv, dtype=np.float64)
    pixels = np.empty_like(uv)
    pixels[..., 0] = uv[..., 0] * resolution
    pixels[..., 1] = (1.0 - uv[..., 1]) * resolution
    return pixels


# 创建全局实例
atlas_service = AtlasService()
