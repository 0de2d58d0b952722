#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
滚球法 (Ball Pivoting) 曲面重建
半径为 ρ 的球在带法线的点云上滚动, 球同时接触三个点且内部不含其他点时生成三角形

前沿为有向边队列 (先进先出); 种子按点序号从小到大寻找; 多半径时从小到大依次处理并复用前沿
"""

import logging
import math
from collections import deque
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from models.base import BindError, EmptyReconstructionError, ValidationError, as_float_array
from models.geometry import TriMesh

logger = logging.getLogger(__name__)

# 空球判定容差(相对半径)
EMPTY_BALL_TOLERANCE = 1e-9
# 旋转角比较容差
_ANGLE_EPS = 1e-9


def ball_centers(a: np.ndarray, b: np.ndarray, c: np.ndarray, radius: float):
    """三角形 (a, b, c) 法线一侧、半径为 radius 且过三个顶点的球心

    返回 (球心 K×3, 单位法线 K×3, 是否有效 K)
    """
    ab = b - a
    ac = c - a
    n = np.cross(ab, ac)
    n2 = np.sum(n * n, axis=-1)
    ok = n2 > 1e-30
    safe = np.where(ok, n2, 1.0)
    offset = (np.sum(ac * ac, axis=-1)[..., None] * np.cross(n, ab)
              + np.sum(ab * ab, axis=-1)[..., None] * np.cross(ac, n)) / (2.0 * safe[..., None])
    circumcenter = a + offset
    r2 = np.sum(offset * offset, axis=-1)
    ok &= r2 <= radius * radius
    h = np.sqrt(np.maximum(radius * radius - r2, 0.0))
    unit = n / np.sqrt(safe)[..., None]
    return circumcenter + h[..., None] * unit, unit, ok


class _Front:
    """网格前沿状态: 有向边占用、无向边计数、顶点开放边计数"""

    def __init__(self, n: int):
        self.faces: List[Tuple[int, int, int]] = []
        self.face_radius: List[float] = []
        self.face_keys = set()
        self.directed = set()
        self.edge_count: Dict[Tuple[int, int], int] = {}
        self.open_edges = np.zeros(n, dtype=np.int64)
        self.used = np.zeros(n, dtype=bool)
        # 曾进入前沿的有向边 (a, b, 对角顶点), 按创建顺序
        self.history: List[Tuple[int, int, int]] = []
        self.queue = deque()

    def count(self, a: int, b: int) -> int:
        return self.edge_count.get((a, b) if a < b else (b, a), 0)

    def can_add(self, tri: Tuple[int, int, int], new_edges: Sequence[Tuple[int, int]]) -> bool:
        if tuple(sorted(tri)) in self.face_keys:
            return False
        for a, b in new_edges:
            if (a, b) in self.directed or self.count(a, b) >= 2:
                return False
        return True

    def vertex_available(self, k: int) -> bool:
        """未使用的点或仍在前沿上的点"""
        return not self.used[k] or self.open_edges[k] > 0

    def add_face(self, tri: Tuple[int, int, int], radius: float, center: np.ndarray) -> None:
        a, b, c = tri
        self.faces.append(tri)
        self.face_radius.append(radius)
        self.face_keys.add(tuple(sorted(tri)))
        for u, v in ((a, b), (b, c), (c, a)):
            self.directed.add((u, v))
            key = (u, v) if u < v else (v, u)
            count = self.edge_count.get(key, 0) + 1
            self.edge_count[key] = count
            if count == 1:
                self.open_edges[u] += 1
                self.open_edges[v] += 1
            else:
                self.open_edges[u] -= 1
                self.open_edges[v] -= 1
        self.used[list(tri)] = True
        for u, v, opposite in ((a, b, c), (b, c, a), (c, a, b)):
            if self.count(u, v) == 1:
                self.history.append((u, v, opposite))
                self.queue.append((u, v, opposite, center))


class BallPivotService:
    """滚球法重建服务"""

    def _ball_is_empty(self, tree: cKDTree, center: np.ndarray, radius: float, exclude: Sequence[int]) -> bool:
        inside = tree.query_ball_point(center, radius * (1.0 - EMPTY_BALL_TOLERANCE))
        return all(i in exclude for i in inside)

    def _find_seed(self, points, normals, tree, front: _Front, radius: float, start: int):
        """从 start 开始按序号寻找种子三角形, 返回 (三角形, 球心, 下一个起点)"""
        n = points.shape[0]
        for i in range(start, n):
            if front.used[i]:
                continue
            candidates = [j for j in tree.query_ball_point(points[i], 2.0 * radius) if j != i and not front.used[j]]
            if len(candidates) < 2:
                continue
            distance = np.linalg.norm(points[candidates] - points[i], axis=1)
            candidates = [candidates[t] for t in np.lexsort((candidates, distance))]
            for x in range(len(candidates)):
                for y in range(x + 1, len(candidates)):
                    j, k = candidates[x], candidates[y]
                    tri = (i, j, k)
                    center, unit, ok = ball_centers(points[i], points[j], points[k], radius)
                    if not ok:
                        continue
                    if float(np.dot(unit, normals[i])) < 0.0:
                        tri = (i, k, j)
                        center, unit, ok = ball_centers(points[i], points[k], points[j], radius)
                    if np.any(normals[list(tri)] @ unit <= 0.0):
                        continue
                    if not self._ball_is_empty(tree, center, radius, tri):
                        continue
                    return tri, center, i
        return None, None, n

    def _pivot(self, points, normals, tree, front: _Front, edge, radius: float):
        """绕前沿边 (i → j) 滚动, 返回 (新顶点, 球心) 或 None"""
        i, j, opposite, center = edge
        pi, pj = points[i], points[j]
        mid = 0.5 * (pi + pj)
        axis = pj - pi
        axis /= np.linalg.norm(axis)
        candidates = np.array([k for k in tree.query_ball_point(mid, 2.0 * radius)
                               if k not in (i, j, opposite)], dtype=np.int64)
        if candidates.size == 0:
            return None
        pk = points[candidates]
        # 新三角形 (j, i, k) 与原三角形 (i, j, o) 方向一致
        centers, unit, ok = ball_centers(pj[None, :], pi[None, :], pk, radius)
        vertex_normals = normals[i] + normals[j] + normals[candidates]
        ok &= np.sum(unit * vertex_normals, axis=1) > 0.0
        if not np.any(ok):
            return None
        candidates, centers = candidates[ok], centers[ok]

        u0 = center - mid
        u0 -= np.dot(u0, axis) * axis
        u1 = centers - mid
        u1 -= np.outer(u1 @ axis, axis)
        angle = np.arctan2(np.cross(u0[None, :], u1) @ axis, u1 @ u0)
        angle = np.where(angle < -_ANGLE_EPS, angle + 2.0 * math.pi, np.maximum(angle, 0.0))
        # 按 (角度, 序号) 排序, 角度相差不超过容差视为相同
        order = np.lexsort((candidates, np.round(angle / _ANGLE_EPS)))
        for t in order:
            k = int(candidates[t])
            if self._ball_is_empty(tree, centers[t], radius, (i, j, k)):
                return k, centers[t]
        return None

    def _expand(self, points, normals, tree, front: _Front, radius: float) -> int:
        """处理前沿直到队列为空, 返回新增面数"""
        added = 0
        while front.queue:
            edge = front.queue.popleft()
            i, j = edge[0], edge[1]
            if front.count(i, j) != 1:
                continue
            result = self._pivot(points, normals, tree, front, edge, radius)
            if result is None:
                continue
            k, center = result
            tri = (j, i, k)
            if not front.vertex_available(k) or not front.can_add(tri, ((i, k), (k, j))):
                continue
            front.add_face(tri, radius, center)
            added += 1
        return added

    def ball_pivot(self, points, normals, radii: Union[float, Sequence[float]],
                   return_radii: bool = False):
        """
        滚球法重建

        Args:
            points: N×3 点
            normals: N×3 一致朝向的单位法线
            radii: 球半径(单个或递增列表)
            return_radii: 同时返回每个面对应的球半径

        Returns:
            TriMesh(顶点即输入点), 或 (TriMesh, 面半径数组)
        """
        points = as_float_array(points, (3,), 'points')
        normals = as_float_array(normals, (3,), 'normals')
        if normals.shape[0] != points.shape[0]:
            raise BindError(f"法线数量 {normals.shape[0]} 与点数 {points.shape[0]} 不一致")
        radii = [float(radii)] if np.isscalar(radii) else [float(r) for r in radii]
        if not radii or any(not math.isfinite(r) or r <= 0 for r in radii):
            raise ValidationError(f"球半径必须为正数: {radii}")
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValidationError(f"球半径必须严格递增: {radii}")
        lengths = np.linalg.norm(normals, axis=1, keepdims=True)
        normals = normals / np.where(lengths > 0.0, lengths, 1.0)

        tree = cKDTree(points)
        front = _Front(points.shape[0])
        for step, radius in enumerate(radii):
            before = len(front.faces)
            if step > 0:
                self._reopen_boundary(points, tree, front, radius)
                self._expand(points, normals, tree, front, radius)
            start = 0
            while True:
                tri, center, start = self._find_seed(points, normals, tree, front, radius, start)
                if tri is None:
                    break
                front.add_face(tri, radius, center)
                self._expand(points, normals, tree, front, radius)
            logger.info(f"滚球重建: 半径 {radius:g} 新增 {len(front.faces) - before} 个面")

        if not front.faces:
            raise EmptyReconstructionError(f"任何半径下都找不到种子三角形: {radii}", radii=radii)
        mesh = TriMesh(points, np.array(front.faces, dtype=np.int64), normals=normals)
        if return_radii:
            return mesh, np.array(front.face_radius)
        return mesh

    def _reopen_boundary(self, points, tree, front: _Front, radius: float) -> None:
        """换用更大半径时, 按创建顺序把仍为边界的边重新放入前沿"""
        seen = set()
        for a, b, opposite in front.history:
            if (a, b) in seen or front.count(a, b) != 1:
                continue
            seen.add((a, b))
            center, _, ok = ball_centers(points[a], points[b], points[opposite], radius)
            if ok and self._ball_is_empty(tree, center, radius, (a, b, opposite)):
                front.queue.append((a, b, opposite, center))


# 创建全局实例
ball_pivot_service = BallPivotService()
