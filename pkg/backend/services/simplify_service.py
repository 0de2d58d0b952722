#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
网格简化服务
二次误差度量 (QEM) 边折叠: 每个顶点累积相邻面平面的二次型, 按误差从小到大折叠边

拒绝以下折叠:
- 违反链接条件(会产生非流形结构)
- 相邻面法线旋转超过 90° 或面退化
"""

import heapq
import logging
from typing import Dict, List, Set, Tuple

import numpy as np

from models.base import InvalidTargetError
from models.geometry import TriMesh

logger = logging.getLogger(__name__)

# 最小目标面数
MIN_TARGET_FACES = 4
# 二次型矩阵条件数上限, 超过时改用端点/中点候选
MAX_QUADRIC_CONDITION = 1e10
# 边界约束平面权重
BOUNDARY_WEIGHT = 1.0


def face_planes(vertices: np.ndarray, faces: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """每个面的单位法线与平面常数 d (n·x + d = 0)"""
    v = vertices[faces]
    n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    length = np.linalg.norm(n, axis=1, keepdims=True)
    n = n / np.where(length > 0.0, length, 1.0)
    d = -np.sum(n * v[:, 0], axis=1)
    return n, d


def plane_quadric(n: np.ndarray, d: float, weight: float = 1.0) -> np.ndarray:
    p = np.append(n, d)
    return weight * np.outer(p, p)


class _EdgeCollapser:
    """边折叠状态"""

    def __init__(self, vertices: np.ndarray, faces: np.ndarray):
        self.vertices = vertices.copy()
        self.faces = faces.copy()
        self.face_alive = np.ones(len(faces), dtype=bool)
        self.vertex_alive = np.zeros(len(vertices), dtype=bool)
        self.vertex_alive[np.unique(faces)] = True
        self.version = np.zeros(len(vertices), dtype=np.int64)
        self.vertex_faces: List[Set[int]] = [set() for _ in range(len(vertices))]
        for f, tri in enumerate(faces):
            for v in tri:
                self.vertex_faces[v].add(f)
        self.quadrics = self._initial_quadrics()
        self.alive_faces = len(faces)
        self.heap = []

    def _initial_quadrics(self) -> np.ndarray:
        n, d = face_planes(self.vertices, self.faces)
        quadrics = np.zeros((len(self.vertices), 4, 4))
        planes = np.concatenate([n, d[:, None]], axis=1)
        per_face = np.einsum('fi,fj->fij', planes, planes)
        for corner in range(3):
            np.add.at(quadrics, self.faces[:, corner], per_face)

        # 边界边加入垂直约束平面, 避免边界收缩
        edge_faces: Dict[Tuple[int, int], List[int]] = {}
        for f, tri in enumerate(self.faces):
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                edge_faces.setdefault((min(a, b), max(a, b)), []).append(f)
        for (a, b), owners in edge_faces.items():
            if len(owners) != 1:
                continue
            edge = self.vertices[b] - self.vertices[a]
            normal = np.cross(edge, n[owners[0]])
            length = np.linalg.norm(normal)
            if length == 0.0:
                continue
            normal /= length
            q = plane_quadric(normal, -float(normal @ self.vertices[a]), BOUNDARY_WEIGHT * float(edge @ edge))
            quadrics[a] += q
            quadrics[b] += q
        return quadrics

    def neighbors(self, v: int) -> Set[int]:
        result = set()
        for f in self.vertex_faces[v]:
            result.update(int(x) for x in self.faces[f])
        result.discard(v)
        return result

    @staticmethod
    def _error(q: np.ndarray, x: np.ndarray) -> float:
        h = np.append(x, 1.0)
        return float(h @ q @ h)

    def optimal(self, a: int, b: int) -> Tuple[float, np.ndarray]:
        """折叠 (a, b) 的最小误差与位置"""
        q = self.quadrics[a] + self.quadrics[b]
        candidates = [self.vertices[a], self.vertices[b], 0.5 * (self.vertices[a] + self.vertices[b])]
        matrix = q[:3, :3]
        if np.linalg.cond(matrix) < MAX_QUADRIC_CONDITION:
            candidates.insert(0, np.linalg.solve(matrix, -q[:3, 3]))
        errors = [self._error(q, x) for x in candidates]
        best = int(np.argmin(errors))
        return max(errors[best], 0.0), candidates[best]

    def push(self, a: int, b: int) -> None:
        a, b = min(a, b), max(a, b)
        cost, _ = self.optimal(a, b)
        heapq.heappush(self.heap, (cost, a, b, int(self.version[a]), int(self.version[b])))

    def link_condition(self, a: int, b: int) -> bool:
        shared_faces = self.vertex_faces[a] & self.vertex_faces[b]
        shared_vertices = self.neighbors(a) & self.neighbors(b)
        return len(shared_vertices) == len(shared_faces)

    def flips(self, a: int, b: int, position: np.ndarray) -> bool:
        """折叠后相邻面是否翻转(旋转 > 90°)或退化"""
        for v in (a, b):
            for f in self.vertex_faces[v]:
                tri = self.faces[f]
                if a in tri and b in tri:
                    continue
                corners = self.vertices[tri].copy()
                old = np.cross(corners[1] - corners[0], corners[2] - corners[0])
                corners[int(np.flatnonzero(tri == v)[0])] = position
                new = np.cross(corners[1] - corners[0], corners[2] - corners[0])
                if np.linalg.norm(new) <= 1e-12 * max(np.linalg.norm(old), 1e-300):
                    return True
                if float(old @ new) <= 0.0:
                    return True
        return False

    def collapse(self, a: int, b: int, position: np.ndarray) -> None:
        """b 并入 a"""
        for f in list(self.vertex_faces[b]):
            tri = self.faces[f]
            if a in tri:
                self.face_alive[f] = False
                self.alive_faces -= 1
                for v in tri:
                    self.vertex_faces[v].discard(f)
            else:
                tri[tri == b] = a
                self.vertex_faces[a].add(f)
        self.vertex_faces[b] = set()
        self.vertex_alive[b] = False
        self.vertices[a] = position
        self.quadrics[a] += self.quadrics[b]
        self.version[a] += 1
        self.version[b] += 1
        for v in sorted(self.neighbors(a)):
            self.push(a, v)


class SimplifyService:
    """网格简化服务"""

    def simplify_mesh(self, mesh: TriMesh, target_faces: int, return_info: bool = False):
        """
        QEM 边折叠简化到不超过 target_faces 个面

        目标不小于当前面数时原样返回输入; 无法继续折叠时返回已达到的结果并标记

        Returns:
            TriMesh, 或 (TriMesh, {'faces', 'target_faces', 'reached_target'})
        """
        target_faces = int(target_faces)
        if target_faces < MIN_TARGET_FACES:
            raise InvalidTargetError(f"目标面数必须 ≥ {MIN_TARGET_FACES}: {target_faces}", target_faces=target_faces)
        if target_faces >= mesh.face_count:
            info = {'faces': mesh.face_count, 'target_faces': target_faces, 'reached_target': True}
            return (mesh, info) if return_info else mesh

        state = _EdgeCollapser(mesh.vertices, mesh.faces)
        for a, b in mesh.edges():
            state.push(int(a), int(b))

        collapses = 0
        while state.alive_faces > target_faces and state.heap:
            cost, a, b, va, vb = heapq.heappop(state.heap)
            if not (state.vertex_alive[a] and state.vertex_alive[b]):
                continue
            if va != state.version[a] or vb != state.version[b]:
                continue
            if not state.link_condition(a, b):
                continue
            _, position = state.optimal(a, b)
            if state.flips(a, b, position):
                continue
            state.collapse(a, b, position)
            collapses += 1

        reached = state.alive_faces <= target_faces
        if not reached:
            logger.warning(f"网格简化未达到目标: 剩余 {state.alive_faces} 面, 目标 {target_faces}")

        faces = state.faces[state.face_alive]
        used = np.unique(faces)
        remap = np.full(len(state.vertices), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        result = TriMesh(state.vertices[used], remap[faces], position=mesh.pose.position,
                         rotation=mesh.pose.rotation)
        logger.info(f"网格简化: {mesh.face_count} → {result.face_count} 面 ({collapses} 次折叠)")
        if return_info:
            return result, {'faces': result.face_count, 'target_faces': target_faces, 'reached_target': reached}
        return result


# 创建全局实例
simplify_service = SimplifyService()
