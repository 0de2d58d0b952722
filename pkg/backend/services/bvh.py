#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
包围盒层次结构 (BVH)
三角形与球两类图元; 批量光线按子集遍历, 每条光线的访问顺序与批次组成无关

遍历顺序固定(先左后右), 命中更新使用严格小于, 因此结果逐光线确定
"""

import logging
from typing import Optional, Tuple

import numpy as np

from config import Config

logger = logging.getLogger(__name__)

_TINY = 1e-300


def ray_triangle(origins, directions, v0, v1, v2):
    """Möller–Trumbore, 返回 (t, b1, b2), 未命中为 inf"""
    e1 = v1 - v0
    e2 = v2 - v0
    p = np.cross(directions, e2)
    det = np.sum(e1 * p, axis=-1)
    ok = np.abs(det) > _TINY
    inv = 1.0 / np.where(ok, det, 1.0)
    s = origins - v0
    b1 = np.sum(s * p, axis=-1) * inv
    q = np.cross(s, e1)
    b2 = np.sum(directions * q, axis=-1) * inv
    t = np.sum(e2 * q, axis=-1) * inv
    hit = ok & (b1 >= 0.0) & (b2 >= 0.0) & (b1 + b2 <= 1.0) & (t > 0.0)
    return np.where(hit, t, np.inf), b1, b2


def ray_sphere(origins, directions, centers, radii):
    """射线与球求交, 返回最近的正 t, 未命中为 inf"""
    oc = origins - centers
    b = np.sum(directions * oc, axis=-1)
    c = np.sum(oc * oc, axis=-1) - radii * radii
    disc = b * b - c
    root = np.sqrt(np.maximum(disc, 0.0))
    t0 = -b - root
    t1 = -b + root
    t = np.where(t0 > 0.0, t0, t1)
    return np.where((disc >= 0.0) & (t > 0.0), t, np.inf)


def point_triangle_closest(p, a, b, c):
    """点到三角形最近点的重心坐标 (K×3) 与距离平方

    按顶点、边、内部区域依次判定
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.sum(ab * ap, axis=-1)
    d2 = np.sum(ac * ap, axis=-1)
    bp = p - b
    d3 = np.sum(ab * bp, axis=-1)
    d4 = np.sum(ac * bp, axis=-1)
    cp = p - c
    d5 = np.sum(ab * cp, axis=-1)
    d6 = np.sum(ac * cp, axis=-1)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide='ignore', invalid='ignore'):
        v_ab = d1 / (d1 - d3)
        w_ac = d2 / (d2 - d6)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = 1.0 / (va + vb + vc)
        v_in = vb * denom
        w_in = vc * denom

    conditions = [
        (d1 <= 0.0) & (d2 <= 0.0),
        (d3 >= 0.0) & (d4 <= d3),
        (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0),
        (d6 >= 0.0) & (d5 <= d6),
        (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0),
        (va <= 0.0) & ((d4 - d3) >= 0.0) & ((d5 - d6) >= 0.0),
    ]
    one = np.ones_like(d1)
    zero = np.zeros_like(d1)
    bary_v = np.select(conditions, [zero, one, v_ab, zero, zero, 1.0 - w_bc], default=v_in)
    bary_w = np.select(conditions, [zero, zero, zero, one, w_ac, w_bc], default=w_in)
    bary_u = np.select(conditions, [one, zero, 1.0 - v_ab, zero, 1.0 - w_ac, zero], default=1.0 - v_in - w_in)
    bary = np.stack([bary_u, bary_v, bary_w], axis=-1)
    closest = bary_u[..., None] * a + bary_v[..., None] * b + bary_w[..., None] * c
    diff = p - closest
    return bary, np.sum(diff * diff, axis=-1)


class BVH:
    """图元 BVH

    kind = 'triangle' 时 primitives 为 T×3×3 顶点; kind = 'sphere' 时为 (中心 S×3, 半径 S)
    """

    def __init__(self, kind: str, primitives, leaf_size: Optional[int] = None):
        self.kind = kind
        self.leaf_size = int(leaf_size or Config.BVH_LEAF_SIZE)
        if kind == 'triangle':
            self.triangles = np.asarray(primitives, dtype=np.float64).reshape(-1, 3, 3)
            count = self.triangles.shape[0]
            lo = self.triangles.min(axis=1)
            hi = self.triangles.max(axis=1)
        elif kind == 'sphere':
            centers, radii = primitives
            self.centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
            self.radii = np.asarray(radii, dtype=np.float64).reshape(-1)
            count = self.centers.shape[0]
            lo = self.centers - self.radii[:, None]
            hi = self.centers + self.radii[:, None]
        else:
            raise ValueError(f"未知的图元类型: {kind}")
        self.count = count
        self._build(lo, hi)

    def __len__(self):
        return self.count

    def _build(self, prim_lo: np.ndarray, prim_hi: np.ndarray) -> None:
        """中位数划分构建(沿质心包围盒最长轴), 叶子内图元按原序号排列"""
        node_lo, node_hi, left, right, start, size = [], [], [], [], [], []
        order = []
        if self.count == 0:
            self.node_lo = np.zeros((0, 3))
            self.node_hi = np.zeros((0, 3))
            self.left = self.right = self.start = self.size = np.zeros(0, dtype=np.int64)
            self.order = np.zeros(0, dtype=np.int64)
            return

        centroids = 0.5 * (prim_lo + prim_hi)
        stack = [(0, np.arange(self.count))]
        node_lo.append(None)
        node_hi.append(None)
        left.append(-1)
        right.append(-1)
        start.append(0)
        size.append(0)
        while stack:
            node, ids = stack.pop()
            node_lo[node] = prim_lo[ids].min(axis=0)
            node_hi[node] = prim_hi[ids].max(axis=0)
            if len(ids) <= self.leaf_size:
                ids = np.sort(ids)
                start[node] = len(order)
                size[node] = len(ids)
                order.extend(ids.tolist())
                continue
            c = centroids[ids]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            ranked = ids[np.lexsort((ids, c[:, axis]))]
            half = len(ranked) // 2
            for child_ids, slot in ((ranked[:half], left), (ranked[half:], right)):
                child = len(node_lo)
                node_lo.append(None)
                node_hi.append(None)
                left.append(-1)
                right.append(-1)
                start.append(0)
                size.append(0)
                slot[node] = child
                stack.append((child, child_ids))

        self.node_lo = np.array(node_lo)
        self.node_hi = np.array(node_hi)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.size = np.array(size, dtype=np.int64)
        self.order = np.array(order, dtype=np.int64)
        logger.debug(f"BVH 构建完成: 图元 {self.count}, 节点 {len(node_lo)}")

    def _children(self, node: int):
        # 先压右子节点, 保证左子节点先处理
        return self.right[node], self.left[node]

    def intersect(self, origins: np.ndarray, directions: np.ndarray,
                  t_max: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """最近命中: 返回 (t, 图元序号, b1, b2), 未命中 t = inf, 序号 = -1"""
        n = origins.shape[0]
        best_t = np.full(n, np.inf) if t_max is None else np.asarray(t_max, dtype=np.float64).copy()
        best_prim = np.full(n, -1, dtype=np.int64)
        best_b1 = np.zeros(n)
        best_b2 = np.zeros(n)
        if self.count == 0 or n == 0:
            return np.full(n, np.inf), best_prim, best_b1, best_b2

        safe = np.where(np.abs(directions) < _TINY, np.where(directions < 0.0, -_TINY, _TINY), directions)
        inv_dir = 1.0 / safe
        stack = [(0, np.arange(n))]
        while stack:
            node, idx = stack.pop()
            o = origins[idx]
            inv = inv_dir[idx]
            t0 = (self.node_lo[node] - o) * inv
            t1 = (self.node_hi[node] - o) * inv
            t_near = np.max(np.minimum(t0, t1), axis=1)
            t_far = np.min(np.maximum(t0, t1), axis=1)
            keep = (t_far >= np.maximum(t_near, 0.0)) & (t_near <= best_t[idx])
            idx = idx[keep]
            if idx.size == 0:
                continue
            if self.size[node] > 0:
                o = origins[idx]
                d = directions[idx]
                for prim in self.order[self.start[node]:self.start[node] + self.size[node]]:
                    if self.kind == 'triangle':
                        tri = self.triangles[prim]
                        t, b1, b2 = ray_triangle(o, d, tri[0], tri[1], tri[2])
                    else:
                        t = ray_sphere(o, d, self.centers[prim], self.radii[prim])
                        b1 = b2 = np.zeros_like(t)
                    better = t < best_t[idx]
                    if np.any(better):
                        sel = idx[better]
                        best_t[sel] = t[better]
                        best_prim[sel] = prim
                        best_b1[sel] = b1[better]
                        best_b2[sel] = b2[better]
            else:
                for child in self._children(node):
                    stack.append((child, idx))
        best_t = np.where(best_prim >= 0, best_t, np.inf)
        return best_t, best_prim, best_b1, best_b2

    def closest_points(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """三角形 BVH 上每个查询点的最近图元: 返回 (图元序号, 重心坐标 K×3, 距离)

        距离相同时取序号最小的图元
        """
        if self.kind != 'triangle':
            raise ValueError("最近点查询仅支持三角形 BVH")
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        n = points.shape[0]
        best_d2 = np.full(n, np.inf)
        best_prim = np.full(n, -1, dtype=np.int64)
        best_bary = np.zeros((n, 3))
        if self.count == 0 or n == 0:
            return best_prim, best_bary, np.sqrt(best_d2)

        stack = [(0, np.arange(n))]
        while stack:
            node, idx = stack.pop()
            p = points[idx]
            gap = np.maximum(np.maximum(self.node_lo[node] - p, p - self.node_hi[node]), 0.0)
            lower = np.sum(gap * gap, axis=1)
            idx = idx[lower <= best_d2[idx]]
            if idx.size == 0:
                continue
            if self.size[node] > 0:
                p = points[idx]
                for prim in self.order[self.start[node]:self.start[node] + self.size[node]]:
                    tri = self.triangles[prim]
                    bary, d2 = point_triangle_closest(p, tri[0], tri[1], tri[2])
                    current = best_d2[idx]
                    better = (d2 < current) | ((d2 == current) & (prim < best_prim[idx]))
                    if np.any(better):
                        sel = idx[better]
                        best_d2[sel] = d2[better]
                        best_prim[sel] = prim
                        best_bary[sel] = bary[better]
            else:
                for child in self._children(node):
                    stack.append((child, idx))
        return best_prim, best_bary, np.sqrt(best_d2)
