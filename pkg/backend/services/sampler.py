#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
确定性随机数与采样变换

随机数由 (seed, 像素序号, 样本序号, 维度) 经 splitmix64 散列得到,
与线程数和调度顺序无关
"""

import math

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_DIM_STRIDE = np.uint64(0xD1B54A32D192ED03)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV_2_53 = 1.0 / float(1 << 53)

# 每次弹射预留的随机维度编号区间
DIMS_PER_BOUNCE = 1 << 16


def splitmix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 终结函数(按元素, 溢出回绕)"""
    with np.errstate(over='ignore'):
        z = np.asarray(x, dtype=np.uint64) + _GOLDEN
        z = (z ^ (z >> _S30)) * _MIX1
        z = (z ^ (z >> _S27)) * _MIX2
        return z ^ (z >> _S31)


def path_keys(seed: int, pixel_index: np.ndarray, sample_index: np.ndarray) -> np.ndarray:
    """每条路径的随机流键"""
    with np.errstate(over='ignore'):
        base = splitmix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0]
        k = splitmix64(np.asarray(pixel_index, dtype=np.uint64) ^ base)
        return splitmix64(k + np.asarray(sample_index, dtype=np.uint64))


def uniform(keys: np.ndarray, dim: int) -> np.ndarray:
    """键对应随机流中第 dim 维的 [0,1) 均匀数"""
    with np.errstate(over='ignore'):
        h = splitmix64(keys + np.uint64(dim) * _DIM_STRIDE)
    return (h >> _S11).astype(np.float64) * _INV_2_53


def uniform2(keys: np.ndarray, dim: int) -> np.ndarray:
    return np.stack([uniform(keys, dim), uniform(keys, dim + 1)], axis=-1)


def bounce_dim(bounce: int, offset: int) -> int:
    """第 bounce 次弹射的第 offset 个维度(前两维留给像素抖动)"""
    return 2 + bounce * DIMS_PER_BOUNCE + offset


# ---------- 采样变换 ----------

def orthonormal_basis(n: np.ndarray):
    """以 n 为 z 轴的正交基 (Duff 等人的无分支构造)"""
    sign = np.where(n[..., 2] >= 0.0, 1.0, -1.0)
    a = -1.0 / (sign + n[..., 2])
    b = n[..., 0] * n[..., 1] * a
    t = np.stack([1.0 + sign * n[..., 0] * n[..., 0] * a, sign * b, -sign * n[..., 0]], axis=-1)
    s = np.stack([b, sign + n[..., 1] * n[..., 1] * a, -n[..., 1]], axis=-1)
    return t, s


def to_world(local: np.ndarray, n: np.ndarray) -> np.ndarray:
    t, s = orthonormal_basis(n)
    return local[..., 0:1] * t + local[..., 1:2] * s + local[..., 2:3] * n


def cosine_hemisphere(u: np.ndarray) -> np.ndarray:
    """余弦加权半球采样(局部坐标, z 向上), pdf = cosθ/π"""
    r = np.sqrt(u[..., 0])
    phi = 2.0 * math.pi * u[..., 1]
    z = np.sqrt(np.maximum(0.0, 1.0 - u[..., 0]))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def uniform_sphere(u: np.ndarray) -> np.ndarray:
    """单位球面均匀采样, pdf = 1/(4π)"""
    z = 1.0 - 2.0 * u[..., 0]
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = 2.0 * math.pi * u[..., 1]
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def uniform_cone(u: np.ndarray, cos_max: np.ndarray) -> np.ndarray:
    """绕 z 轴的立体角均匀锥采样, pdf = 1/(2π(1-cos_max))"""
    cos_t = 1.0 - u[..., 0] * (1.0 - cos_max)
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
    phi = 2.0 * math.pi * u[..., 1]
    return np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=-1)


def uniform_disk(u: np.ndarray) -> np.ndarray:
    """单位圆盘面积均匀采样(极坐标)"""
    r = np.sqrt(u[..., 0])
    phi = 2.0 * math.pi * u[..., 1]
    return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)


def power_heuristic(pdf_a: np.ndarray, pdf_b: np.ndarray) -> np.ndarray:
    """MIS 幂启发式 (β = 2)"""
    a2 = pdf_a * pdf_a
    b2 = pdf_b * pdf_b
    denom = a2 + b2
    return np.where(denom > 0.0, a2 / np.where(denom > 0.0, denom, 1.0), 0.0)
