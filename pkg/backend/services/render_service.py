#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
渲染服务
确定性单向路径追踪: 颜色、深度、反照率、alpha 四个通道, 支持阴影捕捉面

- 每一处次表面交点做直接光照采样 (NEE), 面光源与球光源与 BSDF 采样按幂启发式 MIS 合并
- 从第 3 次弹射起使用俄罗斯轮盘赌
- 图像按 32×32 分块并行, 随机数以 (seed, 像素, 样本) 为键, 输出与线程数无关
"""

import copy
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import psutil

from config import Config
from models.appearance import encode_srgb8
from models.camera import PerspectiveCamera
from models.geometry import PointCloud, TriMesh
from models.light import BackgroundLight
from models.primitives import PrimitiveSpec, tessellate
from models.render_settings import RenderOutput, RenderSettings
from services import sampler
from services.bvh import BVH
from services.light_service import light_service
from services.shading_service import MaterialTable, shading_service

logger = logging.getLogger(__name__)

# 随机维度偏移(每次弹射内)
_DIM_BSDF = 0
_DIM_LOBE = 2
_DIM_RR = 3
_DIM_TRANSPARENT = 16
_DIM_CATCHER = 256
_DIM_LIGHT = 4096
_DIMS_PER_LIGHT = 64

# 命中类型
MISS, TRIANGLE, SPHERE, CATCHER = 0, 1, 2, 3


def tone_map(linear: np.ndarray) -> np.ndarray:
    """线性 RGB → 8 位 sRGB: 截断到 [0,1], sRGB 传递函数, 四舍五入"""
    return encode_srgb8(linear)


def _offset(position: np.ndarray, normal: np.ndarray, sign: float = 1.0) -> np.ndarray:
    """沿法线偏移光线起点, 避免自相交"""
    eps = 1e-6 * (1.0 + np.max(np.abs(position), axis=1))
    return position + sign * normal * eps[:, None]


def _normalize(v: np.ndarray) -> np.ndarray:
    length = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(length > 0.0, length, 1.0)


@dataclass
class _RawHit:
    t: np.ndarray
    kind: np.ndarray
    prim: np.ndarray
    b1: np.ndarray
    b2: np.ndarray


SURFACE_FIELDS = ('position', 'geometric_normal', 'shading_normal', 'base', 'row', 'emission', 'alpha',
                  'albedo')


@dataclass
class Surface:
    """交点着色数据(法线已朝向入射光线一侧)"""
    position: np.ndarray
    geometric_normal: np.ndarray
    shading_normal: np.ndarray
    base: np.ndarray
    row: np.ndarray
    emission: np.ndarray
    alpha: np.ndarray
    albedo: np.ndarray

    @classmethod
    def empty(cls, count: int) -> 'Surface':
        return cls(np.zeros((count, 3)), np.zeros((count, 3)), np.zeros((count, 3)), np.zeros((count, 4)),
                   np.zeros(count, dtype=np.int64), np.zeros((count, 3)), np.zeros(count), np.zeros((count, 3)))

    def assign(self, index: np.ndarray, other: 'Surface', mask: np.ndarray) -> None:
        for name in SURFACE_FIELDS:
            getattr(self, name)[index] = getattr(other, name)[mask]

    def take(self, mask: np.ndarray) -> 'Surface':
        return Surface(*(getattr(self, name)[mask] for name in SURFACE_FIELDS))


class _TriangleGroup:
    """一组三角形(实体或阴影捕捉面)及其来源信息"""

    def __init__(self):
        self.triangles: List[np.ndarray] = []
        self.object: List[np.ndarray] = []
        self.face: List[np.ndarray] = []
        self.row: List[np.ndarray] = []
        self.instance: List[np.ndarray] = []

    def append(self, triangles, object_id, faces, rows, instances) -> None:
        self.triangles.append(triangles)
        self.object.append(np.full(len(triangles), object_id, dtype=np.int64))
        self.face.append(np.asarray(faces, dtype=np.int64))
        self.row.append(np.asarray(rows, dtype=np.int64))
        self.instance.append(np.asarray(instances, dtype=np.int64))

    def build(self) -> None:
        def cat(parts, shape):
            return np.concatenate(parts) if parts else np.zeros(shape, dtype=np.int64)
        self.triangles = np.concatenate(self.triangles) if self.triangles else np.zeros((0, 3, 3))
        self.object = cat(self.object, 0)
        self.face = cat(self.face, 0)
        self.row = cat(self.row, 0)
        self.instance = cat(self.instance, 0)
        self.bvh = BVH('triangle', self.triangles)


class PreparedScene:
    """渲染期只读场景: 世界坐标三角形/球 BVH、材质表、光源列表"""

    def __init__(self, scene, camera):
        self.camera = camera
        self.materials = MaterialTable()
        all_lights = list(scene.lights.values())
        self.lights = [light for light in all_lights if not isinstance(light, BackgroundLight)]
        self.background_lights = [light for light in all_lights if isinstance(light, BackgroundLight)]
        self.background = np.zeros(3)
        for light in self.background_lights:
            self.background = self.background + light.radiance
        self.emitters = [light for light in self.lights if light_service.hittable(light)]

        self.objects = []
        self.world_normals: Dict[int, np.ndarray] = {}
        self.instance_colors: Dict[int, np.ndarray] = {}
        self.solid = _TriangleGroup()
        self.catcher = _TriangleGroup()
        sphere_centers, sphere_radii, sphere_object, sphere_instance, sphere_row = [], [], [], [], []
        opaque = True
        unit_cube = tessellate(PrimitiveSpec('cube', {'size': 2.0}))

        for renderable in scene.renderables.values():
            object_id = len(self.objects)
            self.objects.append(renderable)
            if isinstance(renderable, TriMesh):
                renderable.check_binding()
                if renderable.face_count == 0:
                    continue
                vertices = renderable.world_vertices()
                materials, index = renderable.materials_table()
                rows = np.array([self.materials.add(m) for m in materials], dtype=np.int64)[index]
                normals = renderable.world_normals()
                if normals is not None:
                    self.world_normals[object_id] = _normalize(normals)
                group = self.catcher if renderable.shadow_catcher else self.solid
                group.append(vertices[renderable.faces], object_id, np.arange(renderable.face_count),
                             rows, np.full(renderable.face_count, -1))
                opaque &= all(m.alpha >= 1.0 for m in materials)
                colors = renderable.appearance.colors
                if getattr(colors, 'kind', None) == 'uniform':
                    opaque &= colors.color[3] >= 1.0
                else:
                    opaque = False
            elif isinstance(renderable, PointCloud):
                row = self.materials.add(renderable.material)
                centers = renderable.world_points()
                colors = renderable.instance_colors()
                self.instance_colors[object_id] = colors
                opaque &= renderable.material.alpha >= 1.0 and bool(np.all(colors[:, 3] >= 1.0))
                count = renderable.point_count
                if renderable.point_shape == 'sphere':
                    sphere_centers.append(centers)
                    sphere_radii.append(np.full(count, renderable.point_radius))
                    sphere_object.append(np.full(count, object_id, dtype=np.int64))
                    sphere_instance.append(np.arange(count, dtype=np.int64))
                    sphere_row.append(np.full(count, row, dtype=np.int64))
                else:
                    # 立方体点基元: 世界坐标轴对齐, 边长 2r
                    box = unit_cube.vertices[unit_cube.faces] * renderable.point_radius
                    triangles = (centers[:, None, None, :] + box[None]).reshape(-1, 3, 3)
                    faces_per_box = unit_cube.face_count
                    self.solid.append(triangles, object_id, np.tile(np.arange(faces_per_box), count),
                                      np.full(count * faces_per_box, row),
                                      np.repeat(np.arange(count), faces_per_box))

        self.solid.build()
        self.catcher.build()
        if sphere_centers:
            self.sphere_centers = np.concatenate(sphere_centers)
            self.sphere_radii = np.concatenate(sphere_radii)
            self.sphere_object = np.concatenate(sphere_object)
            self.sphere_instance = np.concatenate(sphere_instance)
            self.sphere_row = np.concatenate(sphere_row)
        else:
            self.sphere_centers = np.zeros((0, 3))
            self.sphere_radii = np.zeros(0)
            self.sphere_object = self.sphere_instance = self.sphere_row = np.zeros(0, dtype=np.int64)
        self.spheres = BVH('sphere', (self.sphere_centers, self.sphere_radii))
        self.opaque = opaque
        self.materials.freeze()

    @property
    def has_catchers(self) -> bool:
        return len(self.catcher.bvh) > 0

    def intersect(self, origins, directions, catchers: bool = False, t_max=None) -> _RawHit:
        """最近交点(实体三角形、点球、可选阴影捕捉面)"""
        t, prim, b1, b2 = self.solid.bvh.intersect(origins, directions, t_max)
        kind = np.where(prim >= 0, TRIANGLE, MISS)
        t_s, prim_s, _, _ = self.spheres.intersect(origins, directions, t_max)
        closer = t_s < t
        t = np.where(closer, t_s, t)
        prim = np.where(closer, prim_s, prim)
        kind = np.where(closer, SPHERE, kind)
        if catchers and self.has_catchers:
            t_c, prim_c, c1, c2 = self.catcher.bvh.intersect(origins, directions, t_max)
            closer = t_c < t
            t = np.where(closer, t_c, t)
            prim = np.where(closer, prim_c, prim)
            b1 = np.where(closer, c1, b1)
            b2 = np.where(closer, c2, b2)
            kind = np.where(closer, CATCHER, kind)
        return _RawHit(t, kind, prim, b1, b2)

    def surface(self, hit: _RawHit, origins, directions) -> Surface:
        """命中点的几何与外观数据(仅对命中光线有意义)"""
        k = hit.t.shape[0]
        surf = Surface.empty(k)
        for kind, group in ((TRIANGLE, self.solid), (CATCHER, self.catcher)):
            sel = np.flatnonzero(hit.kind == kind)
            if sel.size:
                self._triangle_surface(surf, sel, hit, group)
        sel = np.flatnonzero(hit.kind == SPHERE)
        if sel.size:
            prim = hit.prim[sel]
            position = origins[sel] + directions[sel] * hit.t[sel, None]
            normal = (position - self.sphere_centers[prim]) / self.sphere_radii[prim, None]
            surf.position[sel] = position
            surf.geometric_normal[sel] = normal
            surf.shading_normal[sel] = normal
            surf.row[sel] = self.sphere_row[prim]
            for object_id in np.unique(self.sphere_object[prim]):
                sub = self.sphere_object[prim] == object_id
                colors = self.instance_colors[int(object_id)][self.sphere_instance[prim[sub]]]
                surf.base[sel[sub]] = colors
                surf.emission[sel[sub]] = colors[:, :3] * self.objects[int(object_id)].emission_strength

        hit_rows = np.flatnonzero(hit.kind != MISS)
        if hit_rows.size:
            params = self.materials.gather(surf.row[hit_rows])
            base = surf.base[hit_rows]
            albedo = base[:, :3].copy()
            base[:, :3] = base[:, :3] * params['base_modulation']
            wire = params['wire_thickness'] > 0.0
            tri_kinds = (hit.kind[hit_rows] == TRIANGLE) | (hit.kind[hit_rows] == CATCHER)
            wire &= tri_kinds
            if np.any(wire):
                wire_idx = hit_rows[wire]
                triangles = np.zeros((wire_idx.size, 3, 3))
                for kind, group in ((TRIANGLE, self.solid), (CATCHER, self.catcher)):
                    in_group = hit.kind[wire_idx] == kind
                    if np.any(in_group):
                        triangles[in_group] = group.triangles[hit.prim[wire_idx[in_group]]]
                bary = np.stack([1.0 - hit.b1[wire_idx] - hit.b2[wire_idx], hit.b1[wire_idx],
                                 hit.b2[wire_idx]], axis=1)
                factor = shading_service.wireframe_factor_triangles(triangles, bary,
                                                                    params['wire_thickness'][wire]) > 0.0
                on_wire = np.flatnonzero(wire)[factor]
                base[on_wire, :3] = params['wire_color'][on_wire]
                albedo[on_wire] = params['wire_color'][on_wire]
                surf.row[hit_rows[on_wire]] = params['wire_row'][on_wire]
                params = self.materials.gather(surf.row[hit_rows])
            surf.base[hit_rows] = base
            surf.albedo[hit_rows] = albedo
            surf.emission[hit_rows] = surf.emission[hit_rows] + params['emission']
            surf.alpha[hit_rows] = params['alpha'] * base[:, 3]

            # 双面着色: 法线朝向光线来向
            ng = surf.geometric_normal[hit_rows]
            flip = np.sum(ng * directions[hit_rows], axis=1) > 0.0
            ng = np.where(flip[:, None], -ng, ng)
            ns = surf.shading_normal[hit_rows]
            ns = np.where((np.sum(ns * ng, axis=1) < 0.0)[:, None], -ns, ns)
            surf.geometric_normal[hit_rows] = ng
            surf.shading_normal[hit_rows] = ns
        return surf

    def _triangle_surface(self, surf: Surface, sel, hit: _RawHit, group: _TriangleGroup) -> None:
        prim = hit.prim[sel]
        tri = group.triangles[prim]
        b1 = hit.b1[sel]
        b2 = hit.b2[sel]
        b0 = 1.0 - b1 - b2
        bary = np.stack([b0, b1, b2], axis=1)
        surf.position[sel] = np.einsum('kc,kcd->kd', bary, tri)
        ng = _normalize(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]))
        surf.geometric_normal[sel] = ng
        surf.shading_normal[sel] = ng
        surf.row[sel] = group.row[prim]
        objects = group.object[prim]
        for object_id in np.unique(objects):
            sub = objects == object_id
            renderable = self.objects[int(object_id)]
            rows = sel[sub]
            if isinstance(renderable, TriMesh):
                faces = group.face[prim[sub]]
                surf.base[rows] = shading_service.shade_color(renderable, faces, bary[sub])
                normals = self.world_normals.get(int(object_id))
                if normals is not None:
                    corner = normals[renderable.faces[faces]]
                    surf.shading_normal[rows] = _normalize(np.einsum('kc,kcd->kd', bary[sub], corner))
            else:
                colors = self.instance_colors[int(object_id)][group.instance[prim[sub]]]
                surf.base[rows] = colors
                surf.emission[rows] = colors[:, :3] * renderable.emission_strength


class _TileContext:
    """单个分块的计数器"""

    def __init__(self):
        self.rays = 0


class RenderService:
    """渲染服务"""

    def tone_map(self, linear) -> np.ndarray:
        return tone_map(linear)

    # ---------- 光线解析 ----------

    def _resolve(self, prepared: PreparedScene, origins, directions, keys, dim: int, catchers: bool,
                 stochastic: bool, ctx: _TileContext):
        """沿光线找到第一个参与散射的表面

        alpha < 1 的表面以概率 1 - alpha 被穿过(stochastic=False 时只穿过 alpha = 0 的表面);
        阴影捕捉面被记录后穿过. 返回 (是否命中, 表面, 是否经过捕捉面, 捕捉面位置, 捕捉面法线)
        """
        k = origins.shape[0]
        found = np.zeros(k, dtype=bool)
        surf = Surface.empty(k)
        caught = np.zeros(k, dtype=bool)
        catcher_position = np.zeros((k, 3))
        catcher_normal = np.zeros((k, 3))
        o = origins.copy()
        active = np.arange(k)
        for step in range(Config.MAX_TRANSPARENT_STEPS + 1):
            if active.size == 0:
                break
            d = directions[active]
            hit = prepared.intersect(o[active], d, catchers=catchers)
            ctx.rays += active.size
            current = prepared.surface(hit, o[active], d)
            is_catcher = hit.kind == CATCHER
            first_catch = is_catcher & ~caught[active]
            if np.any(first_catch):
                rows = active[first_catch]
                caught[rows] = True
                catcher_position[rows] = current.position[first_catch]
                catcher_normal[rows] = current.geometric_normal[first_catch]
            is_surface = (hit.kind == TRIANGLE) | (hit.kind == SPHERE)
            if stochastic:
                u = sampler.uniform(keys[active], dim + step)
                passes = u >= current.alpha
            else:
                passes = current.alpha <= 0.0
            if step == Config.MAX_TRANSPARENT_STEPS:
                passes = np.zeros_like(passes)
            stop = is_surface & ~passes
            if np.any(stop):
                found[active[stop]] = True
                surf.assign(active[stop], current, stop)
            go_on = (is_surface & passes) | is_catcher
            if step == Config.MAX_TRANSPARENT_STEPS:
                go_on = np.zeros_like(go_on)
            o[active[go_on]] = _offset(current.position[go_on], current.geometric_normal[go_on], -1.0)
            active = active[go_on]
        return found, surf, caught, catcher_position, catcher_normal

    def visible(self, prepared: PreparedScene, origins, directions, distance, keys, dim: int,
                ctx: Optional[_TileContext] = None) -> np.ndarray:
        """阴影光线可见性; 半透明遮挡物按 alpha 随机阻挡, 阴影捕捉面不遮挡"""
        ctx = ctx or _TileContext()
        k = origins.shape[0]
        visible = np.ones(k, dtype=bool)
        remaining = np.where(np.isfinite(distance), distance * (1.0 - 1e-7), np.inf)
        o = origins.copy()
        active = np.arange(k)
        for step in range(Config.MAX_TRANSPARENT_STEPS + 1):
            if active.size == 0:
                break
            d = directions[active]
            hit = prepared.intersect(o[active], d, catchers=False, t_max=remaining[active])
            ctx.rays += active.size
            blocked_any = hit.kind != MISS
            if prepared.opaque or step == Config.MAX_TRANSPARENT_STEPS:
                visible[active[blocked_any]] = False
                break
            surf = prepared.surface(hit, o[active], d)
            u = sampler.uniform(keys[active], dim + step)
            blocked = blocked_any & (u < surf.alpha)
            visible[active[blocked]] = False
            go_on = blocked_any & ~blocked
            remaining[active[go_on]] = remaining[active[go_on]] - hit.t[go_on]
            o[active[go_on]] = _offset(surf.position[go_on], surf.geometric_normal[go_on], -1.0)
            active = active[go_on]
        return visible

    # ---------- 阴影捕捉面 ----------

    def trace_shadow_catcher(self, prepared: PreparedScene, positions, normals, keys, dim: int = 0,
                             ctx: Optional[_TileContext] = None) -> Tuple[np.ndarray, np.ndarray]:
        """阴影捕捉面的一个样本: 返回 (背景颜色 × (1 - s), alpha = s 的通道均值)"""
        shadow = self.shadow_factor(prepared, positions, normals, keys, dim, ctx)
        color = prepared.background[None, :] * (1.0 - shadow)
        return color, shadow.mean(axis=1)

    def shadow_factor(self, prepared: PreparedScene, positions, normals, keys, dim: int = 0,
                      ctx: Optional[_TileContext] = None) -> np.ndarray:
        """阴影捕捉面上的逐通道阴影系数 s (K×3)

        L_occ 为考虑遮挡的直接光照, L_free 为忽略遮挡的直接光照 (白色 Lambert 表面);
        s = 1 - L_occ/L_free, L_free = 0 时 s = 0. 背景光以均匀球面采样参与(环境光遮蔽)
        """
        ctx = ctx or _TileContext()
        keys = np.asarray(keys, dtype=np.uint64).reshape(-1)
        positions = np.atleast_2d(positions)
        normals = np.atleast_2d(normals)
        k = positions.shape[0]
        l_free = np.zeros((k, 3))
        l_occ = np.zeros((k, 3))
        origins = _offset(positions, normals)
        for index, light in enumerate(prepared.lights + prepared.background_lights):
            base_dim = dim + index * _DIMS_PER_LIGHT
            sample = light_service.sample_direct(light, origins, sampler.uniform2(keys, base_dim))
            cos = np.maximum(np.sum(sample.direction * normals, axis=1), 0.0)
            contribution = sample.radiance_over_pdf * (cos / np.pi)[:, None]
            l_free += contribution
            lit = cos > 0.0
            vis = np.ones(k, dtype=bool)
            if sample.needs_shadow_ray and np.any(lit):
                rows = np.flatnonzero(lit)
                vis[rows] = self.visible(prepared, origins[rows], sample.direction[rows], sample.distance[rows],
                                         keys[rows], base_dim + 2, ctx)
            l_occ += contribution * vis[:, None]
        with np.errstate(divide='ignore', invalid='ignore'):
            shadow = np.where(l_free > 0.0, 1.0 - l_occ / l_free, 0.0)
        return np.clip(shadow, 0.0, 1.0)

    # ---------- 路径追踪 ----------

    def _direct_lighting(self, prepared, surf: Surface, params, wo, keys, bounce, ctx) -> np.ndarray:
        """对所有非背景光源各取一个样本"""
        k = surf.position.shape[0]
        result = np.zeros((k, 3))
        origins = _offset(surf.position, surf.geometric_normal)
        ns = surf.shading_normal
        ng = surf.geometric_normal
        for index, light in enumerate(prepared.lights):
            base_dim = sampler.bounce_dim(bounce, _DIM_LIGHT + index * _DIMS_PER_LIGHT)
            sample = light_service.sample_direct(light, origins, sampler.uniform2(keys, base_dim))
            cos = np.sum(ns * sample.direction, axis=1)
            ok = (cos > 0.0) & (np.sum(ng * sample.direction, axis=1) > 0.0) \
                & np.any(sample.radiance_over_pdf > 0.0, axis=1)
            rows = np.flatnonzero(ok)
            if rows.size == 0:
                continue
            sub = {key: value[rows] for key, value in params.items()}
            wi = sample.direction[rows]
            f = shading_service.eval_params(sub, ns[rows], wo[rows], wi, surf.base[rows])
            weight = np.ones(rows.size)
            has_pdf = sample.pdf[rows] > 0.0
            if np.any(has_pdf):
                bsdf_pdf = shading_service.pdf_params(sub, ns[rows], wo[rows], wi, surf.base[rows])
                weight = np.where(has_pdf, sampler.power_heuristic(sample.pdf[rows], bsdf_pdf), 1.0)
            contribution = f * (cos[rows] * weight)[:, None] * sample.radiance_over_pdf[rows]
            if sample.needs_shadow_ray:
                vis = self.visible(prepared, origins[rows], wi, sample.distance[rows], keys[rows],
                                   base_dim + 2, ctx)
                contribution = contribution * vis[:, None]
            result[rows] += contribution
        return result

    def _trace_paths(self, prepared: PreparedScene, settings: RenderSettings, origins, directions, keys,
                     ctx: _TileContext) -> Tuple[np.ndarray, np.ndarray]:
        """路径追踪一批相机光线, 返回 (线性辐亮度 K×3, alpha K)"""
        k = origins.shape[0]
        radiance = np.zeros((k, 3))
        alpha = np.zeros(k)
        throughput = np.ones((k, 3))
        prev_pdf = np.zeros(k)
        ray_o = origins.copy()
        ray_d = directions.copy()
        active = np.arange(k)

        for bounce in range(settings.max_bounces + 1):
            if active.size == 0:
                break
            o = ray_o[active]
            d = ray_d[active]
            primary = bounce == 0
            found, surf, caught, catcher_pos, catcher_n = self._resolve(
                prepared, o, d, keys[active], sampler.bounce_dim(bounce, _DIM_TRANSPARENT),
                catchers=primary, stochastic=True, ctx=ctx)

            if primary:
                alpha[active] = found.astype(np.float64)
                if np.any(caught):
                    rows = np.flatnonzero(caught)
                    shadow = self.shadow_factor(prepared, catcher_pos[rows], catcher_n[rows], keys[active[rows]],
                                                sampler.bounce_dim(0, _DIM_CATCHER), ctx)
                    # 捕捉面之后的辐亮度按逐通道阴影系数衰减
                    throughput[active[rows]] *= 1.0 - shadow
                    alpha[active[rows]] = np.where(found[rows], 1.0, shadow.mean(axis=1))

            # BSDF 光线命中面光源 / 球光源
            t_geom = np.where(found, np.sum((surf.position - o) * d, axis=1), np.inf)
            if not primary and prepared.emitters:
                t_e, emitted, pdf_e = light_service.intersect_emitters(prepared.emitters, o, d, t_geom)
                hit_light = np.isfinite(t_e)
                if np.any(hit_light):
                    weight = sampler.power_heuristic(prev_pdf[active], pdf_e)
                    radiance[active[hit_light]] += (throughput[active] * emitted * weight[:, None])[hit_light]
                    found = found & ~hit_light
                    escaped_mask = ~found & ~hit_light
                else:
                    escaped_mask = ~found
            else:
                escaped_mask = ~found

            escaped = active[escaped_mask]
            radiance[escaped] += throughput[escaped] * prepared.background

            rows = np.flatnonzero(found)
            if rows.size == 0:
                break
            idx = active[rows]
            surf = surf.take(rows)
            radiance[idx] += throughput[idx] * surf.emission
            if bounce == settings.max_bounces:
                break

            params = prepared.materials.gather(surf.row)
            wo = -d[rows]
            path_keys = keys[idx]
            radiance[idx] += throughput[idx] * self._direct_lighting(prepared, surf, params, wo, path_keys,
                                                                     bounce, ctx)

            u_dir = sampler.uniform2(path_keys, sampler.bounce_dim(bounce, _DIM_BSDF))
            u_lobe = sampler.uniform(path_keys, sampler.bounce_dim(bounce, _DIM_LOBE))
            wi, f, pdf = shading_service.sample_params(params, surf.shading_normal, wo, surf.base, u_lobe, u_dir)
            cos = np.sum(surf.shading_normal * wi, axis=1)
            valid = (pdf > 0.0) & (cos > 0.0) & (np.sum(surf.geometric_normal * wi, axis=1) > 0.0)
            scale = np.where(valid[:, None], f * (np.maximum(cos, 0.0) / np.where(valid, pdf, 1.0))[:, None], 0.0)
            throughput[idx] *= scale
            prev_pdf[idx] = np.where(valid, pdf, 0.0)

            alive = valid & np.any(throughput[idx] > 0.0, axis=1)
            if bounce >= Config.RUSSIAN_ROULETTE_START:
                q = np.minimum(0.95, np.max(throughput[idx], axis=1))
                u_rr = sampler.uniform(path_keys, sampler.bounce_dim(bounce, _DIM_RR))
                survive = u_rr < q
                throughput[idx] /= np.where(survive & (q > 0.0), q, 1.0)[:, None]
                alive &= survive

            ray_o[idx] = _offset(surf.position, surf.geometric_normal)
            ray_d[idx] = wi
            active = idx[alive]
        return radiance, alpha

    # ---------- 中心光线通道 ----------

    def _center_passes(self, prepared: PreparedScene, origins, directions, ctx: _TileContext):
        """深度与反照率: 像素中心光线, 只穿过 alpha = 0 的表面, 阴影捕捉面不可见"""
        found, surf, _, _, _ = self._resolve(prepared, origins, directions, None, 0, catchers=False,
                                             stochastic=False, ctx=ctx)
        depth = np.where(found, np.sum((surf.position - origins) * directions, axis=1), 0.0)
        albedo = np.where(found[:, None], surf.albedo, 0.0)
        return np.maximum(depth, 0.0), albedo

    # ---------- 分块 ----------

    def _render_tile(self, prepared: PreparedScene, settings: RenderSettings, tile, buffers) -> int:
        x0, y0, tw, th = tile
        camera = prepared.camera
        ctx = _TileContext()
        ys, xs = np.mgrid[y0:y0 + th, x0:x0 + tw]
        xs = xs.reshape(-1)
        ys = ys.reshape(-1)
        npix = xs.size
        pixel_ids = (ys * camera.width + xs).astype(np.uint64)

        if 'color' in settings.passes:
            spp = settings.samples_per_pixel
            chunk = max(1, Config.MAX_RAYS_PER_BATCH // npix)
            accum = np.zeros((npix, 3))
            alpha_accum = np.zeros(npix)
            for s0 in range(0, spp, chunk):
                ns = min(chunk, spp - s0)
                keys = sampler.path_keys(settings.seed, np.repeat(pixel_ids, ns),
                                         np.tile(np.arange(s0, s0 + ns, dtype=np.uint64), npix))
                jitter = sampler.uniform2(keys, 0)
                origins, directions = camera.generate_rays(np.repeat(xs, ns) + jitter[:, 0],
                                                           np.repeat(ys, ns) + jitter[:, 1])
                radiance, alpha = self._trace_paths(prepared, settings, origins, directions, keys, ctx)
                accum += radiance.reshape(npix, ns, 3).sum(axis=1)
                alpha_accum += alpha.reshape(npix, ns).sum(axis=1)
            buffers['linear'][ys, xs] = accum / spp
            buffers['alpha'][ys, xs] = alpha_accum / spp

        if 'depth' in settings.passes or 'albedo' in settings.passes:
            origins, directions = camera.generate_rays(xs + 0.5, ys + 0.5)
            depth, albedo = self._center_passes(prepared, origins, directions, ctx)
            buffers['depth'][ys, xs] = depth
            buffers['albedo'][ys, xs] = albedo
        return ctx.rays

    @staticmethod
    def _tiles(width: int, height: int):
        size = Config.TILE_SIZE
        return [(x, y, min(size, width - x), min(size, height - y))
                for y in range(0, height, size) for x in range(0, width, size)]

    @staticmethod
    def _camera_for(camera, resolution):
        """按分辨率覆盖复制相机; 透视相机保持水平视场角不变"""
        if resolution is None or tuple(resolution) == camera.resolution:
            return camera
        result = copy.copy(camera)
        if isinstance(camera, PerspectiveCamera):
            result.focal_px = camera.focal_px * resolution[0] / camera.width
        result.set_resolution(resolution)
        return result

    # ---------- 入口 ----------

    def prepare(self, scene, settings: Optional[RenderSettings] = None) -> PreparedScene:
        settings = settings or scene.settings
        camera = self._camera_for(scene.require_camera(), settings.resolution)
        return PreparedScene(scene, camera)

    def render(self, scene, settings: Optional[RenderSettings] = None,
               threads: Optional[int] = None) -> RenderOutput:
        """渲染场景

        相同的 (场景, 设置) 在任意线程数下输出逐位一致
        """
        settings = settings or scene.settings
        settings.validate()
        started = time.perf_counter()
        process = psutil.Process()
        rss_before = process.memory_info().rss
        prepared = self.prepare(scene, settings)
        camera = prepared.camera
        width, height = camera.width, camera.height
        workers = Config.resolve_threads(threads)

        buffers = {
            'linear': np.zeros((height, width, 3)),
            'alpha': np.zeros((height, width)),
            'depth': np.zeros((height, width)),
            'albedo': np.zeros((height, width, 3)),
        }
        tiles = self._tiles(width, height)
        logger.info(f"开始渲染: {width}×{height}, spp={settings.samples_per_pixel}, "
                    f"max_bounces={settings.max_bounces}, 通道={','.join(settings.passes)}, "
                    f"线程={workers}, 分块={len(tiles)}")
        if workers == 1:
            rays = sum(self._render_tile(prepared, settings, tile, buffers) for tile in tiles)
        else:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                rays = sum(executor.map(lambda tile: self._render_tile(prepared, settings, tile, buffers), tiles))

        output = RenderOutput(width=width, height=height)
        if 'color' in settings.passes:
            alpha = np.clip(buffers['alpha'], 0.0, 1.0)
            color = np.empty((height, width, 4), dtype=np.uint8)
            color[..., :3] = tone_map(buffers['linear'])
            color[..., 3] = np.floor(alpha * 255.0 + 0.5).astype(np.uint8)
            output.color = color
            output.alpha = alpha
            output.linear = buffers['linear']
        if 'depth' in settings.passes:
            output.depth = buffers['depth']
        if 'albedo' in settings.passes:
            output.albedo = tone_map(buffers['albedo'])

        elapsed = time.perf_counter() - started
        output.stats = {
            'resolution': [width, height],
            'samples_per_pixel': settings.samples_per_pixel,
            'rays': int(rays),
            'elapsed_seconds': round(elapsed, 4),
            'threads': workers,
            'tiles': len(tiles),
            'peak_rss_mb': round(max(rss_before, process.memory_info().rss) / 2 ** 20, 2),
        }
        logger.info(f"渲染完成: 光线 {rays}, 用时 {elapsed:.2f} 秒")
        return output


# 创建全局实例
render_service = RenderService()
