#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
几何文件读写服务
PLY (ASCII / 二进制小端) 点云与网格, OBJ 网格 (含 vt 纹理坐标与 .mtl 纹理引用)
"""

import logging
import os
import re
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from models.appearance import Appearance, FileTextureColors, UVMap, VertexColors
from models.base import MeshIOError, SceneRenderError
from models.geometry import PointCloud, TriMesh

logger = logging.getLogger(__name__)

PLY_TYPES = {
    'char': 'i1', 'int8': 'i1', 'uchar': 'u1', 'uint8': 'u1',
    'short': 'i2', 'int16': 'i2', 'ushort': 'u2', 'uint16': 'u2',
    'int': 'i4', 'int32': 'i4', 'uint': 'u4', 'uint32': 'u4',
    'float': 'f4', 'float32': 'f4', 'double': 'f8', 'float64': 'f8',
}
FACE_INDEX_NAMES = ('vertex_indices', 'vertex_index')


@dataclass
class PlyProperty:
    name: str
    dtype: str
    count_dtype: Optional[str] = None

    @property
    def is_list(self) -> bool:
        return self.count_dtype is not None


@dataclass
class PlyElement:
    name: str
    count: int
    properties: List[PlyProperty]


@dataclass
class PlyData:
    """PLY 文件内容: colors 为 [0,1] 的 N×4, faces 为三角化后的 M×3 (没有 face 元素时为 None)"""
    points: np.ndarray
    normals: Optional[np.ndarray] = None
    colors: Optional[np.ndarray] = None
    faces: Optional[np.ndarray] = None


def _fan(polygon: List[int]) -> List[Tuple[int, int, int]]:
    """多边形扇形三角化 (0, i, i+1), 保持绕序"""
    return [(polygon[0], polygon[i], polygon[i + 1]) for i in range(1, len(polygon) - 1)]


def _format_float(value: float) -> str:
    return repr(float(value))


class MeshIOService:
    """几何文件读写服务"""

    # ---------- PLY ----------

    def _parse_ply_header(self, content: bytes, path: str):
        marker = re.search(rb'end_header\r?\n', content)
        if not content.startswith(b'ply') or marker is None:
            raise MeshIOError(f"PLY 文件头格式错误: {path}")
        try:
            lines = content[:marker.start()].decode('ascii').splitlines()
        except UnicodeDecodeError as e:
            raise MeshIOError(f"PLY 文件头包含非 ASCII 字符: {path}") from e

        fmt = None
        elements: List[PlyElement] = []
        for number, line in enumerate(lines[1:], start=2):
            parts = line.split()
            if not parts or parts[0] in ('comment', 'obj_info'):
                continue
            try:
                if parts[0] == 'format':
                    fmt = parts[1]
                elif parts[0] == 'element':
                    elements.append(PlyElement(parts[1], int(parts[2]), []))
                elif parts[0] == 'property':
                    if not elements:
                        raise ValueError("property 出现在 element 之前")
                    if parts[1] == 'list':
                        prop = PlyProperty(parts[4], PLY_TYPES[parts[3]], PLY_TYPES[parts[2]])
                    else:
                        prop = PlyProperty(parts[2], PLY_TYPES[parts[1]])
                    elements[-1].properties.append(prop)
                else:
                    raise ValueError(f"未知的关键字 {parts[0]}")
            except (IndexError, KeyError, ValueError) as e:
                raise MeshIOError(f"PLY 文件头第 {number} 行格式错误: {line!r} ({e})") from e
            if elements and elements[-1].count < 0:
                raise MeshIOError(f"PLY 元素数量为负: {line!r}")

        if fmt == 'binary_big_endian':
            raise MeshIOError("不支持大端序 PLY (binary_big_endian)")
        if fmt not in ('ascii', 'binary_little_endian'):
            raise MeshIOError(f"PLY 格式无效: {fmt}")
        return fmt, elements, marker.end()

    def _read_ascii(self, body: bytes, elements: List[PlyElement]):
        tokens = body.split()
        position = 0
        data = {}

        def take(n: int):
            nonlocal position
            if position + n > len(tokens):
                raise MeshIOError("PLY 数据被截断: 数据少于文件头声明的数量")
            chunk = tokens[position:position + n]
            position += n
            return chunk

        for element in elements:
            if not any(p.is_list for p in element.properties):
                width = len(element.properties)
                chunk = take(element.count * width)
                try:
                    table = np.array(chunk, dtype=np.float64).reshape(element.count, width)
                except ValueError as e:
                    raise MeshIOError(f"PLY 元素 {element.name} 含有非数值数据") from e
                data[element.name] = {p.name: table[:, i] for i, p in enumerate(element.properties)}
                continue
            columns = {p.name: [] for p in element.properties}
            try:
                for _ in range(element.count):
                    for prop in element.properties:
                        if prop.is_list:
                            n = int(take(1)[0])
                            if n < 0:
                                raise MeshIOError(f"PLY 元素 {element.name} 列表长度为负")
                            columns[prop.name].append([int(v) for v in take(n)])
                        else:
                            columns[prop.name].append(float(take(1)[0]))
            except ValueError as e:
                raise MeshIOError(f"PLY 元素 {element.name} 含有非数值数据") from e
            data[element.name] = columns
        return data

    def _read_binary(self, body: bytes, elements: List[PlyElement]):
        offset = 0
        data = {}
        for element in elements:
            if not any(p.is_list for p in element.properties):
                dtype = np.dtype([(p.name, '<' + p.dtype) for p in element.properties])
                needed = dtype.itemsize * element.count
                if offset + needed > len(body):
                    raise MeshIOError(f"PLY 数据被截断: 元素 {element.name}")
                table = np.frombuffer(body, dtype=dtype, count=element.count, offset=offset)
                offset += needed
                data[element.name] = {p.name: table[p.name].astype(np.float64) for p in element.properties}
                continue
            columns = {p.name: [] for p in element.properties}
            for _ in range(element.count):
                for prop in element.properties:
                    if prop.is_list:
                        count_type = np.dtype('<' + prop.count_dtype)
                        if offset + count_type.itemsize > len(body):
                            raise MeshIOError(f"PLY 数据被截断: 元素 {element.name}")
                        n = int(np.frombuffer(body, dtype=count_type, count=1, offset=offset)[0])
                        offset += count_type.itemsize
                        item_type = np.dtype('<' + prop.dtype)
                        if offset + n * item_type.itemsize > len(body):
                            raise MeshIOError(f"PLY 数据被截断: 元素 {element.name}")
                        values = np.frombuffer(body, dtype=item_type, count=n, offset=offset)
                        offset += n * item_type.itemsize
                        columns[prop.name].append(values.astype(np.int64).tolist())
                    else:
                        item_type = np.dtype('<' + prop.dtype)
                        if offset + item_type.itemsize > len(body):
                            raise MeshIOError(f"PLY 数据被截断: 元素 {element.name}")
                        columns[prop.name].append(float(np.frombuffer(body, dtype=item_type, count=1,
                                                                      offset=offset)[0]))
                        offset += item_type.itemsize
            data[element.name] = columns
        return data

    def read_ply(self, path: str) -> PlyData:
        """读取 PLY 文件内容"""
        try:
            with open(path, 'rb') as f:
                content = f.read()
        except OSError as e:
            raise MeshIOError(f"无法读取 PLY 文件 {path}: {e}") from e

        fmt, elements, start = self._parse_ply_header(content, path)
        body = content[start:]
        data = self._read_ascii(body, elements) if fmt == 'ascii' else self._read_binary(body, elements)
        types = {e.name: {p.name: p.dtype for p in e.properties} for e in elements}

        vertex = data.get('vertex')
        if vertex is None or not all(axis in vertex for axis in 'xyz'):
            raise MeshIOError(f"PLY 缺少 x/y/z 顶点属性: {path}")
        points = np.stack([np.asarray(vertex[a], dtype=np.float64) for a in 'xyz'], axis=1).reshape(-1, 3)
        if not np.all(np.isfinite(points)):
            raise MeshIOError(f"PLY 顶点坐标包含非有限值: {path}")

        normals = None
        if all(n in vertex for n in ('nx', 'ny', 'nz')):
            normals = np.stack([np.asarray(vertex[n], dtype=np.float64) for n in ('nx', 'ny', 'nz')], axis=1)

        colors = None
        if all(c in vertex for c in ('red', 'green', 'blue')):
            channels = ['red', 'green', 'blue'] + (['alpha'] if 'alpha' in vertex else [])
            colors = np.stack([np.asarray(vertex[c], dtype=np.float64) for c in channels], axis=1)
            if types['vertex']['red'] == 'u1':
                colors = colors / 255.0
            colors = np.clip(colors, 0.0, 1.0)
            if colors.shape[1] == 3:
                colors = np.concatenate([colors, np.ones((colors.shape[0], 1))], axis=1)

        faces = None
        face = data.get('face')
        if face is not None:
            key = next((name for name in FACE_INDEX_NAMES if name in face), None)
            if key is None:
                raise MeshIOError(f"PLY face 元素缺少 vertex_indices 属性: {path}")
            triangles = [tri for polygon in face[key] for tri in _fan(polygon)]
            faces = np.array(triangles, dtype=np.int64).reshape(-1, 3)
            if faces.size and (faces.min() < 0 or faces.max() >= points.shape[0]):
                raise MeshIOError(f"PLY 面索引超出顶点范围: {path}")
        logger.info(f"读取 PLY: {path}, 顶点 {points.shape[0]}, "
                    f"面 {0 if faces is None else faces.shape[0]}, 颜色 {'有' if colors is not None else '无'}")
        return PlyData(points, normals, colors, faces)

    def load_ply(self, path: str):
        """读取 PLY 为可渲染对象: 有 face 元素时为 TriMesh, 否则为 PointCloud"""
        ply = self.read_ply(path)
        try:
            if ply.faces is not None:
                normals = ply.normals
                if normals is not None:
                    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
                    # 含零长度法线时丢弃整组法线
                    normals = normals / lengths if np.all(lengths > 0) else None
                colors = VertexColors(ply.colors) if ply.colors is not None else None
                mesh = TriMesh(ply.points, ply.faces, normals=normals)
                if colors is not None:
                    mesh.set_appearance(colors=colors)
                return mesh
            return PointCloud(ply.points, colors=ply.colors, normals=ply.normals)
        except SceneRenderError as e:
            raise MeshIOError(f"PLY 内容无效 {path}: {e.message}") from e

    def save_ply(self, path: str, points, normals=None, colors=None, faces=None, binary: bool = False) -> None:
        """写出 PLY; 坐标与法线为 double, 颜色为 uchar (N×4 时含 alpha)"""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        n = points.shape[0]
        columns = [('x', 'f8'), ('y', 'f8'), ('z', 'f8')]
        arrays = [points[:, 0], points[:, 1], points[:, 2]]
        if normals is not None:
            normals = np.asarray(normals, dtype=np.float64).reshape(n, 3)
            columns += [('nx', 'f8'), ('ny', 'f8'), ('nz', 'f8')]
            arrays += [normals[:, 0], normals[:, 1], normals[:, 2]]
        if colors is not None:
            colors = np.asarray(colors, dtype=np.float64)
            colors = np.broadcast_to(colors.reshape(-1, colors.shape[-1]), (n, colors.shape[-1]))
            quantized = np.floor(np.clip(colors, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
            names = ['red', 'green', 'blue', 'alpha'][:quantized.shape[1]]
            columns += [(name, 'u1') for name in names]
            arrays += [quantized[:, i] for i in range(len(names))]
        faces = None if faces is None else np.asarray(faces, dtype=np.int64).reshape(-1, 3)

        type_names = {'f8': 'double', 'u1': 'uchar'}
        header = ['ply', f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
                  f"element vertex {n}"]
        header += [f"property {type_names[t]} {name}" for name, t in columns]
        if faces is not None:
            header += [f"element face {faces.shape[0]}", "property list uchar int vertex_indices"]
        header.append('end_header')

        try:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            with open(path, 'wb') as f:
                f.write(('\n'.join(header) + '\n').encode('ascii'))
                if binary:
                    table = np.empty(n, dtype=[(name, '<' + t) for name, t in columns])
                    for (name, _), values in zip(columns, arrays):
                        table[name] = values
                    f.write(table.tobytes())
                    if faces is not None:
                        face_table = np.empty(faces.shape[0], dtype=[('n', 'u1'), ('v', '<i4', (3,))])
                        face_table['n'] = 3
                        face_table['v'] = faces
                        f.write(face_table.tobytes())
                else:
                    lines = []
                    for i in range(n):
                        lines.append(' '.join(_format_float(values[i]) if t == 'f8' else str(int(values[i]))
                                              for (_, t), values in zip(columns, arrays)))
                    if faces is not None:
                        lines += [f"3 {a} {b} {c}" for a, b, c in faces.tolist()]
                    f.write(('\n'.join(lines) + ('\n' if lines else '')).encode('ascii'))
        except OSError as e:
            raise MeshIOError(f"写入 PLY 失败 {path}: {e}") from e
        logger.info(f"写出 PLY: {path}, 顶点 {n}, 面 {0 if faces is None else faces.shape[0]}")

    def save_renderable_ply(self, renderable, path: str, binary: bool = False) -> None:
        """写出点云或网格(局部坐标)"""
        if isinstance(renderable, PointCloud):
            colors = renderable.colors if renderable.colors.shape[0] == renderable.point_count else None
            self.save_ply(path, renderable.points, renderable.normals, colors, binary=binary)
        else:
            colors = renderable.appearance.colors
            vertex_colors = colors.colors if isinstance(colors, VertexColors) else None
            self.save_ply(path, renderable.vertices, renderable.normals, vertex_colors, renderable.faces,
                          binary=binary)

    # ---------- OBJ ----------

    def _resolve_index(self, token: str, count: int, kind: str, line_no: int) -> int:
        try:
            index = int(token)
        except ValueError as e:
            raise MeshIOError(f"OBJ 第 {line_no} 行 {kind} 索引无效: {token!r}") from e
        resolved = index - 1 if index > 0 else count + index
        if index == 0 or not (0 <= resolved < count):
            raise MeshIOError(f"OBJ 第 {line_no} 行 {kind} 索引超出范围: {index} (共 {count})")
        return resolved

    def load_obj(self, path: str) -> Tuple[TriMesh, Optional[np.ndarray]]:
        """读取 OBJ, 返回 (TriMesh, faces_uv M×3×2 或 None)

        多边形按扇形三角化; 负索引按 OBJ 规则相对当前已读数量解析;
        若 .mtl 给出 map_Kd 且存在 faces_uv, 网格使用文件纹理(首次着色时读取)
        """
        try:
            with open(path, 'r', encoding='utf-8') as f:
                lines = f.readlines()
        except (OSError, UnicodeDecodeError) as e:
            raise MeshIOError(f"无法读取 OBJ 文件 {path}: {e}") from e

        vertices, uvs, faces, face_uvs = [], [], [], []
        mtllib = None
        missing_uv = 0
        for line_no, raw in enumerate(lines, start=1):
            parts = raw.split('#', 1)[0].split()
            if not parts:
                continue
            tag = parts[0]
            try:
                if tag == 'v':
                    vertices.append([float(v) for v in parts[1:4]])
                    if len(vertices[-1]) != 3:
                        raise ValueError("顶点需要 3 个坐标")
                elif tag == 'vt':
                    uv = [float(v) for v in parts[1:3]]
                    uvs.append(uv + [0.0] * (2 - len(uv)))
                elif tag == 'mtllib' and len(parts) > 1:
                    mtllib = raw.split('#', 1)[0].strip()[len('mtllib'):].strip()
            except ValueError as e:
                raise MeshIOError(f"OBJ 第 {line_no} 行数值无效: {raw.strip()!r}") from e
            if tag != 'f':
                continue
            corners = parts[1:]
            if len(corners) < 3:
                raise MeshIOError(f"OBJ 第 {line_no} 行面少于 3 个顶点")
            styles = {c.count('/') + (1 if '//' in c else 0) * 10 for c in corners}
            has_vt = [len(c.split('/')) > 1 and c.split('/')[1] != '' for c in corners]
            if len(styles) > 1 or len(set(has_vt)) > 1:
                raise MeshIOError(f"OBJ 第 {line_no} 行面的索引格式不一致")
            v_idx = [self._resolve_index(c.split('/')[0], len(vertices), '顶点', line_no) for c in corners]
            t_idx = None
            if has_vt[0]:
                t_idx = [self._resolve_index(c.split('/')[1], len(uvs), '纹理坐标', line_no) for c in corners]
            for a, b, c in _fan(list(range(len(corners)))):
                faces.append((v_idx[a], v_idx[b], v_idx[c]))
                if t_idx is not None:
                    face_uvs.append([uvs[t_idx[a]], uvs[t_idx[b]], uvs[t_idx[c]]])
                else:
                    missing_uv += 1

        faces_uv = None
        if face_uvs and missing_uv:
            logger.warning(f"OBJ 中 {missing_uv} 个面缺少纹理坐标, 忽略全部 UV: {path}")
        elif face_uvs:
            faces_uv = np.array(face_uvs, dtype=np.float64).reshape(-1, 3, 2)

        try:
            mesh = TriMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                           np.array(faces, dtype=np.int64).reshape(-1, 3))
        except SceneRenderError as e:
            raise MeshIOError(f"OBJ 内容无效 {path}: {e.message}") from e

        texture = self._texture_from_mtl(path, mtllib) if mtllib else None
        if texture is not None and faces_uv is not None:
            mesh.set_appearance(colors=FileTextureColors(texture, UVMap.faces_uv(faces_uv)))
        logger.info(f"读取 OBJ: {path}, 顶点 {len(vertices)}, 三角形 {len(faces)}, "
                    f"UV {'有' if faces_uv is not None else '无'}")
        return mesh, faces_uv

    def _texture_from_mtl(self, obj_path: str, mtllib: str) -> Optional[str]:
        mtl_path = os.path.join(os.path.dirname(os.path.abspath(obj_path)), mtllib)
        try:
            with open(mtl_path, 'r', encoding='utf-8') as f:
                for line in f:
                    parts = line.split()
                    if parts and parts[0] == 'map_Kd' and len(parts) > 1:
                        return os.path.join(os.path.dirname(mtl_path), line.strip()[len('map_Kd'):].strip())
        except OSError:
            logger.warning(f"找不到材质库文件: {mtl_path}")
        return None

    def save_obj(self, path: str, mesh: TriMesh, faces_uv=None, texture_path: Optional[str] = None) -> None:
        """写出 OBJ (局部坐标); faces_uv 写为每个面角一条 vt; 给出纹理时写配套 .mtl (map_Kd)"""
        faces_uv = None if faces_uv is None else np.asarray(faces_uv, dtype=np.float64).reshape(-1, 3, 2)
        if faces_uv is not None and faces_uv.shape[0] != mesh.face_count:
            raise MeshIOError(f"faces_uv 数量 {faces_uv.shape[0]} 与面数 {mesh.face_count} 不一致")
        base = os.path.splitext(os.path.basename(path))[0]
        directory = os.path.dirname(os.path.abspath(path))
        lines = ['# scirender OBJ']
        if texture_path:
            lines.append(f"mtllib {base}.mtl")
            lines.append('usemtl material_0')
        lines += [f"v {' '.join(_format_float(c) for c in v)}" for v in mesh.vertices]
        if faces_uv is not None:
            lines += [f"vt {_format_float(u)} {_format_float(v)}" for u, v in faces_uv.reshape(-1, 2)]
            for i, (a, b, c) in enumerate(mesh.faces.tolist()):
                t = 3 * i + 1
                lines.append(f"f {a + 1}/{t} {b + 1}/{t + 1} {c + 1}/{t + 2}")
        else:
            lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
        try:
            os.makedirs(directory, exist_ok=True)
            with open(path, 'w', encoding='utf-8', newline='\n') as f:
                f.write('\n'.join(lines) + '\n')
            if texture_path:
                relative = os.path.relpath(os.path.abspath(texture_path), directory)
                with open(os.path.join(directory, f"{base}.mtl"), 'w', encoding='utf-8', newline='\n') as f:
                    f.write(f"newmtl material_0\nKa 1.0 1.0 1.0\nKd 1.0 1.0 1.0\nmap_Kd {relative}\n")
        except OSError as e:
            raise MeshIOError(f"写入 OBJ 失败 {path}: {e}") from e
        logger.info(f"写出 OBJ: {path}, 面 {mesh.face_count}")


# 创建全局实例
mesh_io_service = MeshIOService()
