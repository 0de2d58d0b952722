#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
场景文档读写服务
场景保存为 JSON 文档 (.scene.json): 键排序、四元数规范化 (w ≥ 0)、浮点数保留 9 位有效数字;
元素数超过 SIDECAR_THRESHOLD 的数组写入旁路二进制文件 {file, dtype, shape, sha256}

结构严格校验: 未知键、缺失键都报告 JSON 指针风格的路径
"""

import hashlib
import json
import logging
import math
import os
import re
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from models.appearance import (Appearance, FileTextureColors, GlossyBSDFMaterial, Image, Material,
                               PrincipledBSDFMaterial, TextureColors, UniformColors, UVMap, VertexColors,
                               WireframeOverlay)
from models.base import FileIOError, SceneFormatError, SceneRenderError
from models.camera import OrthographicCamera, PerspectiveCamera
from models.geometry import PointCloud, TriMesh
from models.light import AreaLight, BackgroundLight, DirectionalLight, PointLight, SpotLight
from models.primitives import PRIMITIVE_PARAMS, make_primitive
from models.render_settings import RenderSettings
from models.rotation import to_quaternion
from models.scene import Scene
from models.trajectory import Keypoint, Trajectory

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = ('version', 'settings', 'camera', 'renderables', 'lights', 'keypoints', 'frames')
SIDECAR_DTYPES = ('<f8', '<f4', '<i8', '<i4', '<u1')

LIGHT_FIELDS = {
    'background': ('color', 'strength'),
    'point': ('color', 'strength', 'radius', 'cast_shadow'),
    'directional': ('color', 'strength', 'angular_diameter', 'cast_shadow'),
    'spot': ('color', 'strength', 'cone_angle', 'blend', 'cast_shadow'),
    'area': ('color', 'strength', 'shape', 'size', 'cast_shadow'),
}
LIGHT_CLASSES = {
    'background': BackgroundLight, 'point': PointLight, 'directional': DirectionalLight,
    'spot': SpotLight, 'area': AreaLight,
}
PRINCIPLED_FIELDS = ('metallic', 'roughness', 'specular', 'base_modulation', 'emission_color',
                     'emission_strength', 'alpha')


def _canonical(value: Any) -> Any:
    """浮点数按 9 位有效数字规范化, 其余结构递归处理"""
    if isinstance(value, dict):
        return {str(k): _canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    if isinstance(value, np.ndarray):
        return _canonical(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        number = float(value)
        if not math.isfinite(number):
            raise SceneFormatError(f"场景文档不能包含非有限数值: {number}")
        rounded = float(f"{number:.{Config.FLOAT_SIGNIFICANT_DIGITS}g}")
        return rounded + 0.0
    return value


def dumps_document(document: Dict[str, Any]) -> str:
    """规范化文档文本"""
    return json.dumps(_canonical(document), sort_keys=True, indent=2, ensure_ascii=False,
                      allow_nan=False) + '\n'


class _Reader:
    """带路径的严格字段读取"""

    def __init__(self, base_dir: str):
        self.base_dir = base_dir

    @staticmethod
    def fields(data: Any, path: str, required: Sequence[str], optional: Sequence[str] = ()) -> Dict[str, Any]:
        if not isinstance(data, dict):
            raise SceneFormatError("需要对象", path=path or '/')
        allowed = set(required) | set(optional)
        for key in data:
            if key not in allowed:
                raise SceneFormatError(f"未知的键 {key!r}", path=f"{path}/{key}")
        for key in required:
            if key not in data:
                raise SceneFormatError(f"缺少必需的键 {key!r}", path=f"{path}/{key}")
        return data

    @staticmethod
    def number(data: Dict[str, Any], key: str, path: str, default=None) -> Optional[float]:
        value = data.get(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SceneFormatError("需要数值", path=f"{path}/{key}")
        return float(value)

    @staticmethod
    def integer(data: Dict[str, Any], key: str, path: str, default=None) -> Optional[int]:
        value = data.get(key, default)
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            raise SceneFormatError("需要整数", path=f"{path}/{key}")
        return int(value)

    @staticmethod
    def boolean(data: Dict[str, Any], key: str, path: str, default: bool = False) -> bool:
        value = data.get(key, default)
        if not isinstance(value, bool):
            raise SceneFormatError("需要布尔值", path=f"{path}/{key}")
        return value

    @staticmethod
    def string(data: Dict[str, Any], key: str, path: str, default=None) -> Optional[str]:
        value = data.get(key, default)
        if value is not None and not isinstance(value, str):
            raise SceneFormatError("需要字符串", path=f"{path}/{key}")
        return value

    def array(self, value: Any, path: str, dtype=np.float64, tail: Optional[Tuple[int, ...]] = None) -> np.ndarray:
        """内联数组或旁路文件引用"""
        if isinstance(value, dict):
            array = self._sidecar(value, path)
        else:
            try:
                array = np.asarray(value, dtype=np.float64)
            except (TypeError, ValueError) as e:
                raise SceneFormatError(f"数组格式无效: {e}", path=path) from e
            if array.dtype == object:
                raise SceneFormatError("数组格式无效", path=path)
        if tail is not None:
            if array.size == 0:
                array = array.reshape((0,) + tail)
            if array.ndim != len(tail) + 1 or array.shape[1:] != tail:
                raise SceneFormatError(f"数组形状应为 N×{'×'.join(str(t) for t in tail)}, 实际为 {array.shape}",
                                       path=path)
        if np.issubdtype(np.dtype(dtype), np.integer):
            if not np.all(np.isfinite(array)) or not np.all(np.equal(np.mod(array, 1), 0)):
                raise SceneFormatError("需要整数数组", path=path)
            return array.astype(np.int64)
        if not np.all(np.isfinite(array)):
            raise SceneFormatError("数组包含非有限数值", path=path)
        return array.astype(np.float64)

    def _sidecar(self, ref: Dict[str, Any], path: str) -> np.ndarray:
        self.fields(ref, path, ('file', 'dtype', 'shape'), ('sha256',))
        dtype = ref['dtype']
        if dtype not in SIDECAR_DTYPES:
            raise SceneFormatError(f"不支持的旁路数组类型 {dtype!r}", path=f"{path}/dtype")
        shape = ref['shape']
        if not isinstance(shape, list) or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0
                                                  for s in shape):
            raise SceneFormatError("shape 必须为非负整数列表", path=f"{path}/shape")
        file_path = os.path.join(self.base_dir, str(ref['file']))
        try:
            with open(file_path, 'rb') as f:
                payload = f.read()
        except OSError as e:
            raise SceneFormatError(f"旁路文件引用无效: {ref['file']}", path=f"{path}/file") from e
        expected = int(np.prod(shape)) * np.dtype(dtype).itemsize
        if len(payload) != expected:
            raise SceneFormatError(f"旁路文件大小 {len(payload)} 与声明 {expected} 不一致", path=f"{path}/file")
        digest = ref.get('sha256')
        if digest is not None and hashlib.sha256(payload).hexdigest() != digest:
            raise SceneFormatError("旁路文件校验和不一致", path=f"{path}/sha256")
        return np.frombuffer(payload, dtype=dtype).reshape(shape).astype(np.float64)


class _Writer:
    """数组写出: 小数组内联, 大数组写旁路文件"""

    def __init__(self, base_dir: str, stem: str, threshold: int):
        self.base_dir = base_dir
        self.stem = stem
        self.threshold = threshold
        self.sidecars: List[str] = []

    def array(self, array: np.ndarray, name: str, integer: bool = False):
        array = np.asarray(array)
        if array.size <= self.threshold:
            return array.astype(np.int64).tolist() if integer else array.astype(np.float64).tolist()
        dtype = '<i8' if integer else '<f8'
        payload = np.ascontiguousarray(array.astype(dtype)).tobytes()
        file_name = f"{self.stem}.{re.sub(r'[^A-Za-z0-9_.-]', '_', name)}.bin"
        with open(os.path.join(self.base_dir, file_name), 'wb') as f:
            f.write(payload)
        self.sidecars.append(file_name)
        return {'file': file_name, 'dtype': dtype, 'shape': list(array.shape),
                'sha256': hashlib.sha256(payload).hexdigest()}


def _document_stem(path: str) -> str:
    name = os.path.basename(path)
    for suffix in ('.scene.json', '.json'):
        if name.endswith(suffix):
            return name[:-len(suffix)]
    return os.path.splitext(name)[0]


class SceneIOService:
    """场景文档读写服务"""

    # ---------- 序列化 ----------

    @staticmethod
    def pose_to_dict(obj) -> Dict[str, Any]:
        return {'position': obj.pose.position.tolist(),
                'rotation': {'type': 'quaternion', 'value': obj.pose.rotation.tolist()}}

    def material_to_dict(self, material: Material) -> Dict[str, Any]:
        if isinstance(material, WireframeOverlay):
            return {'type': 'wireframe_overlay', 'base': self.material_to_dict(material.base),
                    'thickness': material.thickness, 'wire_color': material.wire_color.tolist()}
        if isinstance(material, GlossyBSDFMaterial):
            return {'type': 'glossy', 'roughness': material.roughness}
        if isinstance(material, PrincipledBSDFMaterial):
            result = {'type': 'principled'}
            for key in PRINCIPLED_FIELDS:
                value = getattr(material, key)
                result[key] = value.tolist() if isinstance(value, np.ndarray) else value
            return result
        raise SceneFormatError(f"无法保存的材质类型: {type(material).__name__}")

    def colors_to_dict(self, colors, writer: _Writer, name: str) -> Dict[str, Any]:
        if isinstance(colors, UniformColors):
            return {'type': 'uniform', 'color': colors.color.tolist()}
        if isinstance(colors, VertexColors):
            return {'type': 'per_vertex', 'colors': writer.array(colors.colors, f"{name}.colors")}
        if isinstance(colors, (TextureColors, FileTextureColors)):
            uv = {'kind': colors.uv.kind, 'data': writer.array(colors.uv.data, f"{name}.uv")}
            if isinstance(colors, FileTextureColors):
                relative = os.path.relpath(os.path.abspath(colors.path), writer.base_dir).replace(os.sep, '/')
                return {'type': 'file_texture', 'path': relative, 'uv': uv}
            return {'type': 'texture', 'image': writer.array(colors.image.pixels, f"{name}.image"), 'uv': uv}
        raise SceneFormatError(f"无法保存的颜色来源: {type(colors).__name__}")

    def renderable_to_dict(self, obj, writer: _Writer) -> Dict[str, Any]:
        name = f"renderable.{obj.tag}"
        entry = {'tag': obj.tag, 'pose': self.pose_to_dict(obj)}
        if isinstance(obj, PointCloud):
            entry.update({
                'kind': 'pointcloud',
                'points': writer.array(obj.points, f"{name}.points"),
                'colors': writer.array(obj.colors, f"{name}.colors"),
                'point_shape': obj.point_shape,
                'point_radius': obj.point_radius,
                'emission_strength': obj.emission_strength,
                'material': self.material_to_dict(obj.material),
            })
            if obj.normals is not None:
                entry['normals'] = writer.array(obj.normals, f"{name}.normals")
            return entry

        appearance = {'colors': self.colors_to_dict(obj.appearance.colors, writer, name),
                      'material': self.material_to_dict(obj.appearance.material)}
        if obj.primitive is not None:
            params = {k: (np.asarray(v).tolist() if k == 'control_points' else v)
                      for k, v in obj.primitive.params.items()}
            entry.update({'kind': obj.primitive.kind, 'params': params, 'appearance': appearance})
            if obj.face_segments is not None:
                entry['face_segments'] = writer.array(obj.face_segments, f"{name}.face_segments", integer=True)
                entry['segment_materials'] = {str(k): self.material_to_dict(m)
                                              for k, m in obj.segment_materials.items()}
            return entry
        entry.update({
            'kind': 'mesh',
            'vertices': writer.array(obj.vertices, f"{name}.vertices"),
            'faces': writer.array(obj.faces, f"{name}.faces", integer=True),
            'shadow_catcher': obj.shadow_catcher,
            'appearance': appearance,
        })
        if obj.normals is not None:
            entry['normals'] = writer.array(obj.normals, f"{name}.normals")
        if obj.face_segments is not None:
            entry['face_segments'] = writer.array(obj.face_segments, f"{name}.face_segments", integer=True)
            entry['segment_materials'] = {str(k): self.material_to_dict(m) for k, m in obj.segment_materials.items()}
        return entry

    def light_to_dict(self, light) -> Dict[str, Any]:
        entry = {'kind': light.kind, 'tag': light.tag, 'pose': self.pose_to_dict(light)}
        for key in LIGHT_FIELDS[light.kind]:
            value = getattr(light, key)
            entry[key] = value.tolist() if isinstance(value, np.ndarray) else value
        return entry

    def camera_to_dict(self, camera) -> Optional[Dict[str, Any]]:
        if camera is None:
            return None
        entry = {'kind': camera.kind, 'resolution': list(camera.resolution), 'pose': self.pose_to_dict(camera)}
        if isinstance(camera, PerspectiveCamera):
            entry['focal_px'] = camera.focal_px
        else:
            entry['ortho_scale'] = camera.ortho_scale
        return entry

    def scene_to_document(self, scene: Scene, writer: _Writer) -> Dict[str, Any]:
        return {
            'version': Config.SCENE_FORMAT_VERSION,
            'settings': scene.settings.to_dict(),
            'camera': self.camera_to_dict(scene.camera),
            'renderables': [self.renderable_to_dict(obj, writer) for obj in scene.renderables.values()],
            'lights': [self.light_to_dict(light) for light in scene.lights.values()],
        }

    def save_scene(self, scene: Scene, path: str) -> None:
        """保存场景文档"""
        base_dir = os.path.dirname(os.path.abspath(path))
        try:
            os.makedirs(base_dir, exist_ok=True)
            writer = _Writer(base_dir, _document_stem(path), Config.SIDECAR_THRESHOLD)
            text = dumps_document(self.scene_to_document(scene, writer))
            with open(path, 'w', encoding='utf-8', newline='\n') as f:
                f.write(text)
        except OSError as e:
            raise FileIOError(f"写入场景文件失败 {path}: {e}") from e
        logger.info(f"场景已保存: {path} (渲染对象 {len(scene.renderables)}, 光源 {len(scene.lights)}, "
                    f"旁路文件 {len(writer.sidecars)})")

    # ---------- 反序列化 ----------

    def read_document(self, path: str) -> Dict[str, Any]:
        """读取并解析文档, 校验顶层键与版本"""
        try:
            with open(path, 'r', encoding='utf-8') as f:
                text = f.read()
        except (OSError, UnicodeDecodeError) as e:
            raise FileIOError(f"无法读取场景文件 {path}: {e}") from e
        return self.parse_document(text)

    def parse_document(self, text: str) -> Dict[str, Any]:
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            raise SceneFormatError(f"JSON 解析失败: {e.msg}", line=e.lineno, column=e.colno) from e
        except RecursionError as e:
            raise SceneFormatError("JSON 嵌套层级过深") from e
        _Reader.fields(document, '', ('version',), TOP_LEVEL_KEYS[1:])
        version = _Reader.integer(document, 'version', '')
        if version != Config.SCENE_FORMAT_VERSION:
            raise SceneFormatError(f"不支持的文档版本 {version}", path='/version')
        return document

    def _pose(self, reader: _Reader, data: Any, path: str) -> Dict[str, Any]:
        if data is None:
            return {'position': None, 'rotation': None}
        reader.fields(data, path, (), ('position', 'rotation'))
        result = {'position': None, 'rotation': None}
        try:
            if 'position' in data:
                result['position'] = reader.array(data['position'], f"{path}/position").reshape(3)
            if 'rotation' in data:
                rotation = data['rotation']
                reader.fields(rotation, f"{path}/rotation", ('type', 'value'))
                result['rotation'] = to_quaternion(rotation)
        except SceneFormatError:
            raise
        except SceneRenderError as e:
            raise SceneFormatError(e.message, path=f"{path}/rotation") from e
        except (ValueError, TypeError, IndexError) as e:
            raise SceneFormatError(f"位姿无效: {e}", path=path) from e
        return result

    def _material(self, reader: _Reader, data: Any, path: str) -> Material:
        reader.fields(data, path, ('type',), ('roughness',) + PRINCIPLED_FIELDS + ('base', 'thickness', 'wire_color'))
        kind = data['type']
        if kind == 'glossy':
            reader.fields(data, path, ('type',), ('roughness',))
            return GlossyBSDFMaterial(roughness=reader.number(data, 'roughness', path, 0.2))
        if kind == 'principled':
            reader.fields(data, path, ('type',), PRINCIPLED_FIELDS)
            kwargs = {}
            for key in PRINCIPLED_FIELDS:
                if key in data:
                    if key in ('base_modulation', 'emission_color'):
                        kwargs[key] = reader.array(data[key], f"{path}/{key}").reshape(-1).tolist()
                    else:
                        kwargs[key] = reader.number(data, key, path)
            return PrincipledBSDFMaterial(**kwargs)
        if kind == 'wireframe_overlay':
            reader.fields(data, path, ('type', 'base'), ('thickness', 'wire_color'))
            base = self._material(reader, data['base'], f"{path}/base")
            wire_color = reader.array(data.get('wire_color', [0.0, 0.0, 0.0]), f"{path}/wire_color").reshape(-1)
            return WireframeOverlay(base, reader.number(data, 'thickness', path, 0.01), wire_color.tolist())
        raise SceneFormatError(f"未知的材质类型 {kind!r}", path=f"{path}/type")

    def _colors(self, reader: _Reader, data: Any, path: str):
        reader.fields(data, path, ('type',), ('color', 'colors', 'image', 'path', 'uv'))
        kind = data['type']
        if kind == 'uniform':
            reader.fields(data, path, ('type', 'color'))
            return UniformColors(reader.array(data['color'], f"{path}/color").reshape(-1))
        if kind == 'per_vertex':
            reader.fields(data, path, ('type', 'colors'))
            colors = reader.array(data['colors'], f"{path}/colors")
            return VertexColors(colors)
        if kind in ('texture', 'file_texture'):
            uv_data = data.get('uv')
            reader.fields(uv_data, f"{path}/uv", ('kind', 'data'))
            uv_kind = uv_data['kind']
            uv_array = reader.array(uv_data['data'], f"{path}/uv/data")
            if uv_kind == 'vertex_uv':
                uv = UVMap.vertex_uv(uv_array)
            elif uv_kind == 'faces_uv':
                uv = UVMap.faces_uv(uv_array)
            else:
                raise SceneFormatError(f"未知的 UV 类型 {uv_kind!r}", path=f"{path}/uv/kind")
            if kind == 'texture':
                reader.fields(data, path, ('type', 'image', 'uv'))
                return TextureColors(Image(reader.array(data['image'], f"{path}/image")), uv)
            reader.fields(data, path, ('type', 'path', 'uv'))
            texture_path = reader.string(data, 'path', path)
            if not os.path.isabs(texture_path):
                texture_path = os.path.join(reader.base_dir, texture_path)
            return FileTextureColors(texture_path, uv)
        raise SceneFormatError(f"未知的颜色类型 {kind!r}", path=f"{path}/type")

    def _appearance(self, reader: _Reader, data: Any, path: str) -> Appearance:
        if data is None:
            return Appearance()
        reader.fields(data, path, (), ('colors', 'material'))
        appearance = Appearance()
        if 'colors' in data:
            appearance.colors = self._colors(reader, data['colors'], f"{path}/colors")
        if 'material' in data:
            appearance.material = self._material(reader, data['material'], f"{path}/material")
        return appearance

    def _segments(self, reader: _Reader, obj: TriMesh, data: Dict[str, Any], path: str) -> None:
        if 'face_segments' not in data:
            return
        segments = reader.array(data['face_segments'], f"{path}/face_segments", dtype=np.int64)
        raw = data.get('segment_materials', {})
        if not isinstance(raw, dict):
            raise SceneFormatError("需要对象", path=f"{path}/segment_materials")
        materials = {}
        for key, value in raw.items():
            try:
                materials[int(key)] = self._material(reader, value, f"{path}/segment_materials/{key}")
            except ValueError as e:
                raise SceneFormatError("分段编号必须为整数", path=f"{path}/segment_materials/{key}") from e
        obj.set_face_segments(segments, materials)

    def _renderable(self, reader: _Reader, data: Any, path: str):
        if not isinstance(data, dict):
            raise SceneFormatError("需要对象", path=path)
        kind = data.get('kind')
        common = ('kind', 'tag', 'pose')
        if kind == 'mesh':
            reader.fields(data, path, ('kind', 'vertices', 'faces'),
                          common + ('normals', 'shadow_catcher', 'appearance', 'face_segments', 'segment_materials'))
            pose = self._pose(reader, data.get('pose'), f"{path}/pose")
            normals = data.get('normals')
            obj = TriMesh(reader.array(data['vertices'], f"{path}/vertices", tail=(3,)),
                          reader.array(data['faces'], f"{path}/faces", dtype=np.int64, tail=(3,)),
                          normals=None if normals is None else reader.array(normals, f"{path}/normals", tail=(3,)),
                          appearance=self._appearance(reader, data.get('appearance'), f"{path}/appearance"),
                          position=pose['position'], rotation=pose['rotation'],
                          shadow_catcher=reader.boolean(data, 'shadow_catcher', path))
            self._segments(reader, obj, data, path)
            return obj
        if kind == 'pointcloud':
            reader.fields(data, path, ('kind', 'points'),
                          common + ('colors', 'normals', 'point_shape', 'point_radius', 'emission_strength',
                                    'material'))
            pose = self._pose(reader, data.get('pose'), f"{path}/pose")
            normals = data.get('normals')
            material = data.get('material')
            return PointCloud(reader.array(data['points'], f"{path}/points", tail=(3,)),
                              colors=None if 'colors' not in data else reader.array(data['colors'], f"{path}/colors"),
                              normals=None if normals is None else reader.array(normals, f"{path}/normals", tail=(3,)),
                              point_shape=reader.string(data, 'point_shape', path, 'sphere'),
                              point_radius=reader.number(data, 'point_radius', path, 0.01),
                              emission_strength=reader.number(data, 'emission_strength', path, 0.0),
                              material=None if material is None else self._material(reader, material,
                                                                                    f"{path}/material"),
                              position=pose['position'], rotation=pose['rotation'])
        if kind in PRIMITIVE_PARAMS:
            reader.fields(data, path, ('kind',), common + ('params', 'appearance', 'face_segments',
                                                           'segment_materials'))
            pose = self._pose(reader, data.get('pose'), f"{path}/pose")
            params = data.get('params', {})
            if not isinstance(params, dict):
                raise SceneFormatError("需要对象", path=f"{path}/params")
            for key in params:
                if key not in PRIMITIVE_PARAMS[kind]:
                    raise SceneFormatError(f"未知的键 {key!r}", path=f"{path}/params/{key}")
            obj = make_primitive(kind, appearance=self._appearance(reader, data.get('appearance'),
                                                                   f"{path}/appearance"),
                                 position=pose['position'], rotation=pose['rotation'], **params)
            self._segments(reader, obj, data, path)
            return obj
        raise SceneFormatError(f"未知的渲染对象类型 {kind!r}", path=f"{path}/kind")

    def _light(self, reader: _Reader, data: Any, path: str):
        if not isinstance(data, dict):
            raise SceneFormatError("需要对象", path=path)
        kind = data.get('kind')
        if kind not in LIGHT_FIELDS:
            raise SceneFormatError(f"未知的光源类型 {kind!r}", path=f"{path}/kind")
        reader.fields(data, path, ('kind',), ('tag', 'pose') + LIGHT_FIELDS[kind])
        kwargs = {}
        for key in LIGHT_FIELDS[kind]:
            if key not in data:
                continue
            if key == 'color':
                kwargs[key] = reader.array(data[key], f"{path}/color").reshape(-1).tolist()
            elif key == 'cast_shadow':
                kwargs[key] = reader.boolean(data, key, path)
            elif key == 'shape':
                kwargs[key] = reader.string(data, key, path)
            else:
                kwargs[key] = reader.number(data, key, path)
        light = LIGHT_CLASSES[kind](**kwargs)
        pose = self._pose(reader, data.get('pose'), f"{path}/pose")
        light.set_pose(pose['position'], pose['rotation'])
        return light

    def _camera(self, reader: _Reader, data: Any, path: str):
        if data is None:
            return None
        if not isinstance(data, dict):
            raise SceneFormatError("需要对象", path=path)
        kind = data.get('kind')
        if kind == 'perspective':
            reader.fields(data, path, ('kind', 'resolution'), ('pose', 'focal_px', 'fov_x'))
        elif kind == 'orthographic':
            reader.fields(data, path, ('kind', 'resolution'), ('pose', 'ortho_scale'))
        else:
            raise SceneFormatError(f"未知的相机类型 {kind!r}", path=f"{path}/kind")
        resolution = data['resolution']
        if (not isinstance(resolution, list) or len(resolution) != 2
                or not all(isinstance(r, int) and not isinstance(r, bool) for r in resolution)):
            raise SceneFormatError("分辨率必须为两个整数", path=f"{path}/resolution")
        pose = self._pose(reader, data.get('pose'), f"{path}/pose")
        if kind == 'perspective':
            return PerspectiveCamera(resolution, fov_x=reader.number(data, 'fov_x', path),
                                     focal_px=reader.number(data, 'focal_px', path),
                                     position=pose['position'], rotation=pose['rotation'])
        return OrthographicCamera(resolution, ortho_scale=reader.number(data, 'ortho_scale', path, 1.0),
                                  position=pose['position'], rotation=pose['rotation'])

    def _settings(self, reader: _Reader, data: Any, path: str) -> RenderSettings:
        if data is None:
            return RenderSettings()
        reader.fields(data, path, (), ('resolution', 'samples_per_pixel', 'max_bounces', 'seed', 'passes'))
        kwargs = {}
        for key in ('samples_per_pixel', 'max_bounces', 'seed'):
            if key in data:
                kwargs[key] = reader.integer(data, key, path)
        if 'resolution' in data:
            resolution = data['resolution']
            if not isinstance(resolution, list) or len(resolution) != 2:
                raise SceneFormatError("分辨率必须为两个整数", path=f"{path}/resolution")
            kwargs['resolution'] = tuple(resolution)
        if 'passes' in data:
            if not isinstance(data['passes'], list):
                raise SceneFormatError("需要字符串列表", path=f"{path}/passes")
            kwargs['passes'] = tuple(data['passes'])
        return RenderSettings(**kwargs)

    def _list(self, document: Dict[str, Any], key: str) -> List[Any]:
        value = document.get(key, [])
        if not isinstance(value, list):
            raise SceneFormatError("需要数组", path=f"/{key}")
        return value

    def document_to_scene(self, document: Dict[str, Any], base_dir: str = '.') -> Scene:
        """由已解析的文档构造场景; 模型校验错误附带所在路径"""
        reader = _Reader(base_dir)
        path = ''
        try:
            path = '/settings'
            scene = Scene(self._settings(reader, document.get('settings'), path))
            path = '/camera'
            camera = self._camera(reader, document.get('camera'), path)
            if camera is not None:
                scene.set_camera(camera)
            for i, entry in enumerate(self._list(document, 'renderables')):
                path = f"/renderables/{i}"
                tag = entry.get('tag') if isinstance(entry, dict) else None
                scene.add_renderable(self._renderable(reader, entry, path), tag)
            for i, entry in enumerate(self._list(document, 'lights')):
                path = f"/lights/{i}"
                tag = entry.get('tag') if isinstance(entry, dict) else None
                scene.add_light(self._light(reader, entry, path), tag)
        except SceneFormatError:
            raise
        except SceneRenderError as e:
            raise SceneFormatError(e.message, path=path) from e
        except (TypeError, ValueError, IndexError) as e:
            raise SceneFormatError(f"取值无效: {e}", path=path) from e
        return scene

    def load_scene(self, path: str) -> Scene:
        """读取场景文档"""
        document = self.read_document(path)
        scene = self.document_to_scene(document, os.path.dirname(os.path.abspath(path)))
        logger.info(f"场景已读取: {path} (渲染对象 {len(scene.renderables)}, 光源 {len(scene.lights)})")
        return scene

    # ---------- 轨迹文档 ----------

    def _pose_entries(self, document: Dict[str, Any], key: str) -> List[Keypoint]:
        reader = _Reader('.')
        keypoints = []
        for i, entry in enumerate(self._list(document, key)):
            path = f"/{key}/{i}"
            reader.fields(entry, path, ('time', 'position', 'rotation'))
            pose = self._pose(reader, {'position': entry['position'], 'rotation': entry['rotation']}, path)
            time_value = reader.number(entry, 'time', path)
            if not math.isfinite(time_value):
                raise SceneFormatError("时间必须为有限数值", path=f"{path}/time")
            keypoints.append(Keypoint(time_value, pose['position'], pose['rotation']))
        return keypoints

    def load_trajectory(self, path: str) -> Trajectory:
        """读取关键帧文档 (keypoints 列表) 为轨迹"""
        document = self.read_document(path)
        trajectory = Trajectory()
        for i, keypoint in enumerate(self._pose_entries(document, 'keypoints')):
            try:
                trajectory.add_keypoint(keypoint)
            except SceneRenderError as e:
                raise SceneFormatError(e.message, path=f"/keypoints/{i}/time") from e
        return trajectory

    def trajectory_document(self, times: Sequence[float], poses, key: str = 'frames') -> Dict[str, Any]:
        entries = [{'time': float(t), 'position': np.asarray(p).tolist(),
                    'rotation': {'type': 'quaternion', 'value': np.asarray(q).tolist()}}
                   for t, (p, q) in zip(times, poses)]
        return {'version': Config.SCENE_FORMAT_VERSION, key: entries}

    def save_trajectory_frames(self, path: str, times: Sequence[float], poses) -> None:
        """写出逐帧位姿文档"""
        text = dumps_document(self.trajectory_document(times, poses))
        try:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
            with open(path, 'w', encoding='utf-8', newline='\n') as f:
                f.write(text)
        except OSError as e:
            raise FileIOError(f"写入轨迹文件失败 {path}: {e}") from e
        logger.info(f"轨迹已保存: {path} ({len(times)} 帧)")


# 创建全局实例
scene_io_service = SceneIOService()
