#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
命令行批处理入口

子命令: render / meshify / trajectory / pc-color
退出码: 0 成功, 2 场景错误, 3 文件读写错误, 4 网格化错误
日志输出到标准错误, --stats-json 的统计信息输出到标准输出;
trajectory 未指定 --out 时标准输出为轨迹文档, 统计信息改写到标准错误
"""

import argparse
import json
import logging
import sys
from typing import List, Optional, Sequence

import numpy as np

from config import Config
from models.base import SceneRenderError, ValidationError
from models.meshify_config import MeshifyConfig
from services.image_io_service import image_io_service
from services.mesh_io_service import mesh_io_service
from services.meshify_service import meshify_service
from services.pointcloud_service import pointcloud_service
from services.render_service import render_service
from services.scene_io_service import dumps_document, scene_io_service

logger = logging.getLogger(__name__)

EXIT_CODES = {'scene': 2, 'io': 3, 'meshify': 4}


# ---------- 参数解析 ----------

def _floats(text: str, count: Optional[int] = None, name: str = '') -> List[float]:
    try:
        values = [float(v) for v in text.split(',') if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"{name} 必须为逗号分隔的数值: {text}") from e
    if count is not None and len(values) != count:
        raise argparse.ArgumentTypeError(f"{name} 需要 {count} 个数值: {text}")
    return values


def _vec3(text: str) -> List[float]:
    return _floats(text, 3, 'X,Y,Z')


def _rgb(text: str) -> List[float]:
    return _floats(text, 3, 'r,g,b')


def _radii(text: str) -> List[float]:
    return _floats(text, None, 'r1,r2,...')


def _resolution(text: str):
    try:
        width, height = (int(v) for v in text.lower().split('x'))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"分辨率格式应为 WxH: {text}") from e
    return width, height


def _passes(text: str):
    return tuple(p.strip() for p in text.split(',') if p.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='scirender', description='科研可视化渲染工具')
    parser.add_argument('--log-level', default=Config.LOG_LEVEL, help='日志级别 (默认 SCIRENDER_LOG_LEVEL)')
    sub = parser.add_subparsers(dest='command', required=True)

    render = sub.add_parser('render', help='渲染场景文档')
    render.add_argument('scene', help='场景文档 (.scene.json)')
    render.add_argument('--out', required=True, metavar='PREFIX', help='输出前缀')
    render.add_argument('--passes', type=_passes, help='渲染通道, 如 color,depth,albedo')
    render.add_argument('--samples', type=int, metavar='N', help='每像素采样数')
    render.add_argument('--resolution', type=_resolution, metavar='WxH', help='输出分辨率')
    render.add_argument('--seed', type=int, metavar='S', help='随机种子')
    render.add_argument('--threads', type=int, metavar='T', help='渲染线程数 (默认 SCIRENDER_THREADS 或硬件并行度)')
    render.add_argument('--stats-json', action='store_true', help='在标准输出打印统计信息 JSON')

    meshify = sub.add_parser('meshify', help='点云网格化并烘焙纹理')
    meshify.add_argument('ply', metavar='in.ply', help='带颜色的点云 PLY')
    meshify.add_argument('--out-mesh', required=True, metavar='m.obj', help='输出 OBJ')
    meshify.add_argument('--out-texture', required=True, metavar='t.png', help='输出纹理 PNG')
    meshify.add_argument('--radii', type=_radii, metavar='r1,r2,...', help='滚球半径 (递增)')
    meshify.add_argument('--target-faces', type=int, metavar='F', default=Config.MESHIFY_TARGET_FACES,
                         help='简化目标面数')
    meshify.add_argument('--tex-res', type=int, metavar='R', default=Config.MESHIFY_TEXTURE_RESOLUTION,
                         help='纹理分辨率')
    meshify.add_argument('--gap', type=int, metavar='G', default=Config.MESHIFY_GAP_PX, help='图集三角形间隔像素')
    meshify.add_argument('--stats-json', action='store_true', help='在标准输出打印统计信息 JSON')

    trajectory = sub.add_parser('trajectory', help='关键帧插值为逐帧相机位姿')
    trajectory.add_argument('keypoints', help='关键帧文档 (.scene.json)')
    trajectory.add_argument('--fps', type=float, required=True, metavar='F', help='帧率')
    trajectory.add_argument('--out', metavar='traj.scene.json', help='输出文档, 缺省时打印到标准输出')
    trajectory.add_argument('--stats-json', action='store_true', help='打印统计信息 JSON (无 --out 时写标准错误)')

    pc_color = sub.add_parser('pc-color', help='按相机方向为点云着色')
    pc_color.add_argument('ply', metavar='in.ply', help='点云 PLY')
    pc_color.add_argument('--camera', type=_vec3, required=True, metavar='X,Y,Z', help='相机位置')
    pc_color.add_argument('--k', type=int, default=Config.NORMAL_ESTIMATION_K, metavar='K', help='法线估计近邻数')
    pc_color.add_argument('--back-color', type=_rgb, default=list(Config.BACK_COLOR), metavar='r,g,b',
                          help='背向点颜色')
    pc_color.add_argument('--back-alpha', type=float, default=Config.BACK_ALPHA, metavar='A', help='背向点透明度')
    pc_color.add_argument('--out', required=True, metavar='out.ply', help='输出 PLY')
    pc_color.add_argument('--stats-json', action='store_true', help='在标准输出打印统计信息 JSON')
    return parser


def setup_logging(level: str) -> None:
    """日志只写标准错误, 标准输出留给统计信息"""
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=Config.LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True
    )


# ---------- 子命令 ----------

def cmd_render(args) -> dict:
    scene = scene_io_service.load_scene(args.scene)
    settings = scene.settings.override(samples_per_pixel=args.samples, resolution=args.resolution,
                                       seed=args.seed, passes=args.passes)
    output = render_service.render(scene, settings, threads=args.threads)
    written = image_io_service.write_render_outputs(output, args.out)
    return {'command': 'render', 'outputs': written, **output.stats}


def cmd_meshify(args) -> dict:
    ply = mesh_io_service.read_ply(args.ply)
    config = MeshifyConfig(bpa_radii=args.radii, target_faces=args.target_faces,
                           texture_resolution=args.tex_res, gap_px=args.gap)
    result = meshify_service.meshify_pc(ply.points, ply.colors, ply.normals, config)
    image_io_service.write_png(result.texture, args.out_texture)
    mesh_io_service.save_obj(args.out_mesh, result.mesh, faces_uv=result.uv, texture_path=args.out_texture)
    stats = result.stats
    logger.info(f"网格化统计: 重建面数 {stats['faces_reconstructed']}, 简化后 {stats['faces']}, "
                f"图集占用率 {stats['atlas_occupancy']:.3f}, 烘焙纹素 {stats['texels_baked']}, "
                f"扩张纹素 {stats['texels_dilated']}")
    return {'command': 'meshify', 'outputs': {'mesh': args.out_mesh, 'texture': args.out_texture}, **stats}


def cmd_trajectory(args) -> dict:
    trajectory = scene_io_service.load_trajectory(args.keypoints)
    times = trajectory.frame_times(args.fps)
    poses = trajectory.refine_trajectory(times)
    if args.out:
        scene_io_service.save_trajectory_frames(args.out, times, poses)
    else:
        sys.stdout.write(dumps_document(scene_io_service.trajectory_document(times, poses)))
    return {'command': 'trajectory', 'keypoints': len(trajectory), 'frames': len(times),
            'time_span': list(trajectory.time_span())}


def cmd_pc_color(args) -> dict:
    ply = mesh_io_service.read_ply(args.ply)
    if ply.faces is not None:
        raise ValidationError(f"pc-color 需要点云而不是网格: {args.ply}")
    normals_estimated = ply.normals is None
    normals = ply.normals
    if normals_estimated:
        # 法线只按点云自身朝外定向, 不参考相机位置
        normals = pointcloud_service.estimate_normals_from_pointcloud(ply.points, k=args.k)
        normals = pointcloud_service.orient_outward(ply.points, normals)
    front = ply.colors if ply.colors is not None else (1.0, 1.0, 1.0)
    colors = pointcloud_service.approximate_colors_from_camera(ply.points, normals, args.camera, front,
                                                               args.back_color, args.back_alpha)
    mesh_io_service.save_ply(args.out, ply.points, normals, colors)
    back = int(np.sum(np.sum(normals * (np.asarray(args.camera) - ply.points), axis=1) < 0.0))
    return {'command': 'pc-color', 'points': int(ply.points.shape[0]), 'normals_estimated': normals_estimated,
            'back_facing': back, 'outputs': {'pointcloud': args.out}}


def stats_stream(args):
    """统计信息的输出流: 标准输出已被轨迹文档占用时使用标准错误"""
    if args.command == 'trajectory' and not args.out:
        return sys.stderr
    return sys.stdout


COMMANDS = {
    'render': cmd_render,
    'meshify': cmd_meshify,
    'trajectory': cmd_trajectory,
    'pc-color': cmd_pc_color,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        stats = COMMANDS[args.command](args)
    except SceneRenderError as e:
        logger.error(f"{args.command} 失败: {e.message}")
        sys.stderr.write(f"错误: {e.message}\n")
        return EXIT_CODES.get(e.code, 2)
    if getattr(args, 'stats_json', False):
        stats_stream(args).write(json.dumps(stats, ensure_ascii=False, sort_keys=True, default=str) + '\n')
    return 0


if __name__ == '__main__':
    sys.exit(main())
