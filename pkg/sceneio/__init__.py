"""
Scene files, image codecs, dataset manifests and rolling windows.
"""
from sceneio.images import read_image, read_mask, write_image
from sceneio.manifest import DatasetManifest, FrameEntry, load_manifest, parse_manifest, write_dataset
from sceneio.scene_file import read_scene, scene_file_size, write_scene
from sceneio.windows import Window, WindowPlan, merge_windows, plan_windows

__all__ = [
    "read_image",
    "read_mask",
    "write_image",
    "DatasetManifest",
    "FrameEntry",
    "load_manifest",
    "parse_manifest",
    "write_dataset",
    "read_scene",
    "scene_file_size",
    "write_scene",
    "Window",
    "WindowPlan",
    "merge_windows",
    "plan_windows",
]
