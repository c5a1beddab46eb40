"""Dual Gaussian-process distance fields for ground-aware navigation."""

from .cloud import LabelledCloud, SceneSpec, load_ply, save_ply, synth_scene
from .gpdf import GpdfModel, KernelParams, fit
from .optimizer import ChompConfig, Trajectory, optimize
from .scene import PRESETS, SceneConfig, SceneModel, SystemModel, build_scene, get_system

__version__ = "0.1.0"
