"""Data-generating simulators."""

from .core import LabeledDataset, Simulator, generate
from .gmm import GmmWorld
from .traffic import SceneDescription, TrafficSimulator

__all__ = ["LabeledDataset", "Simulator", "generate", "GmmWorld", "SceneDescription", "TrafficSimulator"]
