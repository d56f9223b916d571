"""Session-based next-application prediction with personalized attention."""

from .data import Dataset, Job, JobSeeker, Session
from .kernels import BACKEND
from .model import ModelConfig, PanapModel, TrainConfig, recommend_topk, train
from .synthetic import SynthConfig, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Dataset",
    "Job",
    "JobSeeker",
    "ModelConfig",
    "PanapModel",
    "Session",
    "SynthConfig",
    "TrainConfig",
    "generate_synthetic",
    "recommend_topk",
    "train",
]
