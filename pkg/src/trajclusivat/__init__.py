"""Trajectory clustering with sampled VAT/iVAT and cluster-wise Markov route prediction."""

from .errors import (
    DataError,
    DisconnectedNetworkError,
    ModelFormatError,
    NetworkError,
    NetworkMismatchError,
    TrajectoryError,
)
from .road_network import RoadNetwork, SegmentDistanceMatrix, all_pairs_segment_distances, load_network
from .trajectories import Trajectory, TrajectoryDataset, ingest
from .distance import nd_traj_dtw, pairwise_matrix, traj_dtw
from .pipeline import PipelineConfig, TrainedModel, load_model, save_model, train
from .predictor import PredictionRequest, PredictionResult, predict

__all__ = [
    "DataError",
    "DisconnectedNetworkError",
    "ModelFormatError",
    "NetworkError",
    "NetworkMismatchError",
    "TrajectoryError",
    "RoadNetwork",
    "SegmentDistanceMatrix",
    "all_pairs_segment_distances",
    "load_network",
    "Trajectory",
    "TrajectoryDataset",
    "ingest",
    "nd_traj_dtw",
    "pairwise_matrix",
    "traj_dtw",
    "PipelineConfig",
    "TrainedModel",
    "load_model",
    "save_model",
    "train",
    "PredictionRequest",
    "PredictionResult",
    "predict",
]
