"""Physics-constrained multi-object tracking and counting for platform-approach video."""

__version__ = "0.1.0"

from .counting import BandConfig, CountLedger, CountResult, count_sequence
from .geometry import CameraIntrinsics, HeadBox, Point3D
from .motion_models import KalmanState, MotionModel, NoiseScales, make_filter
from .simulator import NoiseConfig, SceneConfig, SimulatedSequence, generate
from .tracker import Detection, FrameOutput, Tracker, TrackerConfig, run_sequence

__all__ = [
    "BandConfig", "CameraIntrinsics", "CountLedger", "CountResult", "Detection",
    "FrameOutput", "HeadBox", "KalmanState", "MotionModel", "NoiseConfig",
    "NoiseScales", "Point3D", "SceneConfig", "SimulatedSequence", "Tracker",
    "TrackerConfig", "count_sequence", "generate", "make_filter", "run_sequence",
    "__version__",
]
