"""HTTP recognition service: bounded work queue, detector seam, presence board."""

from .config import CONFIG_ENV, ServiceConfig, load_config, parse_config
from .core import PresenceHub, RecognitionService, score_of
from .vision import DEFAULT_TAU, Box, DetectorPlugin, PassThroughDetector, crop, motion_gate
from .workqueue import QueueStats, WorkQueue

__all__ = [
    "CONFIG_ENV",
    "DEFAULT_TAU",
    "Box",
    "DetectorPlugin",
    "PassThroughDetector",
    "PresenceHub",
    "QueueStats",
    "RecognitionService",
    "ServiceConfig",
    "WorkQueue",
    "create_app",
    "crop",
    "load_config",
    "motion_gate",
    "parse_config",
    "score_of",
]


def create_app(service, manage_lifecycle: bool = True):
    from .app import create_app as _create

    return _create(service, manage_lifecycle)
