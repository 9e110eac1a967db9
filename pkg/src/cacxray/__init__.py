"""Coronary calcium scoring from chest radiographs.

End-to-end pieces: DICOM ingestion, the fixed preprocessing chain, log-domain
label transforms, a dense-block convolutional regressor with hand-written
forward/backward passes, diagnostic-accuracy and survival evaluation,
gradient-weighted saliency maps, and a seeded synthetic data generator.
"""

__version__ = "0.1.0"

from . import dicom, explain, labels, metrics, model, preprocess, survival, synthgen
from .errors import CacXrayError

__all__ = [
    "CacXrayError",
    "__version__",
    "dicom",
    "explain",
    "labels",
    "metrics",
    "model",
    "preprocess",
    "survival",
    "synthgen",
]
