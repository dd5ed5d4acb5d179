"""Functional-area detection: region proposals, a small CNN trained from
scratch, hard negative mining, and detection evaluation."""

from .imaging import BoundingBox, Image, extract_patch, iou, resize_bilinear
from .segmentation import SegmentMap, oversegment
from .proposals import ProposalSet, Strategy, propose
from .neuralnet import NetworkSpec, default_network, tiny_network
from .optimizer import DampingProbe, Schedule, lr_at_epoch, spectral_radius
from .dataset import Annotation, ontology, sample_background, split_dataset
from .evaluation import Detection, compute_metrics, match_detections, nms, roc_curve
from .training import TrainConfig, detect_image, mine_hard_examples, train_rounds
from .render import render

__version__ = "0.1.0"
