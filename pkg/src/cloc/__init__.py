"""Contrastive localized language-image pre-training at desk scale."""

from .encoders import ModelConfig
from .errors import ClocError
from .geometry import BoundingBox, clamp_box, encode_box_prompt, iou, validate_box
from .losses import BatchEmbeddings, LossBreakdown, clip_loss, cloc_loss, grounding_loss, total_loss
from .model import CLOCModel
from .prompter import extract_region_by_box, extract_region_by_text, extract_region_roi_align, predict_box
from .synthdata import DatasetRecord, RegionAnnotation, generate_corpus, generate_scene, rasterize, read_dataset, write_dataset
from .trainer import TrainConfig, TrainState, init_state, load_checkpoint, lr_at, save_checkpoint, train, train_step
from .vesl import dataset_stats, extract_phrases, oracle_detect

__version__ = "0.1.0"
