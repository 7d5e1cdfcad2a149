"""Cross-modal metric learning with instance and semantic triplet losses."""

from .core import DegenerateInputError, cosine_distance, cosine_distance_grad, l2_normalize
from .data import Dataset, SyntheticSpec, generate_synthetic, load_dataset, save_dataset, load_checkpoint, save_checkpoint
from .encoders import EncoderParams, EncoderSpec, encode, init_params
from .evaluation import RetrievalReport, medr, recall_at_k, subset_protocol
from .losses import LossConfig
from .training import SCENARIOS, ConfigError, TrainConfig, train

__version__ = "0.1.0"
