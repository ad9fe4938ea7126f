"""Desk-scale span-ranking coreference resolution.

End-to-end trainable: a tape-based reverse-mode autodiff core, a small
bidirectional recurrent encoder, unary/pairwise/bilinear scoring factors,
three-stage beam inference with gated higher-order refinement, marginal
log-likelihood training, and the standard coreference metrics.
"""

from .autodiff import FfnnSpec, NonFiniteError, ShapeError, Tape, Tensor, backward
from .corpus import Document, Span, Token, candidate_spans, load_documents, write_documents
from .encoder import EncoderConfig
from .inference import InferenceConfig, InferenceResult, decode_clusters, run_inference
from .metrics import MetricReport, MetricScore, avg_f1, b_cubed, ceaf_phi4, corpus_report, muc
from .model import ModelConfig, build_params, build_vocab
from .params import ParamStore
from .synth import SyntheticSpec, generate_synthetic
from .training import TrainConfig, TrainResult, marginal_nll, train

__version__ = "0.1.0"
