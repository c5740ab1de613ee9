"""Binary consumer-loyalty classification from review text + profile data.

Pipeline: clean review text, embed it with a frozen encoder (HTTP
service, deterministic hash stub, or a pre-computed file), fuse the text
feature map with a small profile subnet, and train the fused classifier
with from-scratch Adam-family optimizers.  A grid-search driver sweeps
encoder x optimizer x modality and renders the result tables.
"""

from .data import (DataError, Dataset, LabeledSplit, Normalizer, Record,
                   binarize_rating, fit_normalizer, load_csv, save_csv,
                   split_dataset)
from .embeddings import (EmbeddingConfig, EmbeddingError, EmbeddingFileError,
                         EmbeddingMatrix, SERVICE_MODELS, ServiceError,
                         embed_texts, fnv1a64, load_embeddings, save_embeddings)
from .experiment import (ConfigError, ExperimentConfig, ExperimentError,
                         GridCell, GridReport, GridSpec, enumerate_cells,
                         load_config, run_experiment, run_grid)
from .network import (MLPParams, NetworkError, NetworkSpec, accuracy, backward,
                      forward, init_params, load_checkpoint, loss, predict,
                      save_checkpoint)
from .optim import (OPTIMIZERS, Adam, Adamax, Nadam, OptimizerConfig,
                    OptimizerError, default_config, make_optimizer)
from .preprocess import (MAX_TOKEN_CAP, PreprocessConfig, cap_tokens,
                         clean_text, is_sentence_end)
from .report import render_markdown, write_reports
from .synthetic import (SyntheticError, SyntheticResult, SyntheticSpec,
                        bayes_accuracy, generate_synthetic)
from .training import (EpochLog, RunResult, TrainConfig, TrainingError,
                       early_stop_check, evaluate, train)

__version__ = "0.1.0"
