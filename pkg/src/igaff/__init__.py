"""Black-box adversarial attack engine built on affine transformations and
a genetic search, with a seeded benchmarking harness."""

__version__ = "0.1.0"

from .attacks import (
    AttackConfig,
    AttackOutcome,
    Population,
    ScoreRecord,
    aga_attack,
    aga_crossover,
    aga_mutate,
    aga_select,
    ata_attack,
    attack_score,
    replay_aga,
    replay_ata,
)
from .imagecore import (
    AffineParams,
    Batch,
    Image,
    add_noise,
    apply_affine,
    apply_affine_batch,
    resize_bilinear,
    sample_affine,
)
from .metrics import accuracy, aggregate, diversity_factor, f1_scores, success_rate
from .models import (
    BrightnessOracle,
    ConstantOracle,
    LinearModel,
    Mlp1Model,
    VictimModel,
    cross_entropy,
    load_model,
    predict_labels,
    save_model,
    softmax,
)
from .rng import RngStream

__all__ = [
    "AffineParams",
    "AttackConfig",
    "AttackOutcome",
    "Batch",
    "BrightnessOracle",
    "ConstantOracle",
    "Image",
    "LinearModel",
    "Mlp1Model",
    "Population",
    "RngStream",
    "ScoreRecord",
    "VictimModel",
    "accuracy",
    "add_noise",
    "aga_attack",
    "aga_crossover",
    "aga_mutate",
    "aga_select",
    "aggregate",
    "apply_affine",
    "apply_affine_batch",
    "ata_attack",
    "attack_score",
    "cross_entropy",
    "diversity_factor",
    "f1_scores",
    "load_model",
    "predict_labels",
    "replay_aga",
    "replay_ata",
    "resize_bilinear",
    "sample_affine",
    "save_model",
    "softmax",
    "success_rate",
]
