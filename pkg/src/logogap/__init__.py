"""Logo-identification models for phishing detection, bounded adversarial
perturbation generators against them, and the surrounding evaluation and
defense harness."""

__version__ = "0.1.0"

from .attack import GenTrainConfig, gap_loss, make_target_vector, train_generator
from .dataset import (
    BrandRegistry,
    DatasetSplit,
    LogoImage,
    UNKNOWN_BRAND,
    load_corpus,
    preprocess,
    protected_unprotected,
    split,
)
from .defense import MixConfig, adaptive_generator, adversarial_train, game_rounds
from .detector import (
    BrandVerdict,
    PageRecord,
    PhishVerdict,
    classify_logo,
    detect_phishing,
)
from .discriminators import (
    ConfidenceVector,
    DiscTrainConfig,
    Discriminator,
    as_probability,
    build_discriminator,
    build_siamese,
    build_swin,
    build_vit,
    predict,
    step_relu,
    train_discriminator,
)
from .evaluation import (
    CrossEvalResult,
    EvalReport,
    RocCurve,
    cross_eval,
    fooling_ratio,
    roc_curve,
    score_corpus,
    threshold_at_fpr,
    tpr_fpr,
)
from .fixtures import build_fixture_corpus
from .generation import (
    PerturbationField,
    PerturbationGenerator,
    craft,
    craft_batch,
    scale_and_clip,
)

__all__ = [
    "BrandRegistry", "BrandVerdict", "ConfidenceVector", "CrossEvalResult",
    "DatasetSplit", "DiscTrainConfig", "Discriminator", "EvalReport",
    "GenTrainConfig", "LogoImage", "MixConfig", "PageRecord",
    "PerturbationField", "PerturbationGenerator", "PhishVerdict", "RocCurve",
    "UNKNOWN_BRAND", "adaptive_generator", "adversarial_train", "as_probability",
    "build_discriminator", "build_fixture_corpus", "build_siamese", "build_swin",
    "build_vit", "classify_logo", "craft", "craft_batch", "cross_eval",
    "detect_phishing", "fooling_ratio", "game_rounds", "gap_loss", "load_corpus",
    "make_target_vector", "predict", "preprocess", "protected_unprotected",
    "roc_curve", "scale_and_clip", "score_corpus", "split", "step_relu",
    "threshold_at_fpr", "tpr_fpr", "train_discriminator", "train_generator",
]
