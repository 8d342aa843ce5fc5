"""Pool-based active learning for caption generators with entropy-style acquisitions."""

from .acquisition import (
    AcquisitionScore,
    mean_likelihood_score,
    normalize_scores,
    random_scores,
    rank_and_select,
    sase_entropy,
    sequential_entropy,
)
from .clustering import ClusterModel, kmeans_fit, nearest_centers
from .core import (
    Candidate,
    CandidateSet,
    CapabilityError,
    CapactiveError,
    ConfigError,
    DataError,
    PoolState,
    RunConfig,
    VideoExample,
    seed_split,
    tokenize,
    validate_config,
)
from .embedder import CaptionEmbedding, FileEmbedder, HashingEmbedder, embed_caption, load_embeddings
from .generator import (
    ReplayGenerator,
    SyntheticGenerator,
    SyntheticWorld,
    WorldConfig,
    build_world,
    load_candidate_dump,
    paraphrase_benchmark,
    replay_generate,
    synthetic_generate,
    synthetic_update,
)
from .loop import RunReport, SelectionRecord, query_labels, run_active_learning, simulate_synthetic
from .metrics import MetricReport, bleu4, cider_d, evaluate_corpus, rouge_l
from .multimodal import (
    PerturbationSpec,
    VisualClusterModel,
    expand_candidates_fp,
    expand_candidates_mp,
    fit_visual_clusters,
    perturb_feature,
)

__version__ = "0.1.0"
