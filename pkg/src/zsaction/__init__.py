"""Zero-shot action classification and localization from object scores.

Object classifier responses on a video are translated into action scores
through a word-embedding space: object and action labels are encoded as
semantic vectors (average word vectors or Fisher word vectors), their inner
products form an object-to-action affinity matrix, and a video is assigned
the action with the largest affinity-weighted sum of its object scores.
"""
from zsaction.errors import (
    DegenerateEncodingError,
    EmbeddingLoadError,
    InputError,
    NumericalError,
    UnencodableLabelError,
)
from zsaction.embeddings import EmbeddingTable, LabelDescription, load_embeddings, lookup, tokenize_label
from zsaction.gmm import GmmModel, fit_gmm, log_likelihood, responsibilities
from zsaction.encoding import (
    EncoderConfig,
    PcaTransform,
    SemanticVector,
    encode_all,
    encode_awv,
    encode_fwv,
    fisher_blocks,
    fit_pca,
)
from zsaction.translation import (
    AffinityMatrix,
    ObjectScores,
    average_frame_scores,
    build_affinity,
    power_l2_normalize,
    prepare_scores,
    sparsify_action,
    sparsify_video,
)
from zsaction.engine import Prediction, TubeProposal, classify, localize, retrieve, score_actions, top_detections
from zsaction.evaluation import (
    MetricReport,
    auc_vs_threshold,
    average_class_accuracy,
    average_precision,
    mean_average_precision,
    tube_overlap,
)

__version__ = "0.1.0"
