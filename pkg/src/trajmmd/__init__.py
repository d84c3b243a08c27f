"""Within-subject trajectory variability via kernel mean embeddings and MMD."""

__version__ = "0.1.0"

from .errors import DegenerateInputError, InputError, SelectionError
from .kernel import (
    Embedding,
    Kernel,
    MmdEstimate,
    PermutationTestResult,
    embed,
    embedding_eval,
    gram,
    kernel_eval,
    mmd,
    mmd_unbiased,
    permutation_test,
)
from .trajectory import (
    ChannelScaling,
    FeatureVector,
    StateSample,
    SubjectDataset,
    Trajectory,
    align_dataset,
    flatten,
    resample,
    validate,
)
from .variability import (
    RegressionResult,
    SplitSpec,
    TrendStatistics,
    VariabilityProfile,
    final_embedding,
    mmd_sequence,
    ols_regression,
    regress_fixation,
    segmented_regression,
    trend_statistics,
)
from .bandwidth import median_heuristic, select_bandwidth
from .synthetic import LearningSchedule, ManeuverModel, generate_subject, generate_trajectory
