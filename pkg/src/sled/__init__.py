"""Two-sample tests for high-dimensional covariance and relationship matrices.

The test statistic is the larger absolute budgeted leading eigenvalue of the
differential matrix and its negation; significance comes from a permutation
null, and the squared coordinates of the winning eigenvector (its leverage)
rank the features driving the difference. A simulation harness reproduces
power studies over structured covariance scenarios.
"""

from .competitors import (
    METHODS,
    MethodOutcome,
    MultiMethodResult,
    frobenius_statistic,
    max_statistic,
    permutation_pvalues,
)
from .engine import (
    CORRELATION,
    COVARIANCE,
    DataMatrix,
    PermutationTestResult,
    RelationshipKind,
    add_one_p_value,
    adjacency,
    differential_matrix,
    p_value_strict,
    permutation_test,
    rank_features,
    relationship_matrix,
    sled_statistic,
)
from .errors import (
    DegenerateFeature,
    DegenerateVariance,
    DimensionMismatch,
    InstanceTooLarge,
    NonNumericCell,
    ParseError,
    RaggedRows,
    SledError,
)
from .matrix_io import (
    MatrixFile,
    ResultDocument,
    align_by_name,
    read_matrix,
    read_result,
    write_matrix,
    write_result,
)
from .simgen import (
    PowerRow,
    PowerTable,
    Scenario,
    ScenarioMatrices,
    base_covariance,
    differential,
    draw_repetition,
    enforce_pd,
    power_study,
    sample,
)
from .sparse_eig import (
    FpsSolution,
    PmdSolution,
    SparseEigenResult,
    SparsityBudget,
    constrained_pmd,
    fantope_projection,
    fps_admm,
    pmd_rank_one,
    psd_shift,
    soft_threshold,
    sparse_eig_exact,
    symmetrize,
)
from .streams import RNG_KIND, stream

__version__ = "0.1.0"
