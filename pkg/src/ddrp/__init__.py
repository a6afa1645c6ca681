"""Data-driven regularization by projection.

Solve ``T u = y`` using only training pairs ``T u_i = y_i``, either through
an orthonormalization of the training outputs (:mod:`ddrp.ortho`) or through
the Gram system of the outputs viewed as a frame (:mod:`ddrp.frames`).
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AllColumnsDependent,
    DDRPError,
    DimensionMismatch,
    EmptyCorpus,
    GeometryMismatch,
    InsufficientItems,
    InvalidTrainingPair,
    NotInSpan,
    SingularGram,
    ZeroFamily,
)
from .frames import (  # noqa: E402
    FrameSystem,
    Regularization,
    apply_restricted_frame_operator,
    build_frame_system,
    dual_family,
    frame_bounds,
    reconstruct_frame,
    riesz_approximation,
    solve_frame_coefficients,
)
from .ortho import (  # noqa: E402
    Method,
    OrthonormalSystem,
    Reconstruction,
    ToleranceConfig,
    TrainingSet,
    classical_gram_schmidt,
    householder_orthonormalize,
    modified_gram_schmidt,
    ortho_error,
    orthonormalize,
    qr_orthonormalize,
    reconstruct_ortho,
)
