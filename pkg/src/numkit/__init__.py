# Numeric kernel

from .kernel import (
    STREAM_IDS,
    Matrix,
    RngStream,
    Vector,
    as_matrix,
    check_finite,
    finite_difference_grad,
    relative_error,
    rng_draw_gaussian,
    stable_softmax,
)
