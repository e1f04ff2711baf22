import logging

import numpy as np
import scipy.linalg as sla

from .errors import NumericError

logger = logging.getLogger(__name__)

JITTER_START = 1e-12
JITTER_STOP = 1e-6


def jittered_cholesky(mat: np.ndarray, lower: bool = True):
    """Cholesky factor of a symmetric matrix, adding diagonal jitter on failure.

    Jitter levels are ``1e-12 * tr``, ``1e-11 * tr``, ... ``1e-6 * tr``.
    Returns ``(factor, jitter)`` where ``jitter`` is the amount actually added
    (0.0 when the plain factorization succeeded).
    """
    mat = np.asarray(mat, dtype=np.float64)
    m = mat.shape[0]
    if m == 0:
        return np.zeros((0, 0)), 0.0
    if not np.all(np.isfinite(mat)):
        raise NumericError("matrix to factorize has non-finite entries")
    try:
        return sla.cholesky(mat, lower=lower, check_finite=False), 0.0
    except sla.LinAlgError:
        pass
    trace = float(np.trace(mat))
    scale = trace if trace > 0 else 1.0
    tried = []
    rel = JITTER_START
    while rel <= JITTER_STOP * (1 + 1e-9):
        jitter = rel * scale
        tried.append(jitter)
        try:
            factor = sla.cholesky(
                mat + jitter * np.eye(m), lower=lower, check_finite=False
            )
            logger.debug("cholesky needed jitter %.3e", jitter)
            return factor, jitter
        except sla.LinAlgError:
            rel *= 10.0
    raise NumericError(
        f"Cholesky factorization failed for jitter levels {tried}", jitters=tried
    )
