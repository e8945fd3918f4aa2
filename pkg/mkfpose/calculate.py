""" Useful routines shared by the tracking modules"""
import numpy as np
import scipy.linalg
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation
from scipy.special import logsumexp


def rotation_matrix(alpha, beta, gamma):
    r"""
    Camera rotation composed as a z-rotation, then an x-rotation, then a y-rotation.

    Parameters
    ----------
    alpha : float
            Rotation about the y axis in radians.
    beta : float
            Rotation about the x axis in radians.
    gamma : float
            Rotation about the z axis in radians.

    Returns
    -------
    rot : np.ndarray, shape(3,3)
            Rotation matrix :math:`R = R_z(\gamma) R_x(\beta) R_y(\alpha)`.

    Notes
    -----
    Intrinsic ``'ZXY'`` Euler angles give exactly the matrix product above,
    with the right-handed elemental rotations

    .. math::

        R_z(\gamma) = \begin{bmatrix} \cos\gamma & -\sin\gamma & 0\\
                      \sin\gamma & \cos\gamma & 0\\ 0 & 0 & 1\end{bmatrix},\quad
        R_x(\beta) = \begin{bmatrix} 1 & 0 & 0\\ 0 & \cos\beta & -\sin\beta\\
                     0 & \sin\beta & \cos\beta\end{bmatrix},\quad
        R_y(\alpha) = \begin{bmatrix} \cos\alpha & 0 & \sin\alpha\\ 0 & 1 & 0\\
                      -\sin\alpha & 0 & \cos\alpha\end{bmatrix}
    """
    return Rotation.from_euler('ZXY', [gamma, beta, alpha]).as_matrix()


def wrap_half_turn(angle):
    r"""
    Wrap undirected line angles to :math:`[-\pi/2, \pi/2)`.

    Parameters
    ----------
    angle : float or array_like
            Angle differences in radians.

    Returns
    -------
    wrapped : float or np.ndarray
            Angles modulo :math:`\pi`, centred on zero.
    """
    return np.mod(np.asarray(angle) + np.pi / 2, np.pi) - np.pi / 2


def symmetrize(a):
    """Average a square matrix (or a stack of them) with its transpose."""
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def cholesky_ridge(cov, ridge=1e-8, max_attempts=8):
    r"""
    Lower Cholesky factor of a covariance, adding a ridge if the factorisation fails.

    Parameters
    ----------
    cov : array_like, shape(d,d)
            Symmetric covariance matrix.
    ridge : float
            Initial relative ridge; the added term is
            ``ridge * tr(cov) / d * I`` and grows tenfold on every failed attempt.
    max_attempts : int
            Number of ridge increases before giving up.

    Returns
    -------
    chol : np.ndarray, shape(d,d)
            Lower triangular factor of the (possibly regularised) covariance.
    cov_used : np.ndarray, shape(d,d)
            The covariance that was factorised.
    n_ridge : int
            Number of ridge increases that were needed (0 when none).

    Raises
    ------
    np.linalg.LinAlgError
        If the matrix cannot be made positive definite.
    """
    cov = symmetrize(np.asarray(cov, dtype=float))
    d = cov.shape[0]
    scale = max(np.trace(cov) / d, np.finfo(float).tiny)
    cov_used = cov
    for attempt in range(max_attempts + 1):
        try:
            chol = scipy.linalg.cholesky(cov_used, lower=True)
            return chol, cov_used, attempt
        except np.linalg.LinAlgError:
            cov_used = cov + ridge * (10.0 ** attempt) * scale * np.eye(d)
    raise np.linalg.LinAlgError('covariance is not positive definite, even after regularisation')


def log_normalize(log_w):
    r"""
    Normalise log-weights.

    Parameters
    ----------
    log_w : array_like, shape(n,)
            Unnormalised log-weights, ``-inf`` allowed.

    Returns
    -------
    w : np.ndarray, shape(n,)
            Normalised weights (nan everywhere if every weight is zero).
    log_total : float
            Log of the sum of the unnormalised weights.
    """
    log_w = np.asarray(log_w, dtype=float)
    log_total = logsumexp(log_w)
    if not np.isfinite(log_total):
        return np.full(log_w.shape, np.nan), log_total
    w = np.exp(log_w - log_total)
    return w / w.sum(), log_total


def rng_stream(seed, *keys):
    r"""
    Independent random generator for a (seed, keys...) tuple.

    Parameters
    ----------
    seed : int
            Root seed of the experiment.
    *keys : int
            Stream identifiers, e.g. chain index and frame index.

    Returns
    -------
    rng : np.random.Generator
            Generator whose stream depends only on ``seed`` and ``keys``.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys)))


def find_neighbors(points, xi, r):
    r"""
    Find neighbor points inside a search radius

    Parameters
    ----------
    points : array_like, shape(N,2)
            (x,y) of surrounding points in pixels.
    xi     : array_like, shape(2,) or shape(M,2)
            (x,y) of centres of balls in pixels.
    r      : float
            Search radius in pixels

    Returns
    -------
    indices: list
            Indices of neighbor points inside the search radius (one list per
            centre when several centres are given).
    """
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        xi = np.asarray(xi)
        return [] if xi.ndim == 1 else [[] for _ in range(len(xi))]
    obs_tree = cKDTree(points)
    indices = obs_tree.query_ball_point(np.asarray(xi, dtype=float), r=r)

    return indices
