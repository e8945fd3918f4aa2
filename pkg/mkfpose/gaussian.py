"""Multivariate Gaussians, Gaussian mixtures and their EM training"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import logsumexp
from sklearn.cluster import kmeans_plusplus
from tqdm import tqdm

from . import calculate as calc
from .errors import (ConfigError, DimensionMismatch, EmptyCluster, InsufficientData, SchemaError,
                     SingularCovariance)

logger = logging.getLogger(__name__)

PRIOR_SCHEMA = 'mkfpose.prior'
PRIOR_VERSION = 1
LOG_2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class Gaussian:
    """Multivariate normal density with a cached Cholesky factor."""
    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        d = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (d, d):
            raise DimensionMismatch('mean of dimension {} with covariance of shape {}'.format(mean.shape, cov.shape))
        if np.max(np.abs(cov - cov.T)) > 1e-10 * max(1.0, np.max(np.abs(cov))):
            raise SingularCovariance('covariance is not symmetric')
        cov = calc.symmetrize(cov)
        try:
            chol = scipy.linalg.cholesky(cov, lower=True)
        except np.linalg.LinAlgError as err:
            raise SingularCovariance('covariance is not positive definite') from err
        object.__setattr__(self, 'mean', mean)
        object.__setattr__(self, 'cov', cov)
        object.__setattr__(self, 'chol', chol)

    @property
    def dim(self):
        return self.mean.shape[0]

    @property
    def log_det(self):
        return 2.0 * np.sum(np.log(np.diag(self.chol)))


@dataclass(frozen=True)
class GaussianMixture:
    """Weighted sum of Gaussians of a common dimension."""
    weights: np.ndarray
    components: tuple

    def __post_init__(self):
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        components = tuple(self.components)
        if len(components) == 0 or len(components) != weights.shape[0]:
            raise DimensionMismatch('{} weights for {} components'.format(weights.shape[0], len(components)))
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError('mixture weights must be non-negative and sum to one, sum={!r}'.format(weights.sum()))
        dims = {c.dim for c in components}
        if len(dims) != 1:
            raise DimensionMismatch('mixture components have different dimensions {}'.format(sorted(dims)))
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'components', components)

    @property
    def dim(self):
        return self.components[0].dim

    @property
    def n_components(self):
        return len(self.components)

    @property
    def means(self):
        return np.stack([c.mean for c in self.components])

    @property
    def covs(self):
        return np.stack([c.cov for c in self.components])

    def to_dict(self, layout=None):
        r"""
        Versioned prior-file payload.

        Parameters
        ----------
        layout : dict, optional
                Joint-layout metadata stored alongside the mixture.

        Returns
        -------
        payload : dict
                JSON-serialisable description with row-major covariances.
        """
        return {
            'schema': PRIOR_SCHEMA,
            'version': PRIOR_VERSION,
            'dimension': self.dim,
            'n_components': self.n_components,
            'layout': layout,
            'weights': self.weights.tolist(),
            'means': [c.mean.tolist() for c in self.components],
            'covariances': [c.cov.ravel().tolist() for c in self.components],
        }

    @classmethod
    def from_dict(cls, payload):
        if payload.get('schema') != PRIOR_SCHEMA or payload.get('version') != PRIOR_VERSION:
            raise SchemaError('not a {} v{} payload: schema={!r}, version={!r}'.format(
                PRIOR_SCHEMA, PRIOR_VERSION, payload.get('schema'), payload.get('version')))
        d = int(payload['dimension'])
        weights = np.asarray(payload['weights'], dtype=float)
        components = []
        for mean, cov in zip(payload['means'], payload['covariances']):
            if len(mean) != d or len(cov) != d * d:
                raise DimensionMismatch('component of dimension {} in a prior of dimension {}'.format(len(mean), d))
            components.append(Gaussian(np.asarray(mean), np.asarray(cov).reshape(d, d)))
        return cls(weights / weights.sum(), tuple(components))


@dataclass(frozen=True)
class GaussianProduct:
    """Scaled Gaussian c * N(x | mu_c, Sigma_c)."""
    log_scale: float
    product: Gaussian

    @property
    def scale(self):
        return float(np.exp(self.log_scale))


@dataclass
class EmResult:
    mixture: GaussianMixture
    log_likelihood: list
    n_iter: int
    converged: bool
    reinitialised: dict


def _as_batch(x, d):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != d:
        raise DimensionMismatch('point of dimension {} for a density of dimension {}'.format(x.shape[-1], d))
    return x, single


def _chol_logpdf(x, mean, chol):
    diff = x - mean
    soln = scipy.linalg.solve_triangular(chol, diff.T, lower=True, check_finite=False)
    d = mean.shape[0]
    return -0.5 * (d * LOG_2PI + np.sum(soln ** 2, axis=0)) - np.sum(np.log(np.diag(chol)))


def gauss_logpdf(g, x):
    r"""
    Log-density of a multivariate normal.

    Parameters
    ----------
    g : Gaussian
            Density to evaluate.
    x : array_like, shape(d,) or shape(n,d)
            Evaluation point(s).

    Returns
    -------
    logp : float or np.ndarray, shape(n,)
            :math:`\log \mathcal{N}(x|\mu, \Sigma)`.

    Raises
    ------
    DimensionMismatch
        If the points do not have dimension d.
    """
    x, single = _as_batch(x, g.dim)
    logp = _chol_logpdf(x, g.mean, g.chol)
    return float(logp[0]) if single else logp


def gauss_pdf(g, x):
    return np.exp(gauss_logpdf(g, x))


def gmm_component_logpdf(m, x):
    r"""
    Weighted component log-densities :math:`\log \pi_i + \log \mathcal{N}(x|\mu_i,\Sigma_i)`.

    Parameters
    ----------
    m : GaussianMixture
    x : array_like, shape(n,d)

    Returns
    -------
    logp : np.ndarray, shape(n,N)
    """
    x, _ = _as_batch(x, m.dim)
    with np.errstate(divide='ignore'):
        log_w = np.log(m.weights)
    logp = np.empty((x.shape[0], m.n_components))
    for i, comp in enumerate(m.components):
        logp[:, i] = log_w[i] + _chol_logpdf(x, comp.mean, comp.chol)
    return logp


def gmm_logpdf(m, x):
    """Log-density of a Gaussian mixture, see :func:`gmm_pdf`."""
    x, single = _as_batch(x, m.dim)
    logp = logsumexp(gmm_component_logpdf(m, x), axis=1)
    return float(logp[0]) if single else logp


def gmm_pdf(m, x):
    r"""
    Density of a Gaussian mixture.

    Parameters
    ----------
    m : GaussianMixture
            Mixture :math:`\Phi`.
    x : array_like, shape(d,) or shape(n,d)
            Evaluation point(s).

    Returns
    -------
    p : float or np.ndarray
            :math:`\sum_i \pi_i \mathcal{N}(x|\mu_i, \Sigma_i)`.
    """
    return np.exp(gmm_logpdf(m, x))


def gaussian_product(g_prior, x_prev, q):
    r"""
    Product of a random-walk density centred on a previous state and a Gaussian.

    Parameters
    ----------
    g_prior : Gaussian
            Prior component :math:`\mathcal{N}(x|\mu, \Sigma)`.
    x_prev : array_like, shape(d,)
            Previous state, centre of the random walk.
    q : array_like, shape(d,d)
            Random-walk covariance Q.

    Returns
    -------
    prod : GaussianProduct
            :math:`c\,\mathcal{N}(x|\mu_c, \Sigma_c) = \mathcal{N}(x|x_{prev}, Q)\mathcal{N}(x|\mu, \Sigma)`.

    Raises
    ------
    SingularCovariance
        If :math:`Q` or :math:`Q + \Sigma` is not positive definite.

    Notes
    -----
    The three identities are

    .. math::

        c = \mathcal{N}(x_{prev}|\mu, Q + \Sigma), \quad
        \Sigma_c = (Q^{-1} + \Sigma^{-1})^{-1}, \quad
        \mu_c = \Sigma_c (Q^{-1} x_{prev} + \Sigma^{-1} \mu).

    They are evaluated through the factorisation of :math:`S = Q + \Sigma` only,
    :math:`\Sigma_c = \Sigma S^{-1} Q` and
    :math:`\mu_c = \Sigma S^{-1} x_{prev} + Q S^{-1} \mu`, which stays accurate
    when Q or :math:`\Sigma` is nearly singular.
    """
    d = g_prior.dim
    x_prev, _ = _as_batch(x_prev, d)
    q = np.asarray(q, dtype=float)
    if q.shape != (d, d):
        raise DimensionMismatch('Q of shape {} for a density of dimension {}'.format(q.shape, d))
    try:
        scipy.linalg.cholesky(q, lower=True)
    except np.linalg.LinAlgError as err:
        raise SingularCovariance('random-walk covariance Q is not positive definite') from err
    dyn = component_dynamics(g_prior, q)
    log_c = _chol_logpdf(x_prev, g_prior.mean, dyn.evidence.chol)[0]
    mean = x_prev[0] @ dyn.f.T + dyn.b_mu
    return GaussianProduct(float(log_c), Gaussian(mean, dyn.cov))


@dataclass(frozen=True)
class ComponentDynamics:
    r"""
    Linear-Gaussian form of a prior-modulated random walk for one component.

    ``f`` is :math:`(Q^{-1}+\Sigma^{-1})^{-1}Q^{-1}`, ``b`` is
    :math:`(Q^{-1}+\Sigma^{-1})^{-1}\Sigma^{-1}`, ``b_mu`` is ``b @ mean``,
    ``cov`` is :math:`(Q^{-1}+\Sigma^{-1})^{-1}` and ``evidence`` is
    :math:`\mathcal{N}(\mu, Q+\Sigma)`.
    """
    f: np.ndarray
    b: np.ndarray
    b_mu: np.ndarray
    cov: np.ndarray
    chol: np.ndarray
    evidence: Gaussian


def component_dynamics(g_prior, q):
    """Precompute :class:`ComponentDynamics` for a prior component and a random-walk covariance."""
    sigma = g_prior.cov
    q = np.asarray(q, dtype=float)
    try:
        evidence = Gaussian(g_prior.mean, q + sigma)
    except SingularCovariance as err:
        raise SingularCovariance('Q + Sigma is not positive definite') from err
    cho = (evidence.chol, True)
    # F = Sigma S^-1 and B = Q S^-1, with S symmetric: solve S X = Sigma, transpose
    f = scipy.linalg.cho_solve(cho, sigma).T
    b = scipy.linalg.cho_solve(cho, q).T
    cov = calc.symmetrize(f @ q)
    try:
        chol = scipy.linalg.cholesky(cov, lower=True)
    except np.linalg.LinAlgError as err:
        raise SingularCovariance('conditional transition covariance is not positive definite') from err
    return ComponentDynamics(f, b, b @ g_prior.mean, cov, chol, evidence)


def gmm_sample(m, n, rng_seed):
    r"""
    Draw samples from a Gaussian mixture.

    Parameters
    ----------
    m : GaussianMixture
            Mixture to sample.
    n : int
            Number of samples, at least one.
    rng_seed : int or np.random.Generator
            Seed of the draw.

    Returns
    -------
    samples : np.ndarray, shape(n,d)
            A component is chosen for every sample by a categorical draw on the
            weights, then a Gaussian draw is made from that component.
    """
    if n < 1:
        raise ValueError('number of samples must be at least one, got {}'.format(n))
    rng = np.random.default_rng(rng_seed)
    labels = rng.choice(m.n_components, size=n, p=m.weights)
    noise = rng.standard_normal((n, m.dim))
    samples = np.empty((n, m.dim))
    for i, comp in enumerate(m.components):
        sel = labels == i
        samples[sel] = comp.mean + noise[sel] @ comp.chol.T
    return samples


def _estimate_cov(data, resp_k, mean, n_k):
    diff = data - mean
    cov = (resp_k[:, None] * diff).T @ diff / n_k
    _, cov, n_ridge = calc.cholesky_ridge(cov)
    if n_ridge:
        logger.debug('covariance regularised with %d ridge increase(s)', n_ridge)
    return cov


def em_run(data, k, init_seed=0, max_iters=200, tol=1e-6, progress=False):
    r"""
    Fit a Gaussian mixture with expectation maximisation.

    Parameters
    ----------
    data : array_like, shape(n,d)
            Training vectors.
    k : int
            Number of components.
    init_seed : int
            Seed of the k-means++ initialisation.
    max_iters : int
            Maximum number of EM iterations.
    tol : float
            Convergence threshold on the improvement of the mean per-sample
            log-likelihood.
    progress : bool
            Show a progress bar over iterations.

    Returns
    -------
    result : EmResult
            Fitted mixture, log-likelihood of every iteration (before its
            M-step), number of iterations, convergence flag and a mapping from
            component index to the number of times it was reinitialised.

    Raises
    ------
    InsufficientData
        If there are fewer vectors than components.
    ConfigError
        If ``max_iters`` is below one.
    EmptyCluster
        If the same component collapses twice.

    Notes
    -----
    E-step responsibilities and M-step updates are

    .. math::

        \gamma_{ik} = \frac{\pi_k \mathcal{N}(x_i|\mu_k,\Sigma_k)}
                           {\sum_j \pi_j \mathcal{N}(x_i|\mu_j,\Sigma_j)},\quad
        N_k = \sum_i \gamma_{ik},\quad
        \mu_k = \frac{1}{N_k}\sum_i \gamma_{ik} x_i,\quad
        \Sigma_k = \frac{1}{N_k}\sum_i \gamma_{ik}(x_i-\mu_k)(x_i-\mu_k)^T,\quad
        \pi_k = \frac{N_k}{N}.

    Components are seeded with k-means++ centres and the pooled data
    covariance. A covariance whose Cholesky factorisation fails receives a
    ridge of :math:`10^{-8} tr(\Sigma)/d`. A component with
    :math:`N_k < 10^{-6} N` is restarted at the worst explained data point;
    the second collapse of the same component raises :class:`EmptyCluster`.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    n, d = data.shape
    if d < 1 or k < 1 or n < k:
        raise InsufficientData('{} vectors of dimension {} cannot fit {} components'.format(n, d, k))
    if max_iters < 1:
        raise ConfigError('max_iters must be at least 1, got {}'.format(max_iters))

    centres, _ = kmeans_plusplus(data, n_clusters=k, random_state=init_seed)
    pooled = _estimate_cov(data, np.ones(n), data.mean(axis=0), n)
    means = centres.astype(float)
    covs = np.repeat(pooled[None], k, axis=0)
    weights = np.full(k, 1.0 / k)

    history = []
    reinitialised = {}
    converged = False
    prev_mean_ll = -np.inf
    iterator = tqdm(range(max_iters), desc='EM', disable=not progress)
    for it in iterator:
        # E-step
        mixture = GaussianMixture(weights, tuple(Gaussian(mu, cov) for mu, cov in zip(means, covs)))
        log_prob = gmm_component_logpdf(mixture, data)
        log_norm = logsumexp(log_prob, axis=1)
        ll = float(np.sum(log_norm))
        history.append(ll)
        mean_ll = ll / n
        logger.debug('EM iteration %d: log-likelihood %.6f', it, ll)
        if mean_ll < prev_mean_ll - 1e-12 * max(1.0, abs(prev_mean_ll)):
            logger.warning('EM log-likelihood decreased at iteration %d (%.6g -> %.6g)',
                           it, prev_mean_ll * n, ll)
        if mean_ll - prev_mean_ll < tol:
            converged = True
            break
        prev_mean_ll = mean_ll
        resp = np.exp(log_prob - log_norm[:, None])

        # M-step
        n_k = resp.sum(axis=0)
        restarted = set()
        for j in np.flatnonzero(n_k < 1e-6 * n).tolist():
            reinitialised[j] = reinitialised.get(j, 0) + 1
            if reinitialised[j] > 1:
                raise EmptyCluster('component {} collapsed twice'.format(j))
            worst = int(np.argmin(log_norm))
            logger.info('EM component %d is empty, restarting it at data point %d', j, worst)
            resp[:, j] = 0.0
            resp[worst, :] = 0.0
            resp[worst, j] = 1.0
            means[j] = data[worst]
            covs[j] = pooled
            restarted.add(j)
            n_k = resp.sum(axis=0)
            # restart the monotonicity baseline
            prev_mean_ll = -np.inf
        for j in range(k):
            if j in restarted:
                continue
            means[j] = resp[:, j] @ data / n_k[j]
            covs[j] = _estimate_cov(data, resp[:, j], means[j], n_k[j])
        weights = n_k / n_k.sum()
    else:
        mixture = GaussianMixture(weights, tuple(Gaussian(mu, cov) for mu, cov in zip(means, covs)))
        logger.warning('EM did not converge within %d iterations', max_iters)

    logger.info('EM fitted %d components to %d vectors: log-likelihood %.6f after %d iterations',
                k, n, history[-1], len(history))
    return EmResult(mixture, history, len(history), converged, reinitialised)


def em_fit(data, k, init_seed=0, max_iters=200, tol=1e-6):
    """Fit a Gaussian mixture, see :func:`em_run`."""
    return em_run(data, k, init_seed=init_seed, max_iters=max_iters, tol=tol).mixture
