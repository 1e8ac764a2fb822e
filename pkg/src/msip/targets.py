"""Target densities: generic unnormalized targets, Gaussian mixtures with
analytic kernel embeddings, and the named benchmark fixtures.

Everything evaluates in batch: a point set is an (n, d) array and
log-densities/scores come back as (n,) / (n, d). Single points (d,) are
accepted and squeezed back.
"""

import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .errors import EstimatorUnavailableError
from .kernel import log_omega

_LOG_2PI = math.log(2.0 * math.pi)


# ------------------------------------------------------------ gaussian mixture


@dataclass
class GmmTarget:
    """Mixture sum_k m_k N(mu_k, Sigma_k) with cached Cholesky factors.

    Weights need not sum to one; everything that must be scale-free
    (scores, responsibilities) is, and everything linear in the density
    (v0, v1) scales with sum(m).
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    _chols: np.ndarray | None = field(default=None, repr=False)
    _blurred: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.covs = np.asarray(self.covs, dtype=float)
        if np.any(self.weights <= 0):
            raise ValueError("mixture weights must be positive")
        if self._chols is None:
            self._chols = np.stack(
                [cholesky(C, lower=True) for C in self.covs]
            )

    @property
    def k(self):
        return self.means.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    def blurred_chols(self, sigma):
        """Cholesky factors of Sigma_k + sigma^2 I, cached per sigma."""
        key = float(sigma)
        if key not in self._blurred:
            eye = np.eye(self.dim)
            self._blurred[key] = np.stack(
                [cholesky(C + key**2 * eye, lower=True) for C in self.covs]
            )
        return self._blurred[key]


def normalized(t):
    """Copy of t with weights scaled to unit sum."""
    return GmmTarget(
        weights=t.weights / t.weights.sum(),
        means=t.means,
        covs=t.covs,
        _chols=t._chols,
        _blurred=t._blurred,
    )


def _component_logpdfs(t, X, chols):
    """log N(x; mu_k, C_k) for every point and component, (n, K)."""
    n = X.shape[0]
    out = np.empty((n, t.k))
    for k in range(t.k):
        L = chols[k]
        z = solve_triangular(L, (X - t.means[k]).T, lower=True,
                             check_finite=False)
        logdet = np.sum(np.log(np.diag(L)))
        out[:, k] = -0.5 * np.einsum("ij,ij->j", z, z) - logdet \
            - 0.5 * t.dim * _LOG_2PI
    return out


def _mixture_lse(t, X, chols):
    """(log-density, responsibilities) of the mixture at X, stably."""
    lp = _component_logpdfs(t, X, chols) + np.log(t.weights)
    m = lp.max(axis=1, keepdims=True)
    e = np.exp(lp - m)
    s = e.sum(axis=1)
    logp = m[:, 0] + np.log(s)
    resp = e / s[:, None]
    return logp, resp


def _as_batch(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != dim:
            raise ValueError(f"point has dim {x.shape[0]}, expected {dim}")
        return x[None, :], True
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"expected (n, {dim}) points, got shape {x.shape}")
    return x, False


def gmm_log_density(t, x):
    """log sum_k m_k N(x; mu_k, Sigma_k) via Cholesky whitening + LSE."""
    X, single = _as_batch(x, t.dim)
    logp, _ = _mixture_lse(t, X, t._chols)
    return logp[0] if single else logp


def gmm_score(t, x):
    """grad log density: -sum_k r_k(x) Sigma_k^{-1} (x - mu_k)."""
    X, single = _as_batch(x, t.dim)
    _, resp = _mixture_lse(t, X, t._chols)
    out = np.zeros_like(X)
    for k in range(t.k):
        L = t._chols[k]
        z = solve_triangular(L, (X - t.means[k]).T, lower=True,
                             check_finite=False)
        w = solve_triangular(L.T, z, lower=False, check_finite=False)
        out -= resp[:, k, None] * w.T
    return out[0] if single else out


def _gmm_log_v0(t, y, sigma):
    Y, single = _as_batch(y, t.dim)
    blurred = GmmTarget(t.weights, t.means, t.covs,
                        _chols=t.blurred_chols(sigma), _blurred={})
    lp = _component_logpdfs(blurred, Y, blurred._chols) + np.log(t.weights)
    m = lp.max(axis=1, keepdims=True)
    logv = m[:, 0] + np.log(np.exp(lp - m).sum(axis=1)) \
        + log_omega(sigma, t.dim)
    return logv, single


def gmm_v0(t, y, sigma):
    """Exact embedding omega * integral kappa(x,y) pi(x) dx for a mixture.

    Equals Z_sigma * sum_k m_k N(y; mu_k, Sigma_k + sigma^2 I); linear in
    the (possibly unnormalized) mixture weights.
    """
    logv, single = _gmm_log_v0(t, y, sigma)
    v = np.exp(logv)
    return v[0] if single else v


def gmm_c_pi(t, sigma):
    """Squared RKHS norm of the mixture's kernel embedding.

    C_pi = Z_sigma sum_{k,l} m_k m_l N(mu_k; mu_l, Sigma_k + Sigma_l
    + sigma^2 I); quadratic in the mixture weights, so normalize first
    when a unit-mass value is wanted.
    """
    d = t.dim
    blur = sigma**2 * np.eye(d)
    total = 0.0
    for a in range(t.k):
        for b in range(t.k):
            L = np.linalg.cholesky(t.covs[a] + t.covs[b] + blur)
            z = solve_triangular(L, t.means[a] - t.means[b], lower=True,
                                 check_finite=False)
            logn = -0.5 * (z @ z) - np.log(np.diag(L)).sum() \
                - 0.5 * d * _LOG_2PI
            total += t.weights[a] * t.weights[b] * math.exp(logn)
    return math.exp(log_omega(sigma, d)) * total


def gmm_grad_log_v0(t, y, sigma):
    """grad log v0: responsibility-weighted -(Sigma_k + sigma^2 I)^{-1}(y-mu_k)."""
    Y, single = _as_batch(y, t.dim)
    chols = t.blurred_chols(sigma)
    blurred = GmmTarget(t.weights, t.means, t.covs, _chols=chols, _blurred={})
    _, resp = _mixture_lse(blurred, Y, chols)
    out = np.zeros_like(Y)
    for k in range(t.k):
        L = chols[k]
        z = solve_triangular(L, (Y - t.means[k]).T, lower=True,
                             check_finite=False)
        w = solve_triangular(L.T, z, lower=False, check_finite=False)
        out -= resp[:, k, None] * w.T
    return out[0] if single else out


# ------------------------------------------------------------- target wrapper


@dataclass
class TargetDensity:
    """Unnormalized log-density with optional score and analytic embeddings.

    ``log_scale_offset`` models an unknown normalization constant: it is
    added to every log-density evaluation and leaves scores untouched.
    """

    dim: int
    base_log_density: Callable
    base_score: Callable | None = None
    log_scale_offset: float = 0.0
    analytic: GmmTarget | None = None
    name: str = ""

    def log_density(self, x):
        return self.base_log_density(np.asarray(x, dtype=float)) \
            + self.log_scale_offset

    @property
    def has_score(self):
        return self.base_score is not None

    def score(self, x):
        if self.base_score is None:
            raise EstimatorUnavailableError(
                f"target {self.name or '<anonymous>'} has no score"
            )
        return self.base_score(np.asarray(x, dtype=float))

    def with_offset(self, log_scale_offset):
        """Same target with a different normalization offset."""
        return replace(self, log_scale_offset=log_scale_offset)


def from_gmm(t, name="gmm"):
    """Wrap a GmmTarget as a TargetDensity with analytic embeddings."""
    return TargetDensity(
        dim=t.dim,
        base_log_density=lambda x: gmm_log_density(t, x),
        base_score=lambda x: gmm_score(t, x),
        analytic=t,
        name=name,
    )


# ------------------------------------------------------------------- fixtures


def _gmm5_aniso_2d():
    angles_mean = np.deg2rad(90.0 + 72.0 * np.arange(5))
    means = 8.0 * np.stack([np.cos(angles_mean), np.sin(angles_mean)], axis=1)
    covs = []
    for k in range(5):
        th = np.deg2rad(72.0 * k)
        c, s = np.cos(th), np.sin(th)
        R = np.array([[c, -s], [s, c]])
        covs.append(R @ np.diag([1.2, 0.12]) @ R.T)
    return GmmTarget(weights=np.full(5, 0.2), means=means,
                     covs=np.stack(covs))


def _gmm_uniform(dim, seed):
    rng = np.random.default_rng(seed)
    means = rng.uniform(0.0, 7.5, size=(5, dim))
    covs = np.broadcast_to(0.5 * np.eye(dim), (5, dim, dim)).copy()
    return GmmTarget(weights=np.full(5, 0.2), means=means, covs=covs)


def _funnel_logp(X):
    x1 = X[:, 0]
    rest = X[:, 1:]
    d_rest = rest.shape[1]
    lp = -0.5 * (math.log(2.0 * math.pi * 9.0) + x1**2 / 9.0)
    if d_rest:
        lp = lp - 0.5 * (
            d_rest * (_LOG_2PI + x1)
            + np.einsum("ij,ij->i", rest, rest) * np.exp(-x1)
        )
    return lp


def _funnel_score(X):
    x1 = X[:, 0]
    rest = X[:, 1:]
    d_rest = rest.shape[1]
    out = np.empty_like(X)
    sq = np.einsum("ij,ij->i", rest, rest) if d_rest else 0.0
    out[:, 0] = -x1 / 9.0 - 0.5 * (d_rest - sq * np.exp(-x1))
    if d_rest:
        out[:, 1:] = -rest * np.exp(-x1)[:, None]
    return out


def _himmelblau_logp(X):
    a = X[:, 0] ** 2 + X[:, 1] - 11.0
    b = X[:, 0] + X[:, 1] ** 2 - 7.0
    return -(a**2) - b**2


def _himmelblau_score(X):
    a = X[:, 0] ** 2 + X[:, 1] - 11.0
    b = X[:, 0] + X[:, 1] ** 2 - 7.0
    out = np.empty_like(X)
    out[:, 0] = -4.0 * X[:, 0] * a - 2.0 * b
    out[:, 1] = -2.0 * a - 4.0 * X[:, 1] * b
    return out


def _batched(fn, dim):
    def call(x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            if x.shape[0] != dim:
                raise ValueError(
                    f"point has dim {x.shape[0]}, expected {dim}"
                )
            return fn(x[None, :])[0]
        return fn(x)

    return call


BENCHMARK_NAMES = ("gmm", "gmm5-aniso-2d", "funnel", "himmelblau")


def make_benchmark(name, dim, seed=0):
    """Construct a named benchmark target.

    gmm: five components N(mu_k, 0.5 I_d), means iid Uniform([0, 7.5]^d)
    from the seed. gmm5-aniso-2d: the fixed anisotropic five-mode 2-D
    mixture. funnel: Neal's funnel with N(0, 9) first coordinate.
    himmelblau: log density minus the Himmelblau polynomial.
    """
    if name == "gmm":
        return from_gmm(_gmm_uniform(dim, seed), name="gmm")
    if name == "gmm5-aniso-2d":
        if dim != 2:
            raise ValueError("gmm5-aniso-2d is two-dimensional")
        return from_gmm(_gmm5_aniso_2d(), name="gmm5-aniso-2d")
    if name == "funnel":
        if dim < 2:
            raise ValueError("funnel requires dim >= 2")
        return TargetDensity(
            dim=dim,
            base_log_density=_batched(_funnel_logp, dim),
            base_score=_batched(_funnel_score, dim),
            name="funnel",
        )
    if name == "himmelblau":
        if dim != 2:
            raise ValueError("himmelblau is two-dimensional")
        return TargetDensity(
            dim=2,
            base_log_density=_batched(_himmelblau_logp, 2),
            base_score=_batched(_himmelblau_score, 2),
            name="himmelblau",
        )
    raise ValueError(
        f"unknown benchmark {name!r}; expected one of {BENCHMARK_NAMES}"
    )


# ---------------------------------------------------------- reference samples


def reference_samples(target, n, seed):
    """Seeded ground-truth-ish samples for metric baselines.

    Exact for mixtures and the funnel; Himmelblau uses importance
    resampling on a fine grid with in-cell jitter.
    """
    rng = np.random.default_rng(seed)
    if target.analytic is not None:
        t = target.analytic
        probs = t.weights / t.weights.sum()
        comp = rng.choice(t.k, size=n, p=probs)
        z = rng.standard_normal((n, t.dim))
        out = np.empty((n, t.dim))
        for k in range(t.k):
            sel = comp == k
            out[sel] = t.means[k] + z[sel] @ t._chols[k].T
        return out
    if target.name == "funnel":
        x1 = 3.0 * rng.standard_normal(n)
        rest = rng.standard_normal((n, target.dim - 1)) \
            * np.exp(0.5 * x1)[:, None]
        return np.concatenate([x1[:, None], rest], axis=1)
    if target.name == "himmelblau":
        g = 1000
        lo, hi = -6.0, 6.0
        ax = np.linspace(lo, hi, g)
        XX, YY = np.meshgrid(ax, ax, indexing="ij")
        P = np.stack([XX.ravel(), YY.ravel()], axis=1)
        lp = target.log_density(P)
        p = np.exp(lp - lp.max())
        p /= p.sum()
        idx = rng.choice(P.shape[0], size=n, p=p)
        h = (hi - lo) / (g - 1)
        return P[idx] + rng.uniform(-0.5 * h, 0.5 * h, size=(n, 2))
    raise ValueError(f"no reference sampler for target {target.name!r}")
