"""Inner quadrature rules and the v0 / v1 embedding estimators.

Four estimator families share one evaluation pass over the probe points
y_i + sigma * xi_q: gradient-free, Stein (score-informed), the one-point
Fredholm pair, and the gamma-hybrid. All arithmetic runs in log space with
a per-particle max shift, so only genuinely out-of-range densities
underflow the absolute scale of the result.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EstimatorUnavailableError, NonFiniteDensityError
from .kernel import log_omega

ESTIMATOR_TAGS = ("fredholm", "stein", "gf", "hybrid")


@dataclass(frozen=True)
class InnerQuadrature:
    """Nodes and weights discretizing the standard Gaussian integral."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes",
                           np.atleast_2d(np.asarray(self.nodes, float)))
        object.__setattr__(self, "weights",
                           np.asarray(self.weights, float))
        if self.nodes.shape[0] != self.weights.shape[0] or \
                self.nodes.shape[0] < 1:
            raise ValueError("need Q >= 1 matching nodes and weights")

    @property
    def q(self):
        return self.nodes.shape[0]


def one_point_rule(d):
    """The rule behind the Fredholm estimators: xi = 0 with weight 1."""
    return InnerQuadrature(nodes=np.zeros((1, d)), weights=np.ones(1))


def mc_inner_quadrature(q, d, rng_seed):
    """Q iid standard-normal nodes with uniform weights 1/Q."""
    if q < 1:
        raise ValueError("Q must be at least 1")
    rng = np.random.default_rng(rng_seed)
    return InnerQuadrature(
        nodes=rng.standard_normal((q, d)),
        weights=np.full(q, 1.0 / q),
    )


@dataclass
class EvalCache:
    """One evaluation pass shared by paired v0/v1 calls.

    probes[i, q] = y_i + sigma * xi_q; logpi holds the target log-density
    at every probe; scores is filled only when a score-using estimator
    asked for it.
    """

    probes: np.ndarray
    logpi: np.ndarray
    scores: np.ndarray | None
    density_evals: int
    score_evals: int


@dataclass
class EmbeddingEstimate:
    """v0 (M,) and v1 (M, d) estimates plus evaluation counters."""

    v0_hat: np.ndarray
    v1_hat: np.ndarray
    estimator_tag: str
    density_evals: int
    score_evals: int


def build_cache(t, Y, sigma, rule, need_score=False):
    """Evaluate the target once per (particle, node) pair."""
    Y = np.asarray(Y, dtype=float)
    m, d = Y.shape
    probes = Y[:, None, :] + sigma * rule.nodes[None, :, :]
    flat = probes.reshape(m * rule.q, d)
    logpi = t.log_density(flat).reshape(m, rule.q)
    if not np.all(np.isfinite(logpi)):
        bad = np.unique(np.nonzero(~np.isfinite(logpi))[0])
        raise NonFiniteDensityError(bad.tolist())
    scores = None
    score_evals = 0
    if need_score:
        if not t.has_score:
            raise EstimatorUnavailableError(
                "estimator needs a score but the target has none"
            )
        scores = t.score(flat).reshape(m, rule.q, d)
        score_evals = m * rule.q
    return EvalCache(
        probes=probes,
        logpi=logpi,
        scores=scores,
        density_evals=m * rule.q,
        score_evals=score_evals,
    )


def _shifted(cache, sigma, d):
    """Per-particle shift S_i and the shifted weights omega * u_q * pi."""
    s = cache.logpi.max(axis=1)
    w = np.exp(cache.logpi - s[:, None])
    scale = np.exp(s + log_omega(sigma, d))
    return w, scale


def estimate_v0(t, Y, sigma, rule, cache=None):
    """v0_hat(y_i) = omega_{sigma,d} sum_q u_q pi(y_i + sigma xi_q)."""
    Y = np.asarray(Y, dtype=float)
    if cache is None:
        cache = build_cache(t, Y, sigma, rule)
    w, scale = _shifted(cache, sigma, Y.shape[1])
    return scale * (w @ rule.weights)


def estimate_v1_gradient_free(t, Y, sigma, rule, cache=None):
    """Score-free v1_hat, written in the split form.

    v1_hat(y) = y * v0_hat(y) + sigma * omega * sum_q u_q xi_q pi_q, so a
    symmetric rule cancels the odd term exactly and the one-point rule
    returns y * v0_hat verbatim.
    """
    Y = np.asarray(Y, dtype=float)
    if cache is None:
        cache = build_cache(t, Y, sigma, rule)
    w, scale = _shifted(cache, sigma, Y.shape[1])
    v0 = scale * (w @ rule.weights)
    drift = np.einsum("iq,qd->id", w * rule.weights, rule.nodes)
    return Y * v0[:, None] + sigma * scale[:, None] * drift


def estimate_v1_stein(t, Y, sigma, rule, cache=None):
    """Score-informed v1_hat via the Gaussian integration-by-parts identity.

    v1_hat(y) = y * v0_hat(y) + sigma^2 omega sum_q u_q pi_q s(y + sigma xi_q);
    with the one-point rule this is the Fredholm pair
    omega pi(y) (y + sigma^2 s(y)).
    """
    Y = np.asarray(Y, dtype=float)
    if cache is None or cache.scores is None:
        cache = build_cache(t, Y, sigma, rule, need_score=True)
    w, scale = _shifted(cache, sigma, Y.shape[1])
    v0 = scale * (w @ rule.weights)
    drift = np.einsum("iq,iqd->id", w * rule.weights, cache.scores)
    return Y * v0[:, None] + sigma**2 * scale[:, None] * drift


def estimate_v1_hybrid(gamma, t, Y, sigma, rule, cache=None):
    """(1-gamma) * gradient-free + gamma * Stein on shared evaluations."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    Y = np.asarray(Y, dtype=float)
    if cache is None:
        cache = build_cache(t, Y, sigma, rule, need_score=gamma > 0.0)
    if gamma == 0.0:
        return estimate_v1_gradient_free(t, Y, sigma, rule, cache)
    if gamma == 1.0:
        return estimate_v1_stein(t, Y, sigma, rule, cache)
    gf = estimate_v1_gradient_free(t, Y, sigma, rule, cache)
    st = estimate_v1_stein(t, Y, sigma, rule, cache)
    return (1.0 - gamma) * gf + gamma * st


def estimate_embeddings(t, Y, sigma, rule, estimator, gamma=1.0):
    """One-pass (v0_hat, v1_hat) for a named estimator.

    fredholm ignores the passed rule and uses the one-point rule, giving
    v0 = omega pi(y), v1 = omega pi(y)(y + sigma^2 score(y)).
    """
    Y = np.asarray(Y, dtype=float)
    if estimator not in ESTIMATOR_TAGS:
        raise ValueError(
            f"unknown estimator {estimator!r}; expected {ESTIMATOR_TAGS}"
        )
    if estimator == "fredholm":
        rule = one_point_rule(Y.shape[1])
        cache = build_cache(t, Y, sigma, rule, need_score=True)
        v1 = estimate_v1_stein(t, Y, sigma, rule, cache)
    elif estimator == "stein":
        cache = build_cache(t, Y, sigma, rule, need_score=True)
        v1 = estimate_v1_stein(t, Y, sigma, rule, cache)
    elif estimator == "gf":
        cache = build_cache(t, Y, sigma, rule)
        v1 = estimate_v1_gradient_free(t, Y, sigma, rule, cache)
    else:
        cache = build_cache(t, Y, sigma, rule, need_score=gamma > 0.0)
        v1 = estimate_v1_hybrid(gamma, t, Y, sigma, rule, cache)
    v0 = estimate_v0(t, Y, sigma, rule, cache)
    return EmbeddingEstimate(
        v0_hat=v0,
        v1_hat=v1,
        estimator_tag=estimator,
        density_evals=cache.density_evals,
        score_evals=cache.score_evals,
    )
