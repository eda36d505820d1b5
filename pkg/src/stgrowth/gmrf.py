"""CAR-AR Gaussian random field over a region graph.

The field phi has one value per (week, region).  Week 1 is a proper CAR draw,
later weeks follow an AR(1) in time with CAR innovations:

    phi_1 ~ N(0, (1/tau) * Q(alpha)^{-1})
    phi_t ~ N(rho * phi_{t-1}, (1/tau) * Q(alpha)^{-1}),   Q = D - alpha * W

where D is the (island-patched) degree matrix and ``tau`` is the innovation
precision (the inverse of the innovation variance).  The per-week density is
evaluated in sparse form, dropping the phi-independent constant
(G/2)*log(2*pi) - 0.5*log det D; ``normalizing_gap`` returns that constant and
``dense_carar_lpdf`` the full multivariate-normal value for cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .graph import SpatialGraph, dense_adjacency

__all__ = [
    "CarArState",
    "sparse_carar_lpdf",
    "dense_carar_lpdf",
    "normalizing_gap",
    "carar_stack_lpdf",
    "carar_stack_lpdf_grad",
    "carar_prior_sample",
]


@dataclass
class CarArState:
    """Field values and hyperparameters of the CAR-AR prior.

    phi: (n_times, n_regions) field values
    alpha: spatial autocorrelation in [0, 1)
    rho: temporal autocorrelation in (-1, 1)
    tau: innovation precision, > 0
    """

    phi: np.ndarray
    alpha: float
    rho: float
    tau: float

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        if self.phi.ndim != 2:
            raise ValueError(f"phi must be (n_times, n_regions), got shape {self.phi.shape}")
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if not (-1.0 < self.rho < 1.0):
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")
        if not (self.tau > 0.0):
            raise ValueError(f"tau must be positive, got {self.tau}")


def _check_hyper(alpha: float, tau: float, graph: SpatialGraph) -> None:
    if not (tau > 0.0):
        raise ValueError(f"tau must be positive, got {tau}")
    if alpha < 0.0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    lam_max = float(graph.spectrum[-1]) if graph.spectrum.size else 0.0
    if alpha * lam_max >= 1.0:
        raise ValueError(
            f"precision matrix not positive definite: alpha*lambda_max = "
            f"{alpha * lam_max:.6f} >= 1"
        )


def sparse_carar_lpdf(
    phi: np.ndarray,
    phi_prev: np.ndarray | None,
    rho: float,
    tau: float,
    alpha: float,
    graph: SpatialGraph,
) -> float:
    """Sparse conditional log density of one week given the previous one.

    phi_prev=None means the initial week (zero mean).  Omits the constant
    (G/2)*log(2*pi) - 0.5*log det D; see normalizing_gap.
    """
    _check_hyper(alpha, tau, graph)
    phi = np.asarray(phi, dtype=float)
    g = graph.n_regions
    if phi.shape != (g,):
        raise ValueError(f"phi must have shape ({g},), got {phi.shape}")
    if phi_prev is None:
        phid = phi
    else:
        phi_prev = np.asarray(phi_prev, dtype=float)
        if phi_prev.shape != (g,):
            raise ValueError(f"phi_prev must have shape ({g},), got {phi_prev.shape}")
        phid = phi - rho * phi_prev
    quad_d = float(np.sum(graph.degrees * phid**2))
    quad_w = 2.0 * float(np.sum(graph.edge_w * phid[graph.edge_i] * phid[graph.edge_j]))
    log_det_terms = float(np.sum(np.log1p(-alpha * graph.spectrum)))
    return 0.5 * (g * np.log(tau) + log_det_terms - tau * (quad_d - alpha * quad_w))


def normalizing_gap(graph: SpatialGraph) -> float:
    """Constant dropped by the sparse form: dense lpdf = sparse lpdf + gap."""
    g = graph.n_regions
    return 0.5 * float(np.sum(np.log(graph.degrees))) - 0.5 * g * np.log(2.0 * np.pi)


def dense_carar_lpdf(
    phi: np.ndarray,
    phi_prev: np.ndarray | None,
    rho: float,
    tau: float,
    alpha: float,
    graph: SpatialGraph,
) -> float:
    """Full multivariate-normal log density N(rho*phi_prev, (1/tau) Q^{-1}).

    Dense oracle for test-scale graphs; builds Q = D - alpha*W explicitly and
    errors if it is not positive definite.
    """
    _check_hyper(alpha, tau, graph)
    phi = np.asarray(phi, dtype=float)
    g = graph.n_regions
    mean = np.zeros(g) if phi_prev is None else rho * np.asarray(phi_prev, dtype=float)
    q = np.diag(graph.degrees) - alpha * dense_adjacency(graph)
    try:
        chol = np.linalg.cholesky(q)
    except np.linalg.LinAlgError as exc:
        raise ValueError("precision matrix not positive definite") from exc
    resid = phi - mean
    log_det_q = 2.0 * float(np.sum(np.log(np.diag(chol))))
    quad = tau * float(resid @ q @ resid)
    return -0.5 * g * np.log(2.0 * np.pi) + 0.5 * (g * np.log(tau) + log_det_q) - 0.5 * quad


def carar_stack_lpdf(
    phi: np.ndarray, rho: float, tau: float, alpha: float, graph: SpatialGraph
) -> float:
    """Sum of sparse conditional densities over all weeks (week 1 zero-mean)."""
    lp, _, _, _, _ = carar_stack_lpdf_grad(phi, rho, tau, alpha, graph)
    return lp


def carar_stack_lpdf_grad(
    phi: np.ndarray,
    rho: float,
    tau: float,
    alpha: float,
    graph: SpatialGraph,
    w_dense: np.ndarray | None = None,
):
    """Joint sparse log density of the whole field and its partial derivatives.

    phi: (n_times, n_regions)
    Returns (lp, d_phi, d_alpha, d_rho, d_tau) with d_phi shaped like phi and
    the rest scalars.  w_dense lets callers pass a precomputed adjacency matrix
    to keep this allocation-light inside samplers.
    """
    _check_hyper(alpha, tau, graph)
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2 or phi.shape[1] != graph.n_regions:
        raise ValueError(
            f"phi must be (n_times, {graph.n_regions}), got shape {phi.shape}"
        )
    n_times, g = phi.shape
    if w_dense is None:
        w_dense = dense_adjacency(graph)

    phid = phi.copy()
    phid[1:] -= rho * phi[:-1]

    w_phid = phid @ w_dense                     # (T, G), W symmetric
    d_phid = phid * graph.degrees               # (T, G)
    q_phid = d_phid - alpha * w_phid            # Q phid per week
    quad_w = np.einsum("tg,tg->t", phid, w_phid)
    quad_q = np.einsum("tg,tg->t", phid, q_phid)

    log_det_terms = float(np.sum(np.log1p(-alpha * graph.spectrum)))
    lp = 0.5 * (
        n_times * (g * np.log(tau) + log_det_terms) - tau * float(np.sum(quad_q))
    )

    grad_phid = -tau * q_phid
    d_phi = grad_phid.copy()
    d_phi[:-1] -= rho * grad_phid[1:]
    d_rho = -float(np.einsum("tg,tg->", grad_phid[1:], phi[:-1]))
    lam = graph.spectrum
    d_alpha = -0.5 * n_times * float(np.sum(lam / (1.0 - alpha * lam))) + 0.5 * tau * float(
        np.sum(quad_w)
    )
    d_tau = 0.5 * n_times * g / tau - 0.5 * float(np.sum(quad_q))
    return lp, d_phi, d_alpha, d_rho, d_tau


def carar_prior_sample(
    rng: np.random.Generator,
    rho: float,
    tau: float,
    alpha: float,
    graph: SpatialGraph,
    n_times: int,
) -> np.ndarray:
    """Draw a (n_times, n_regions) field from the CAR-AR prior."""
    _check_hyper(alpha, tau, graph)
    if n_times < 1:
        raise ValueError("n_times must be >= 1")
    g = graph.n_regions
    q = np.diag(graph.degrees) - alpha * dense_adjacency(graph)
    try:
        chol = np.linalg.cholesky(q)
    except np.linalg.LinAlgError as exc:
        raise ValueError("precision matrix not positive definite") from exc
    # x = L^{-T} z has covariance Q^{-1}; scale by innovation sd 1/sqrt(tau)
    z = rng.standard_normal((n_times, g)) / np.sqrt(tau)
    innov = solve_triangular(chol, z.T, lower=True, trans="T").T
    phi = np.empty((n_times, g))
    phi[0] = innov[0]
    for t in range(1, n_times):
        phi[t] = rho * phi[t - 1] + innov[t]
    return phi
