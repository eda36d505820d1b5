"""No-U-Turn sampler with dual-averaging step size and windowed metric adaptation.

Self-contained NUTS over a callable target ``f(q) -> (logp, grad)`` in
unconstrained space:

  * multiplicative trajectory doubling with multinomial state selection
    (slice selection available as a config switch),
  * generalized U-turn criterion using momentum sums under a diagonal metric,
    including the cross-subtree checks at every merge,
  * divergence when the Hamiltonian error exceeds a fixed threshold,
  * dual averaging of the step size toward a target acceptance statistic,
  * three-phase warmup (settle / doubling covariance windows / final step-size
    polish) estimating a diagonal inverse metric from the slow windows.

Chains get independent generators spawned from one SeedSequence, so results
are reproducible for a given seed and independent of the worker count.
"""

from __future__ import annotations

import json
import multiprocessing
import sys
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NutsConfig",
    "PosteriorDraws",
    "nuts_sample",
    "leapfrog_steps",
    "find_reasonable_epsilon",
    "slow_window_ends",
    "DualAveraging",
]

MULTINOMIAL = "multinomial"
SLICE = "slice"


@dataclass(frozen=True)
class NutsConfig:
    """Sampler settings.

    n_iter counts all iterations per chain; the first n_warmup are used for
    adaptation and discarded.  trajectory selects multinomial or slice state
    selection.  The buffers and base window control the warmup phases and are
    rescaled proportionally when n_warmup is too short for the defaults.
    step_size fixes the integrator step and disables all adaptation.
    """

    n_chains: int = 4
    n_iter: int = 2000
    n_warmup: int = 1000
    target_accept: float = 0.8
    max_tree_depth: int = 10
    divergence_threshold: float = 1000.0
    seed: int = 0
    trajectory: str = MULTINOMIAL
    init_buffer: int = 75
    term_buffer: int = 50
    base_window: int = 25
    step_size: float | None = None
    progress: bool = False

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if self.n_iter < 1 or not (0 <= self.n_warmup < self.n_iter):
            raise ValueError("need 0 <= n_warmup < n_iter")
        if not (0.0 < self.target_accept < 1.0):
            raise ValueError("target_accept must be in (0, 1)")
        if self.max_tree_depth < 1:
            raise ValueError("max_tree_depth must be >= 1")
        if self.trajectory not in (MULTINOMIAL, SLICE):
            raise ValueError(f"unknown trajectory scheme {self.trajectory!r}")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")

    @property
    def n_kept(self) -> int:
        return self.n_iter - self.n_warmup


@dataclass
class PosteriorDraws:
    """Post-warmup draws and per-iteration sampler statistics.

    draws: (n_chains, n_kept, dim) unconstrained draws
    logp: (n_chains, n_kept)
    divergent: (n_chains, n_kept) divergence flags of kept iterations
    accept_stat / tree_depth: (n_chains, n_kept)
    warmup_divergences: per-chain divergence counts during warmup
    step_size: per-chain step size used for sampling
    inv_metric: (n_chains, dim) diagonal inverse metric
    """

    draws: np.ndarray
    logp: np.ndarray
    divergent: np.ndarray
    accept_stat: np.ndarray
    tree_depth: np.ndarray
    warmup_divergences: np.ndarray
    step_size: np.ndarray
    inv_metric: np.ndarray
    config: NutsConfig
    events: list = field(default_factory=list)

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_kept(self) -> int:
        return self.draws.shape[1]

    @property
    def dim(self) -> int:
        return self.draws.shape[2]

    @property
    def n_divergent(self) -> int:
        return int(self.divergent.sum())

    def flat(self) -> np.ndarray:
        """All chains stacked, shape (n_chains * n_kept, dim)."""
        return self.draws.reshape(-1, self.draws.shape[2])


def _kinetic(p: np.ndarray, inv_metric: np.ndarray) -> float:
    return 0.5 * float(p @ (inv_metric * p))


def _leapfrog(target, q, p, grad, eps, inv_metric):
    """One leapfrog step; eps carries the integration direction sign."""
    p_half = p + 0.5 * eps * grad
    q_new = q + eps * (inv_metric * p_half)
    lp_new, grad_new = target(q_new)
    p_new = p_half + 0.5 * eps * grad_new
    return q_new, p_new, lp_new, grad_new


def leapfrog_steps(target, q0, p0, eps, n_steps, inv_metric=None):
    """Integrate n_steps of leapfrog; returns (qs, ps, hamiltonians).

    Diagnostic helper: the Hamiltonian drift over a short trajectory measures
    integrator correctness.  H = -logp + kinetic.
    """
    q = np.array(q0, dtype=float)
    p = np.array(p0, dtype=float)
    if inv_metric is None:
        inv_metric = np.ones(q.size)
    lp, grad = target(q)
    qs, ps, hs = [q.copy()], [p.copy()], [-lp + _kinetic(p, inv_metric)]
    for _ in range(n_steps):
        q, p, lp, grad = _leapfrog(target, q, p, grad, eps, inv_metric)
        qs.append(q.copy())
        ps.append(p.copy())
        hs.append(-lp + _kinetic(p, inv_metric))
    return np.array(qs), np.array(ps), np.array(hs)


def find_reasonable_epsilon(target, q, lp, grad, inv_metric, rng, eps0=1.0):
    """Double/halve the step size until one leapfrog's accept ratio crosses 1/2."""
    dim = q.size
    eps = float(eps0)
    p = rng.standard_normal(dim) / np.sqrt(inv_metric)
    h0 = -lp + _kinetic(p, inv_metric)

    def log_ratio(eps_try):
        _, p1, lp1, _ = _leapfrog(target, q, p, grad, eps_try, inv_metric)
        h1 = -lp1 + _kinetic(p1, inv_metric) if np.isfinite(lp1) else np.inf
        return h0 - h1

    r = log_ratio(eps)
    for _ in range(100):
        if np.isfinite(r):
            break
        eps *= 0.5
        r = log_ratio(eps)
    direction = 1.0 if r > np.log(0.5) else -1.0
    for _ in range(100):
        if direction * r <= -direction * np.log(2.0):
            break
        eps *= 2.0**direction
        if not (1e-10 < eps < 1e7):
            break
        r = log_ratio(eps)
    return eps


class DualAveraging:
    """Nesterov dual averaging of log step size toward a target statistic."""

    def __init__(self, eps0: float, target: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.restart(eps0)

    def restart(self, eps0: float) -> None:
        self.mu = np.log(10.0 * eps0)
        self.log_eps = np.log(eps0)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.count = 0

    def update(self, accept_stat: float) -> None:
        self.count += 1
        eta = 1.0 / (self.count + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_stat)
        self.log_eps = self.mu - np.sqrt(self.count) / self.gamma * self.h_bar
        weight = self.count ** (-self.kappa)
        self.log_eps_bar = weight * self.log_eps + (1.0 - weight) * self.log_eps_bar

    @property
    def eps(self) -> float:
        return float(np.exp(self.log_eps))

    @property
    def eps_bar(self) -> float:
        return float(np.exp(self.log_eps_bar))


def _warmup_schedule(n_warmup, init_buffer, term_buffer, base_window):
    """(window_ends, slow_start, slow_end) for the three warmup phases.

    Metric windows double in length between slow_start and slow_end; the last
    window absorbs the remainder.  Buffers shrink proportionally when n_warmup
    cannot fit the requested sizes.
    """
    if n_warmup <= 0:
        return [], 0, 0
    if init_buffer + term_buffer + base_window > n_warmup:
        init_buffer = max(1, int(0.15 * n_warmup))
        term_buffer = max(1, int(0.10 * n_warmup))
        base_window = n_warmup - init_buffer - term_buffer
        if base_window < 1:
            return [], 0, 0
    slow_end = n_warmup - term_buffer
    ends = []
    start, size = init_buffer, base_window
    while True:
        end = start + size
        if end + 2 * size > slow_end:
            ends.append(slow_end)
            return ends, init_buffer, slow_end
        ends.append(end)
        start, size = end, 2 * size


def slow_window_ends(
    n_warmup: int, init_buffer: int = 75, term_buffer: int = 50, base_window: int = 25
) -> list[int]:
    """Iteration indices (1-based) where the metric is re-estimated."""
    return _warmup_schedule(n_warmup, init_buffer, term_buffer, base_window)[0]


class _Welford:
    """Running mean/variance accumulator for the metric windows."""

    def __init__(self, dim: int):
        self.dim = dim
        self.reset()

    def reset(self) -> None:
        self.n = 0
        self.mean = np.zeros(self.dim)
        self.m2 = np.zeros(self.dim)

    def add(self, x: np.ndarray) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def regularized_variance(self) -> np.ndarray:
        """Shrunk sample variance; stays sane for tiny window counts."""
        if self.n < 2:
            return np.ones(self.dim)
        var = self.m2 / (self.n - 1)
        w = self.n / (self.n + 5.0)
        return w * var + (1.0 - w) * 1e-3


class _Subtree:
    """Time-ordered summary of a trajectory segment.

    Full states at the earliest and latest fictitious time of the segment
    (with their velocities inv_metric * p cached for the U-turn checks), the
    momentum sum over its states, a sampled proposal with the segment's total
    log weight, and a validity flag (False after divergence or an internal
    U-turn).
    """

    __slots__ = (
        "q_begin", "p_begin", "vel_begin", "grad_begin", "lp_begin",
        "q_end", "p_end", "vel_end", "grad_end", "lp_end",
        "rho", "proposal", "log_sum_w", "valid",
    )

    def __init__(self, q, p, vel, grad, lp, weight, valid):
        self.q_begin = self.q_end = q
        self.p_begin = self.p_end = p
        self.vel_begin = self.vel_end = vel
        self.grad_begin = self.grad_end = grad
        self.lp_begin = self.lp_end = lp
        self.rho = p.copy()
        self.proposal = (q, lp, grad)
        self.log_sum_w = weight
        self.valid = valid


def _no_uturn(rho, vel_a, vel_b) -> bool:
    """Generalized criterion: momentum sum still aligned with both ends."""
    return (rho @ vel_a) > 0.0 and (rho @ vel_b) > 0.0


class _NutsCore:
    """One NUTS transition; holds per-transition constants and statistics."""

    def __init__(self, target, cfg: NutsConfig, rng):
        self.target = target
        self.cfg = cfg
        self.rng = rng
        self.eps = 1.0
        self.inv_metric = None
        self.h0 = 0.0
        self.log_u = 0.0
        self.sum_accept = 0.0
        self.n_leaves = 0
        self.divergent = False

    def _leaf(self, q, p, grad, lp, direction) -> _Subtree:
        q1, p1, lp1, grad1 = _leapfrog(
            self.target, q, p, grad, direction * self.eps, self.inv_metric
        )
        vel1 = self.inv_metric * p1
        h1 = -lp1 + 0.5 * (p1 @ vel1) if np.isfinite(lp1) else np.inf
        if not np.isfinite(h1):
            h1 = np.inf
        delta = self.h0 - h1  # log accept ratio of this point
        divergent = (h1 - self.h0) > self.cfg.divergence_threshold
        if self.cfg.trajectory == MULTINOMIAL:
            weight = delta
        else:
            weight = 0.0 if self.log_u <= -h1 else -np.inf
        self.sum_accept += float(np.exp(min(0.0, delta)))
        self.n_leaves += 1
        self.divergent |= divergent
        return _Subtree(q1, p1, vel1, grad1, lp1, weight, not divergent)

    def _merge(self, early: _Subtree, late: _Subtree, update_proposal: bool) -> _Subtree:
        """Combine time-adjacent segments; ``early`` is mutated and returned.

        update_proposal=False leaves early.proposal alone (the top level does
        its own biased update before merging).
        """
        log_total = np.logaddexp(early.log_sum_w, late.log_sum_w)
        if update_proposal and late.log_sum_w > -np.inf:
            if np.log(self.rng.uniform()) < late.log_sum_w - log_total:
                early.proposal = late.proposal

        rho_total = early.rho + late.rho
        ok = _no_uturn(rho_total, early.vel_begin, late.vel_end)
        # cross checks: each half extended by the neighbouring boundary momentum
        ok = ok and _no_uturn(
            early.rho + late.p_begin, early.vel_begin, late.vel_begin
        )
        ok = ok and _no_uturn(early.p_end + late.rho, early.vel_end, late.vel_end)

        early.log_sum_w = log_total
        early.rho = rho_total
        early.q_end, early.p_end = late.q_end, late.p_end
        early.vel_end = late.vel_end
        early.grad_end, early.lp_end = late.grad_end, late.lp_end
        early.valid = ok
        return early

    def _build(self, q, p, grad, lp, depth, direction) -> _Subtree:
        """Subtree of 2**depth new states integrated in ``direction``."""
        if depth == 0:
            return self._leaf(q, p, grad, lp, direction)
        first = self._build(q, p, grad, lp, depth - 1, direction)
        if not first.valid:
            return first
        # continue from the frontier in integration time
        if direction > 0:
            fq, fp, fg, fl = first.q_end, first.p_end, first.grad_end, first.lp_end
        else:
            fq, fp, fg, fl = first.q_begin, first.p_begin, first.grad_begin, first.lp_begin
        second = self._build(fq, fp, fg, fl, depth - 1, direction)
        if not second.valid:
            # a failed half poisons the whole subtree; keep flags, skip checks
            first.valid = False
            return first
        if direction > 0:
            return self._merge(first, second, update_proposal=True)
        return self._merge(second, first, update_proposal=True)

    def transition(self, q, lp, grad):
        """One draw; returns (q, lp, grad, divergent, accept_stat, depth)."""
        dim = q.size
        p0 = self.rng.standard_normal(dim) / np.sqrt(self.inv_metric)
        vel0 = self.inv_metric * p0
        self.h0 = -lp + 0.5 * (p0 @ vel0)
        if self.cfg.trajectory == SLICE:
            self.log_u = -self.h0 + np.log(self.rng.uniform())
        self.sum_accept = 0.0
        self.n_leaves = 0
        self.divergent = False

        traj = _Subtree(q, p0, vel0, grad, lp, 0.0, True)
        depth = 0
        while depth < self.cfg.max_tree_depth:
            direction = 1 if self.rng.uniform() < 0.5 else -1
            if direction > 0:
                sub = self._build(traj.q_end, traj.p_end, traj.grad_end, traj.lp_end,
                                  depth, direction)
            else:
                sub = self._build(traj.q_begin, traj.p_begin, traj.grad_begin,
                                  traj.lp_begin, depth, direction)
            if not sub.valid:
                break
            # biased progressive sampling: favor the new half of the trajectory
            if sub.log_sum_w > -np.inf:
                if np.log(self.rng.uniform()) < sub.log_sum_w - traj.log_sum_w:
                    traj.proposal = sub.proposal
            if direction > 0:
                traj = self._merge(traj, sub, update_proposal=False)
            else:
                proposal = traj.proposal
                traj = self._merge(sub, traj, update_proposal=False)
                traj.proposal = proposal
            depth += 1
            if not traj.valid:
                break
        q_new, lp_new, grad_new = traj.proposal
        accept_stat = self.sum_accept / max(self.n_leaves, 1)
        return q_new, lp_new, grad_new, self.divergent, accept_stat, depth


def _run_chain(args):
    (target, init, cfg, chain_id, seed_seq) = args
    rng = np.random.default_rng(seed_seq)
    q = np.array(init, dtype=float)
    dim = q.size
    lp, grad = target(q)
    tries = 0
    while not np.isfinite(lp):
        tries += 1
        if tries > 100:
            raise RuntimeError(
                f"chain {chain_id}: target not finite at the initial point "
                f"after 100 jittered retries"
            )
        q = rng.uniform(-2.0, 2.0, size=dim)
        lp, grad = target(q)

    inv_metric = np.ones(dim)
    events = []
    fixed_eps = cfg.step_size is not None
    if fixed_eps:
        eps = float(cfg.step_size)
        adapt = None
        window_ends, slow_start, slow_end = [], 0, 0
    else:
        eps = find_reasonable_epsilon(target, q, lp, grad, inv_metric, rng)
        adapt = DualAveraging(eps, cfg.target_accept)
        window_ends, slow_start, slow_end = _warmup_schedule(
            cfg.n_warmup, cfg.init_buffer, cfg.term_buffer, cfg.base_window
        )
    window_ends = set(window_ends)
    welford = _Welford(dim)
    events.append(
        {"event": "chain_start", "chain": chain_id, "dim": dim, "step_size": eps}
    )

    n_kept = cfg.n_kept
    draws = np.empty((n_kept, dim))
    logps = np.empty(n_kept)
    div_flags = np.zeros(n_kept, dtype=bool)
    acc_stats = np.zeros(n_kept)
    depths = np.zeros(n_kept, dtype=np.int64)
    warmup_div = 0

    core = _NutsCore(target, cfg, rng)
    progress_every = max(1, cfg.n_iter // 20)
    for it in range(1, cfg.n_iter + 1):
        core.eps = eps
        core.inv_metric = inv_metric
        q, lp, grad, divergent, accept_stat, depth = core.transition(q, lp, grad)
        warming = it <= cfg.n_warmup
        if warming:
            warmup_div += int(divergent)
            if adapt is not None:
                adapt.update(accept_stat)
                eps = adapt.eps
                if slow_start < it <= slow_end:
                    welford.add(q)
                if it in window_ends and welford.n >= 2:
                    inv_metric = welford.regularized_variance()
                    welford.reset()
                    eps = find_reasonable_epsilon(
                        target, q, lp, grad, inv_metric, rng, eps0=eps
                    )
                    adapt.restart(eps)
                    events.append({
                        "event": "metric_update", "chain": chain_id, "iter": it,
                        "step_size": eps,
                        "inv_metric_mean": float(np.mean(inv_metric)),
                    })
                if it == cfg.n_warmup:
                    eps = adapt.eps_bar
                    events.append({
                        "event": "warmup_done", "chain": chain_id,
                        "step_size": eps, "divergences": warmup_div,
                    })
        else:
            k = it - cfg.n_warmup - 1
            draws[k] = q
            logps[k] = lp
            div_flags[k] = divergent
            acc_stats[k] = accept_stat
            depths[k] = depth
        if cfg.progress and (it % progress_every == 0 or it == cfg.n_iter):
            phase = "warmup" if warming else "sampling"
            print(
                f"chain {chain_id}: {it}/{cfg.n_iter} ({phase}) "
                f"step={eps:.3g} divergences={warmup_div + int(div_flags.sum())}",
                file=sys.stderr,
            )
    events.append({
        "event": "chain_done", "chain": chain_id,
        "divergences_warmup": warmup_div,
        "divergences_sampling": int(div_flags.sum()),
        "step_size": eps,
    })
    return draws, logps, div_flags, acc_stats, depths, warmup_div, eps, inv_metric, events


def nuts_sample(target, init, config: NutsConfig, n_workers: int = 1,
                log_path=None) -> PosteriorDraws:
    """Run NUTS chains and collect post-warmup draws.

    init: one vector shared by all chains or an (n_chains, dim) array of
    per-chain starting points.  target(q) must return (logp, grad).  Chains
    run sequentially unless n_workers > 1 (multiprocessing; same results
    either way).  log_path, if given, receives one JSON line per sampler
    event in chain order.
    """
    init = np.asarray(init, dtype=float)
    if init.ndim == 1:
        inits = [init] * config.n_chains
    else:
        if init.shape[0] != config.n_chains:
            raise ValueError(
                f"init has {init.shape[0]} rows but config.n_chains={config.n_chains}"
            )
        inits = [init[i] for i in range(config.n_chains)]
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    jobs = [(target, inits[i], config, i, seeds[i]) for i in range(config.n_chains)]

    if n_workers > 1 and config.n_chains > 1:
        with multiprocessing.Pool(min(n_workers, config.n_chains)) as pool:
            results = pool.map(_run_chain, jobs)
    else:
        results = [_run_chain(job) for job in jobs]

    draws = np.stack([r[0] for r in results])
    logp = np.stack([r[1] for r in results])
    divergent = np.stack([r[2] for r in results])
    accept = np.stack([r[3] for r in results])
    depth = np.stack([r[4] for r in results])
    warm_div = np.array([r[5] for r in results])
    step = np.array([r[6] for r in results])
    inv_metric = np.stack([r[7] for r in results])
    events = [e for r in results for e in r[8]]
    if log_path is not None:
        with open(log_path, "w") as fh:
            for e in events:
                fh.write(json.dumps(e) + "\n")
    return PosteriorDraws(
        draws=draws, logp=logp, divergent=divergent, accept_stat=accept,
        tree_depth=depth, warmup_divergences=warm_div, step_size=step,
        inv_metric=inv_metric, config=config, events=events,
    )
