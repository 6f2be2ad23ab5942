"""Numeric runs of the decentralized methods and Monte-Carlo lower bounds.

Every sample draws valid class functions, class matrices and initial points
satisfying the PEP's initial bounds, runs the actual iteration and records
the PEP criterion.  The maximum over samples can never exceed the PEP value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from decpep.algorithms import (AccDngdParams, DgdParams, DigingParams, Formulation,
                               accdngd_alpha_sequence)
from decpep.consensus import random_member
from decpep.core import PepError


@dataclass
class MaxAffine:
    """``f(x) = max_j a_j . x + b_j``; subgradients have norm <= max ||a_j||."""

    A: np.ndarray  # pieces x d
    b: np.ndarray

    def value(self, x) -> float:
        return float(np.max(self.A @ x + self.b))

    def grad(self, x) -> np.ndarray:
        return self.A[int(np.argmax(self.A @ x + self.b))].copy()


@dataclass
class Quadratic:
    """``f(x) = x.A x / 2 + b . x`` with A symmetric PSD."""

    A: np.ndarray
    b: np.ndarray

    def value(self, x) -> float:
        return float(0.5 * x @ self.A @ x + self.b @ x)

    def grad(self, x) -> np.ndarray:
        return self.A @ x + self.b


def _matrix_at(W, k: int) -> np.ndarray:
    return np.asarray(W(k) if callable(W) else W, dtype=float)


def _avg_value(fs, x) -> float:
    return sum(f.value(x) for f in fs) / len(fs)


def run_dgd(fs: Sequence, W, x0, alphas: Sequence[float], xstar) -> float:
    """DGD from a shared ``x0``; returns ``f(x_av) - f(x*)`` with x_av the mean
    of all iterates ``x_i^0 .. x_i^K``.  ``W`` is a matrix or ``k -> matrix``."""
    N = len(fs)
    x = np.tile(np.atleast_1d(np.asarray(x0, dtype=float)), (N, 1))
    total = x.sum(axis=0)
    for k, a in enumerate(alphas):
        g = np.array([f.grad(x[i]) for i, f in enumerate(fs)])
        x = _matrix_at(W, k) @ x - a * g
        total += x.sum(axis=0)
    x_av = total / (N * (len(alphas) + 1))
    return _avg_value(fs, x_av) - _avg_value(fs, np.atleast_1d(xstar))


def run_diging(fs: Sequence, W, x0, alpha: float, K: int, xstar) -> float:
    """DIGing with ``s^0 = grad f(x^0)``; returns ``(1/N) sum ||x_i^K - x*||^2``."""
    x = np.array(x0, dtype=float)
    g = np.array([f.grad(x[i]) for i, f in enumerate(fs)])
    s = g.copy()
    for k in range(K):
        Wk = _matrix_at(W, k)
        x = Wk @ x - alpha * s
        g_new = np.array([f.grad(x[i]) for i, f in enumerate(fs)])
        s = Wk @ s + g_new - g
        g = g_new
    return float(np.mean(np.sum((x - xstar) ** 2, axis=1)))


def run_accdngd(fs: Sequence, W, p: AccDngdParams, xstar, dim: int) -> float:
    """Acc-DNGD from the origin; returns ``f(xbar^K) - f(x*)``."""
    N = len(fs)
    alphas = accdngd_alpha_sequence(p.eta, p.beta, p.k0, p.L, p.K)
    x = np.zeros((N, dim))
    v = np.zeros((N, dim))
    y = np.zeros((N, dim))
    g = np.array([f.grad(y[i]) for i, f in enumerate(fs)])
    s = g.copy() if p.s_init == "local" else np.tile(g.mean(axis=0), (N, 1))
    for k in range(p.K):
        Wk = _matrix_at(W, k)
        eta = p.eta_k(k)
        x = Wk @ y - eta * s
        v = Wk @ v - (eta / alphas[k]) * s
        a = alphas[k + 1]
        y = a * x + (1.0 - a) * v
        g_new = np.array([f.grad(y[i]) for i, f in enumerate(fs)])
        s = Wk @ s + g_new - g
        g = g_new
    return _avg_value(fs, x.mean(axis=0)) - _avg_value(fs, xstar)


# ---------------------------------------------------------------------------
# sampling


def _unit(rng, d):
    u = rng.standard_normal(d)
    return u / np.linalg.norm(u)


def sample_max_affine(rng, R: float, d: int, pieces: int | None = None) -> MaxAffine:
    pieces = pieces or int(rng.integers(1, 6))
    A = np.array([_unit(rng, d) * R * rng.uniform() ** (1.0 / d) for _ in range(pieces)])
    b = rng.standard_normal(pieces)
    return MaxAffine(A, b)


def sample_quadratic(rng, mu: float, L: float, d: int) -> Quadratic:
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    lam = rng.uniform(mu, L, size=d)
    lam[rng.integers(d)] = rng.choice([mu, L])  # touch the class boundary
    return Quadratic((Q * lam) @ Q.T, rng.standard_normal(d))


def minimize_max_affine_sum(fs: Sequence[MaxAffine]) -> np.ndarray | None:
    """Minimizer of the average by LP, or None when unbounded."""
    N, d = len(fs), fs[0].A.shape[1]
    c = np.concatenate([np.zeros(d), np.full(N, 1.0 / N)])
    rows, rhs = [], []
    for i, f in enumerate(fs):
        for a, b in zip(f.A, f.b):
            e = np.zeros(N)
            e[i] = -1.0
            rows.append(np.concatenate([a, e]))
            rhs.append(-b)
    res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=[(None, None)] * (d + N),
                  method="highs")
    return res.x[:d] if res.status == 0 else None


def _matrix_sampler(form: Formulation, N: int, rng, fresh_each_step: bool) -> Callable[[int], np.ndarray]:
    if form.kind == "exact":
        W = np.asarray(form.W, dtype=float)
        return lambda k: W
    if N == 1:
        return lambda k: np.ones((1, 1))
    if not fresh_each_step:
        W = random_member(N, form.spectral, rng)
        return lambda k: W
    cache: dict[int, np.ndarray] = {}

    def at(k):
        if k not in cache:
            cache[k] = random_member(N, form.spectral, rng)
        return cache[k]
    return at


def _dgd_sample(p: DgdParams, rng, d: int) -> float:
    for _ in range(100):
        fs = [sample_max_affine(rng, p.R, d) for _ in range(p.N)]
        xstar = minimize_max_affine_sum(fs)
        if xstar is not None:
            break
    else:
        raise PepError("could not sample a bounded F_R instance")
    x0 = xstar + _unit(rng, d) * p.D * rng.uniform(0.5, 1.5)
    dist = np.linalg.norm(x0 - xstar)
    if dist > p.D:
        x0 = xstar + (x0 - xstar) * (p.D / dist)
    W = _matrix_sampler(p.formulation, p.N, rng, fresh_each_step=False)
    return run_dgd(fs, W, x0, p.step_sizes(), xstar)


def _diging_sample(p: DigingParams, rng, d: int) -> float:
    fs = [sample_quadratic(rng, p.mu, p.L, d) for _ in range(p.N)]
    xstar = np.linalg.solve(sum(f.A for f in fs), -sum(f.b for f in fs))
    x0 = xstar + rng.standard_normal((p.N, d))
    # x -> t x, b -> t b scales both initial quantities by t^2
    g0 = np.array([f.grad(x0[i]) for i, f in enumerate(fs)])
    px = np.mean(np.sum((x0 - xstar) ** 2, axis=1))
    ps = np.mean(np.sum((g0 - g0.mean(axis=0)) ** 2, axis=1))
    t = min(1.0, p.D / np.sqrt(px) if px > 0 else 1.0, p.E / np.sqrt(ps) if ps > 0 else 1.0)
    fs = [Quadratic(f.A, t * f.b) for f in fs]
    W = _matrix_sampler(p.formulation, p.N, rng, fresh_each_step=p.policy == "time-varying")
    return run_diging(fs, W, t * x0, p.alpha, p.K, t * xstar)


def _accdngd_sample(p: AccDngdParams, rng, d: int) -> float:
    fs = [sample_quadratic(rng, 0.0, p.L, d) for _ in range(p.N)]
    H = sum(f.A for f in fs)
    xstar = np.linalg.lstsq(H, -sum(f.b for f in fs), rcond=None)[0]
    t = min(1.0, p.D / np.linalg.norm(xstar)) if np.linalg.norm(xstar) > 0 else 1.0
    fs = [Quadratic(f.A, t * f.b) for f in fs]
    W = _matrix_sampler(p.formulation, p.N, rng, fresh_each_step=False)
    return run_accdngd(fs, W, p, t * xstar, d)


_SAMPLERS = {DgdParams: _dgd_sample, DigingParams: _diging_sample, AccDngdParams: _accdngd_sample}


def sample_criteria(params, samples: int, seed=0, dim: int = 2) -> np.ndarray:
    """Criterion values of ``samples`` independent runs (one RNG stream each)."""
    if not 1 <= dim <= 5:
        raise PepError("sampling dimension must be in 1..5")
    fn = _SAMPLERS.get(type(params))
    if fn is None:
        raise PepError(f"no sampler for {type(params).__name__}")
    streams = np.random.SeedSequence(seed).spawn(samples)
    return np.array([fn(params, np.random.default_rng(s), dim) for s in streams])


def monte_carlo_lower_bound(params, samples: int = 500, seed=0, dim: int = 2) -> float:
    """Largest criterion over random valid instances, a lower bound on the PEP value."""
    vals = sample_criteria(params, samples, seed, dim)
    return float(vals.max()) if len(vals) else -np.inf
