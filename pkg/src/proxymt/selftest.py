"""Quick internal consistency checks behind ``proxymt selftest``.

Each check returns ``{"name", "ok", "value", "tol", "detail"}``. Sizes are
small so the whole suite runs in a few seconds.
"""

from __future__ import annotations

import numpy as np
from scipy.stats import ortho_group

from .estimator import multitaper_estimate, tapered_periodogram
from .grid import DomainMask
from .operator import ConcentrationOperator, dense_operator, make_bandwidth, trace_diagnostics
from .tapers import make_rng, proxy_tapers, rotate_tapers

__all__ = ["random_mask", "naive_periodogram", "run_selftest"]


def random_mask(rng: np.random.Generator, dims, fill: float = 0.6) -> DomainMask:
    """Bernoulli mask with at least one occupied site."""
    occ = rng.random(dims) < fill
    occ.flat[rng.integers(occ.size)] = True
    return DomainMask(occ)


def naive_periodogram(x: np.ndarray, taper_grid: np.ndarray) -> np.ndarray:
    """``|sum_q m[q] x[q] e^{-2 pi i q . xi}|^2`` by explicit sums, centred lattice."""
    dims = x.shape
    coords = np.stack(np.meshgrid(*[np.arange(n) for n in dims], indexing="ij"), -1).reshape(-1, len(dims))
    xis = np.stack(np.meshgrid(*[np.arange(n) / n - 0.5 for n in dims], indexing="ij"), -1).reshape(-1, len(dims))
    phase = np.exp(-2j * np.pi * xis @ coords.T)
    return (np.abs(phase @ (taper_grid * x).ravel()) ** 2).reshape(dims)


def _check(name, value, tol, detail=""):
    return {"name": name, "ok": bool(value <= tol), "value": float(value), "tol": tol,
            "detail": detail or f"{value:.3e} <= {tol:.0e}"}


def _trace_checks():
    out = []
    for dims, W in (((32,), 7 / 32), ((16, 16), 0.25)):
        mask = DomainMask(np.ones(dims, dtype=bool))
        diag = trace_diagnostics(mask, W)
        shannon = W ** len(dims) * mask.n_omega
        out.append(_check(f"trace T {dims}", abs(diag["trace_T"] - shannon) / shannon, 1e-9))
        lam = np.linalg.eigvalsh(dense_operator(mask, W))
        ref = float(np.sum(lam * (1 - lam)))
        out.append(_check(f"defect {dims}", abs(diag["defect"] - ref) / ref, 1e-8))
    return out


def _span_check(rng):
    mask = random_mask(rng, (24, 24))
    bw = make_bandwidth(mask, W=0.2)
    tap = proxy_tapers(mask, K=bw.K, T=3, seed=int(rng.integers(2 ** 31)))
    U = ortho_group.rvs(tap.K, random_state=int(rng.integers(2 ** 31))) if tap.K > 1 else np.eye(1)
    x = rng.standard_normal(mask.dims)
    a = multitaper_estimate(x, tap).values
    b = multitaper_estimate(x, rotate_tapers(tap, U)).values
    return _check("span invariance", np.abs(a - b).max() / np.abs(a).max(), 1e-10)


def _oracle_checks(rng):
    mask = random_mask(rng, (20, 20))
    W = 0.3
    V = rng.standard_normal((mask.n_omega, 5))
    fast = ConcentrationOperator(mask, W).apply(V)
    dense = dense_operator(mask, W) @ V
    out = [_check("fft apply vs dense", np.linalg.norm(fast - dense) / np.linalg.norm(dense), 1e-12)]
    small = random_mask(rng, (8, 8))
    m = rng.standard_normal(small.n_omega)
    m /= np.linalg.norm(m)
    x = rng.standard_normal(small.dims)
    got = tapered_periodogram(x, small, m).values
    ref = naive_periodogram(x, small.embed(m))
    out.append(_check("periodogram vs naive DFT", np.abs(got - ref).max() / np.abs(ref).max(), 1e-10))
    return out


def run_selftest(seed: int = 0) -> list[dict]:
    rng = make_rng(seed)
    return _trace_checks() + [_span_check(rng)] + _oracle_checks(rng)
