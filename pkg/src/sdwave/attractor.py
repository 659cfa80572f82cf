"""Equilibria, omega-limits, basins and the truncation splitting of trajectories."""
from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import lyapunov
from .dynamics import (
    BlowUpError,
    SolverConfig,
    State,
    SplitRecord,
    integrate_split,
    random_state,
    simulate,
)
from .model import ModelSpec
from .spectral import SpectralField, coeffs_to_grid, grid_to_coeffs

log = logging.getLogger(__name__)

DEDUP_RADIUS = 1e-6


class NewtonError(RuntimeError):
    def __init__(self, message: str, residual: float = math.nan, condition: float = math.nan):
        super().__init__(message)
        self.residual = residual
        self.condition = condition


def _h1_dist(a: np.ndarray, b: np.ndarray, lam: np.ndarray) -> float:
    return float(np.sqrt(np.sum(lam * (a - b) ** 2)))


def _residual_vector(model: ModelSpec, c: np.ndarray) -> np.ndarray:
    b = model.basis
    fw = grid_to_coeffs(b, model.source.f(coeffs_to_grid(b, c)))
    return b.eigenvalues * c + fw - model.forcing.coeffs


def _synthesis_matrix(basis) -> np.ndarray:
    # grid values of every basis function, columns in C order
    eye = np.eye(basis.size).reshape((basis.size,) + basis.shape)
    return np.stack([coeffs_to_grid(basis, e).ravel() for e in eye], axis=1)


def _jacobian(model: ModelSpec, c: np.ndarray) -> np.ndarray:
    """diag(lam) + P f'(w) P^T assembled from the analytic derivative."""
    b = model.basis
    if model.source.df is None:
        return _fd_jacobian(model, c)
    S = _synthesis_matrix(b)
    fp = model.source.df(coeffs_to_grid(b, c)).ravel()
    J = b.cell_volume * (S.T * fp) @ S
    J[np.diag_indices_from(J)] += b.eigenvalues.ravel()
    return J


def _fd_jacobian(model: ModelSpec, c: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of the Nemytskii map, symmetrized."""
    b = model.basis
    n = b.size
    flat = c.ravel()
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = eps
        J[:, j] = (_residual_vector(model, (flat + e).reshape(b.shape))
                   - _residual_vector(model, (flat - e).reshape(b.shape))).ravel() / (2 * eps)
    return 0.5 * (J + J.T)


@dataclass
class Equilibrium:
    w: SpectralField
    residual: float
    lyapunov: float
    index: int
    iterations: int = 0
    smallest_eigenvalues: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "coefficients": self.w.coeffs.ravel().tolist(),
            "residual": self.residual,
            "lyapunov": self.lyapunov,
            "stability_index": self.index,
            "smallest_eigenvalues": self.smallest_eigenvalues,
        }


def stability_spectrum(model: ModelSpec, w: SpectralField, count: int = 20) -> np.ndarray:
    """Smallest eigenvalues of the projected linearization -Lap + f'(w*)."""
    ev = np.linalg.eigvalsh(_fd_jacobian(model, w.coeffs))
    return ev[:count]


def newton_equilibrium(model: ModelSpec, guess: SpectralField, tol: float = 1e-10,
                       max_iter: int = 50) -> Equilibrium:
    """Damped Newton for -Lap w + P f(w) = g in coefficient space."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = model.basis
    c = np.array(guess.coeffs, dtype=float)
    G = _residual_vector(model, c)
    res = float(np.linalg.norm(G))
    it = 0
    while res >= tol:
        if it >= max_iter:
            raise NewtonError(f"no convergence in {max_iter} iterations (residual {res:.3e})", res)
        J = _jacobian(model, c)
        cond = float(np.linalg.cond(J))
        if not math.isfinite(cond) or cond > 1e13:
            raise NewtonError(f"singular Jacobian (condition estimate {cond:.3e})", res, cond)
        delta = np.linalg.solve(J, G.ravel()).reshape(b.shape)
        step = 1.0
        while True:
            trial = c - step * delta
            with np.errstate(over="ignore", invalid="ignore"):
                Gt = _residual_vector(model, trial)
            rt = float(np.linalg.norm(Gt))
            if math.isfinite(rt) and rt < (1 - 1e-4 * step) * res:
                break
            step *= 0.5
            if step < 1e-8:
                raise NewtonError(f"line search stalled (residual {res:.3e})", res, cond)
        c, G, res = trial, Gt, rt
        it += 1
    w = SpectralField(b, c)
    ev = stability_spectrum(model, w)
    return Equilibrium(
        w=w,
        residual=res,
        lyapunov=lyapunov(model, State(w, b.zeros())),
        index=int(np.sum(ev < -1e-9)),
        iterations=it,
        smallest_eigenvalues=ev.tolist(),
    )


@dataclass
class EquilibriumSet:
    equilibria: list
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.equilibria)

    def __iter__(self):
        return iter(self.equilibria)

    def __getitem__(self, i):
        return self.equilibria[i]

    def distances(self) -> np.ndarray:
        n = len(self.equilibria)
        D = np.zeros((n, n))
        if n == 0:
            return D
        lam = self.equilibria[0].w.basis.eigenvalues
        for i in range(n):
            for j in range(i + 1, n):
                D[i, j] = D[j, i] = _h1_dist(self[i].w.coeffs, self[j].w.coeffs, lam)
        return D

    def nearest(self, w: np.ndarray) -> tuple[int, float]:
        if not self.equilibria:
            return -1, math.inf
        lam = self.equilibria[0].w.basis.eigenvalues
        d = [_h1_dist(w, e.w.coeffs, lam) for e in self.equilibria]
        i = int(np.argmin(d))
        return i, d[i]

    def to_dict(self) -> dict:
        return {"equilibria": [e.to_dict() for e in self], "dropped": self.dropped,
                "distances": self.distances().tolist()}


def _guesses(model: ModelSpec, starts: int, seed: int) -> list:
    b = model.basis
    out = [b.zeros()]
    for amp in (0.5, 1.0, 2.0):
        out += [b.sine_product((1,) * b.dimension, amp), b.sine_product((1,) * b.dimension, -amp)]
    rng = np.random.default_rng(seed)
    for _ in range(starts):
        s = random_state(b, rng, rng.uniform(0.2, 3.0), norm="h")
        out.append(s.w)
    return out


def find_equilibria(model: ModelSpec, starts: int = 8, seed: int = 0, tol: float = 1e-10,
                    radius: float = DEDUP_RADIUS, pool=None) -> EquilibriumSet:
    """Multi-start Newton: zero, +-scaled first mode and seeded random guesses."""
    if starts < 1:
        raise ValueError("starts must be >= 1")

    def attempt(g):
        try:
            return newton_equilibrium(model, g, tol)
        except NewtonError:
            return None

    guesses = _guesses(model, starts, seed)
    results = list(pool.map(attempt, guesses)) if pool is not None else [attempt(g) for g in guesses]
    dropped = sum(r is None for r in results)
    lam = model.basis.eigenvalues
    kept: list = []
    for r in results:
        if r is None:
            continue
        if all(_h1_dist(r.w.coeffs, k.w.coeffs, lam) > radius for k in kept):
            kept.append(r)
    kept.sort(key=lambda e: (round(e.lyapunov, 10), tuple(np.round(e.w.coeffs.ravel(), 10))))
    return EquilibriumSet(kept, dropped)


# -- long-time behaviour -------------------------------------------------------

@dataclass
class OmegaLimitReport:
    converged: bool
    time: float
    velocity: float
    matched: int
    distance: float
    lyapunov_initial: float
    lyapunov_final: float

    @property
    def verdict(self) -> str:
        if not self.converged:
            return "inconclusive"
        return "matched" if self.matched >= 0 else "unmatched"

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["verdict"] = self.verdict
        return d


def omega_limit(model: ModelSpec, s0: State, cfg: SolverConfig, eq_set: EquilibriumSet | None = None,
                threshold: float = 1e-8, dwell: float = 1.0, match_tol: float = 1e-5) -> OmegaLimitReport:
    """Run until ||w_t||_{L_2} stays below ``threshold`` for ``dwell`` time units."""
    below_since = [None]

    def stop(t, w, v):
        if float(np.sqrt(np.sum(v * v))) < threshold:
            if below_since[0] is None:
                below_since[0] = t
            return t - below_since[0] >= dwell
        below_since[0] = None
        return False

    # sample sparsely; only the terminal state matters here
    run_cfg = SolverConfig(cfg.dt, cfg.horizon, cfg.scheme, max(cfg.stride, cfg.steps))
    rec = simulate(model, s0, run_cfg, stop=stop)
    final = rec.final
    vel = float(np.sqrt(np.sum(final.v.coeffs**2)))
    converged = below_since[0] is not None and rec.times[-1] - below_since[0] >= dwell
    idx, dist = (-1, math.inf)
    if eq_set is not None and len(eq_set):
        idx, dist = eq_set.nearest(final.w.coeffs)
        if dist > match_tol:
            idx = -1
    return OmegaLimitReport(bool(converged), float(rec.times[-1]), vel, idx, float(dist),
                            lyapunov(model, s0), lyapunov(model, final))


def basin_sample(model: ModelSpec, ensemble: int, radius: float, seed: int, cfg: SolverConfig,
                 eq_set: EquilibriumSet, pool=None, **kw) -> dict:
    """Tally the omega-limits of random data with H-norm at most ``radius``.

    Keys are equilibrium indices in ``eq_set`` plus "inconclusive" and
    "unmatched".
    """
    if ensemble < 1:
        raise ValueError("ensemble must be >= 1")
    rng = np.random.default_rng(seed)
    starts = [random_state(model.basis, rng, radius * rng.uniform(0.0, 1.0)) for _ in range(ensemble)]

    def run(s):
        try:
            return omega_limit(model, s, cfg, eq_set, **kw)
        except BlowUpError:
            return None

    reports = list(pool.map(run, starts)) if pool is not None else [run(s) for s in starts]
    tally: Counter = Counter()
    for r in reports:
        if r is None or not r.converged:
            tally["inconclusive"] += 1
        elif r.matched < 0:
            tally["unmatched"] += 1
        else:
            tally[r.matched] += 1
    return dict(tally)


# -- splitting by truncation level --------------------------------------------------

@dataclass
class SplittingReport:
    k: int
    horizon: float
    burn_in: float
    sup_v_norm: float
    times: np.ndarray
    u_energy: np.ndarray
    decay_rate: float
    reconstruction_error: float
    sup_abs_w: float
    start_h1_norm: float
    decayed: bool

    def to_dict(self) -> dict:
        return {
            "k": self.k, "horizon": self.horizon, "burn_in": self.burn_in,
            "sup_v_norm": self.sup_v_norm, "decay_rate": self.decay_rate,
            "reconstruction_error": self.reconstruction_error, "sup_abs_w": self.sup_abs_w,
            "start_h1_norm": self.start_h1_norm, "decayed": self.decayed, "u_energy_final": float(self.u_energy[-1]),
            "u_energy_initial": float(self.u_energy[0]),
        }


def _fit_energy_rate(t: np.ndarray, E: np.ndarray) -> float:
    ok = E > 1e-300
    if ok.sum() < 2:
        return math.nan
    t, y = t[ok], np.log(E[ok])
    tail = t >= t[0] + 0.5 * (t[-1] - t[0])
    if tail.sum() < 2:
        tail = slice(None)
    return -float(np.polyfit(t[tail], y[tail], 1)[0])


def relax(model: ModelSpec, s0: State, burn_in: float, dt: float) -> State:
    """Forward burn-in used as a stand-in for a state on the attractor."""
    if burn_in <= 0:
        return s0
    return simulate(model, s0, SolverConfig(dt, burn_in, stride=SolverConfig(dt, burn_in).steps)).final


def splitting_experiment(model: ModelSpec, k_list, s0: State, cfg: SolverConfig,
                         burn_in: float = 20.0, threshold: float = 1e-6,
                         pool=None) -> list[SplittingReport]:
    """Split the trajectory from the relaxed state into v_k + u_k for each k."""
    ks = sorted(int(k) for k in k_list)
    if not ks:
        raise ValueError("k_list is empty")
    b = model.basis
    start = relax(model, s0, burn_in, cfg.dt)
    background = simulate(model, start, SolverConfig(cfg.dt, cfg.horizon, cfg.scheme, 1))
    sup_abs = float(max(np.max(np.abs(coeffs_to_grid(b, w))) for w in background.w))
    lam = b.eigenvalues
    axes = tuple(range(1, b.dimension + 1))

    def one(k) -> SplittingReport:
        rec: SplitRecord = integrate_split(model, k, start, cfg, background)
        vnorm = (np.sqrt(np.sum(lam**2 * rec.v.w**2, axis=axes))
                 + np.sqrt(np.sum(lam * rec.v.v**2, axis=axes)))
        Eu = 0.5 * (np.sum(lam * rec.u.w**2, axis=axes) + np.sum(rec.u.v**2, axis=axes))
        return SplittingReport(
            k=k, horizon=cfg.horizon, burn_in=burn_in,
            sup_v_norm=float(vnorm.max()), times=rec.u.times, u_energy=Eu,
            decay_rate=_fit_energy_rate(rec.u.times, Eu),
            reconstruction_error=float(rec.reconstruction_errors().max()),
            sup_abs_w=sup_abs,
            start_h1_norm=start.h1_norm(),
            decayed=bool(Eu[-1] < threshold * Eu[0]) if Eu[0] > 0 else True,
        )

    return list(pool.map(one, ks)) if pool is not None else [one(k) for k in ks]


def smallest_decaying_k(reports: list[SplittingReport]) -> int | None:
    """k_0: the smallest tested level whose u_k energy fell below threshold."""
    for r in sorted(reports, key=lambda r: r.k):
        if r.decayed:
            return r.k
    return None


def power_law_exponent(ks, values) -> float:
    """Slope of log(values) against log(k)."""
    ks = np.asarray(ks, dtype=float)
    vals = np.asarray(values, dtype=float)
    if len(ks) < 2:
        return 0.0
    return float(np.polyfit(np.log(ks), np.log(vals), 1)[0])
