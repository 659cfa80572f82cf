"""Energy, Lyapunov and stability audits of trajectories and of the linear semigroup."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import (
    SolverConfig,
    State,
    TrajectoryRecord,
    propagator_entries,
    random_state,
    simulate,
)
from .model import ModelSpec, functional_integral
from .spectral import BasisSpec, GridField, SpectralField, coeffs_to_grid, grid_lp_norm


def energy(s: State) -> float:
    """E = (||grad w||^2 + ||w_t||^2) / 2."""
    lam = s.basis.eigenvalues
    return 0.5 * float(np.sum(lam * s.w.coeffs**2) + np.sum(s.v.coeffs**2))


def lyapunov(model: ModelSpec, s: State) -> float:
    """L = E + <F(w), 1> - <g, w>."""
    return (energy(s) + functional_integral(model.source.F, s.w)
            - float(np.sum(model.forcing.coeffs * s.w.coeffs)))


def energy_series(model: ModelSpec, rec: TrajectoryRecord):
    lam = rec.basis.eigenvalues
    axes = tuple(range(1, rec.w.ndim))
    E = 0.5 * (np.sum(lam * rec.w**2, axis=axes) + np.sum(rec.v**2, axis=axes))
    F = np.array([functional_integral(model.source.F, SpectralField(rec.basis, w)) for w in rec.w])
    gw = np.sum(model.forcing.coeffs * rec.w, axis=axes)
    return E, E + F - gw


@dataclass
class EnergyLedger:
    times: np.ndarray
    E: np.ndarray
    L: np.ndarray
    diss_grad: np.ndarray
    diss_sigma: np.ndarray
    residual: np.ndarray           # |balance over [0, t_i]|
    interval_residual: np.ndarray  # |balance over [t_{i-1}, t_i]|

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual))

    @property
    def max_interval_residual(self) -> float:
        return float(np.max(self.interval_residual, initial=0.0))

    def lyapunov_increments(self) -> np.ndarray:
        return np.diff(self.L)


def audit_energy_equality(model: ModelSpec, rec: TrajectoryRecord) -> EnergyLedger:
    """Residual of E + int ||grad w_t||^2 + int <sigma(w) w_t, w_t> + <F(w),1> - <g,w> = const."""
    E, L = energy_series(model, rec)
    balance = L + rec.diss_grad + rec.diss_sigma
    residual = np.abs(balance - balance[0])
    interval = np.abs(np.diff(balance))
    return EnergyLedger(rec.times.copy(), E, L, rec.diss_grad.copy(), rec.diss_sigma.copy(),
                        residual, interval)


@dataclass
class LyapunovCheck:
    passed: bool
    max_increase: float          # largest L(t_{i+1}) - L(t_i), clipped at 0
    max_identity_error: float    # largest |dL + d(dissipation)| per interval
    worst_ratio: float           # max over intervals of violation / slack


def lyapunov_check(model: ModelSpec, rec: TrajectoryRecord, slack_coef: float = 10.0) -> LyapunovCheck:
    """L nonincreasing and dL = -(dissipation) up to slack_coef * dt^2 * (1 + ||s||_H^4) per step."""
    ledger = audit_energy_equality(model, rec)
    if len(rec) < 2:
        return LyapunovCheck(True, 0.0, 0.0, 0.0)
    lam = rec.basis.eigenvalues
    axes = tuple(range(1, rec.w.ndim))
    h = np.sqrt(np.sum(lam * rec.w**2, axis=axes) + np.sum(rec.v**2, axis=axes))
    hmax = np.maximum(h[:-1], h[1:])
    steps = np.maximum(np.round(np.diff(rec.times) / rec.dt), 1.0)
    slack = steps * slack_coef * rec.dt**2 * (1.0 + hmax**4)
    rise = np.maximum(np.diff(ledger.L), 0.0)
    ident = ledger.interval_residual
    worst = float(np.max(np.maximum(rise, ident) / slack))
    return LyapunovCheck(bool(worst <= 1.0), float(rise.max()), float(ident.max()), worst)


@dataclass
class OrderStudy:
    dts: list
    max_residuals: list
    ratios: list

    @property
    def orders(self) -> list:
        return [math.log2(r) for r in self.ratios]


def energy_order_study(model: ModelSpec, s0: State, horizon: float, dts: Sequence[float],
                       sample_every: float = 0.1, scheme: str = "etd2") -> OrderStudy:
    """Max residual of the energy equality for a ladder of step sizes.

    Snapshots are taken at the same physical times for every dt.
    """
    res = []
    for dt in dts:
        stride = max(1, int(round(sample_every / dt)))
        rec = simulate(model, s0, SolverConfig(dt, horizon, scheme, stride))
        res.append(audit_energy_equality(model, rec).max_residual)
    ratios = [a / b for a, b in zip(res[:-1], res[1:])]
    return OrderStudy(list(dts), res, ratios)


# -- linear semigroup estimates ---------------------------------------------------

def slow_rates(basis: BasisSpec) -> np.ndarray:
    """|Re mu_slow(lam)| per mode; roots of mu^2 + lam mu + lam."""
    lam = basis.eigenvalues
    disc = lam * lam - 4.0 * lam
    return np.where(disc > 0, 0.5 * (lam - np.sqrt(np.maximum(disc, 0.0))), 0.5 * lam)


@dataclass
class DecayReport:
    rate: float
    prefactor: float
    analytic_rate: float
    probe_rate: float
    sup_prefactor: float
    mode_rates: list
    relative_deviation: float
    horizon: float
    probes: int

    def to_dict(self) -> dict:
        return asdict(self)


def _h1_norms(basis: BasisSpec, ws: np.ndarray, vs: np.ndarray) -> np.ndarray:
    lam = basis.eigenvalues
    axes = tuple(range(1, ws.ndim))
    return np.sqrt(np.sum(lam**2 * ws**2, axis=axes) + np.sum(lam * vs**2, axis=axes))


def _spectral_norm_2x2(a, b, c, d):
    fro2 = a * a + b * b + c * c + d * d
    det = np.abs(a * d - b * c)
    return np.sqrt(0.5 * (fro2 + np.sqrt(np.maximum(fro2 * fro2 - 4 * det * det, 0.0))))


def decay_operator_norm(basis: BasisSpec, t: float) -> float:
    """Exact ||U(t)||_{H_1 -> H_1}: the largest per-mode 2x2 norm in weighted coordinates."""
    lam = basis.eigenvalues.ravel()
    ww, wv, vw, vv = (a.ravel() for a in propagator_entries(basis, t))
    r = np.sqrt(lam)
    return float(_spectral_norm_2x2(ww, r * wv, vw / r, vv).max())


def _tail_fit(ts: np.ndarray, amp: np.ndarray, horizon: float) -> tuple[float, float]:
    tail = ts >= 0.5 * horizon
    slope, intercept = np.polyfit(ts[tail], np.log(amp[tail]), 1)
    return -float(slope), float(math.exp(intercept))


def measure_decay(basis: BasisSpec, probes: int = 20, horizon: float | None = None,
                  samples: int = 2001, seed: int = 0) -> DecayReport:
    """Fit the decay law ||U(t)||_{H_1 -> H_1} <= M exp(-omega t).

    Random unit probes are evolved and the largest response at each time
    gives ``probe_rate``.  ``rate`` and ``prefactor`` come from the same
    least-squares line (last half of the horizon) through the log of the
    exact operator norm, so M >= 1 is not spoiled by probes that miss the
    slowest direction.  ``sup_prefactor`` is sup_t ||U(t)|| e^{omega t}
    with the analytic rate; it exceeds the fitted prefactor because the
    per-mode generators are not normal.
    """
    if probes < 10:
        raise ValueError("need at least 10 probes")
    rates = slow_rates(basis)
    omega = float(rates.min())
    horizon = 40.0 / omega if horizon is None else float(horizon)
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    rng = np.random.default_rng(seed)
    P = [random_state(basis, rng, 1.0, norm="h1") for _ in range(probes)]
    W = np.array([p.w.coeffs for p in P])
    V = np.array([p.v.coeffs for p in P])
    ts = np.linspace(0.0, horizon, samples)
    amp = np.empty_like(ts)
    opn = np.empty_like(ts)
    for i, t in enumerate(ts):
        ww, wv, vw, vv = propagator_entries(basis, t)
        amp[i] = np.max(_h1_norms(basis, ww * W + wv * V, vw * W + vv * V))
        opn[i] = decay_operator_norm(basis, t)
    probe_rate, _ = _tail_fit(ts, amp, horizon)
    fitted, prefactor = _tail_fit(ts, opn, horizon)
    return DecayReport(
        rate=fitted,
        prefactor=prefactor,
        analytic_rate=omega,
        probe_rate=probe_rate,
        sup_prefactor=float(np.max(opn * np.exp(omega * ts))),
        mode_rates=sorted(set(float(r) for r in rates.ravel())),
        relative_deviation=max(abs(fitted - omega), abs(probe_rate - omega)) / omega,
        horizon=horizon,
        probes=probes,
    )


@dataclass
class SmoothingReport:
    times: list
    amplification: list
    position_amplification: list
    sup_scaled: float

    def to_dict(self) -> dict:
        return asdict(self)


def _mode_norm_smoothing(basis: BasisSpec, t: float) -> tuple[float, float]:
    lam = basis.eigenvalues.ravel()
    ww, wv, vw, vv = (a.ravel() for a in propagator_entries(basis, t))
    # output weights (lam, sqrt lam), input weights (lam, 1)
    a = ww
    b = lam * wv
    c = np.sqrt(lam) * vw / lam
    d = np.sqrt(lam) * vv
    smax = _spectral_norm_2x2(a, b, c, d)
    pos = np.sqrt(a * a + c * c)
    return float(smax.max()), float(pos.max())


def measure_smoothing(basis: BasisSpec, times: Sequence[float] | None = None) -> SmoothingReport:
    """Exact ||U(t)||_{(H^2 cap H^1_0) x L_2 -> H_1} on the Galerkin space.

    Modes decouple, so the norm is the largest per-mode 2x2 spectral norm.
    """
    if times is None:
        times = np.geomspace(1e-4, 1.0, 400)
    times = [float(t) for t in times]
    if min(times) <= 0:
        raise ValueError("times must be positive")
    amp, pos = zip(*(_mode_norm_smoothing(basis, t) for t in times))
    scaled = max(math.sqrt(t) * a for t, a in zip(times, amp))
    return SmoothingReport(times, list(amp), list(pos), scaled)


# -- continuous dependence ---------------------------------------------------------

@dataclass
class DependenceReport:
    deltas: list
    responses: list
    ratios: list
    horizon: float

    @property
    def quadratic_ratios(self) -> list:
        return [r / d**2 for r, d in zip(self.responses, self.deltas)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["quadratic_ratios"] = self.quadratic_ratios
        return d


def dependence_distance(s: State) -> float:
    """||w||_{H^1} + ||w_t||_{H^-1}."""
    lam = s.basis.eigenvalues
    return float(np.sqrt(np.sum(lam * s.w.coeffs**2)) + np.sqrt(np.sum(s.v.coeffs**2 / lam)))


def dependence_response(a: State, b: State) -> float:
    """||w - w^||^2_{H^1} + ||w_t - w^_t||^2_{H^-1}."""
    lam = a.basis.eigenvalues
    dw = a.w.coeffs - b.w.coeffs
    dv = a.v.coeffs - b.v.coeffs
    return float(np.sum(lam * dw**2) + np.sum(dv**2 / lam))


def continuous_dependence(model: ModelSpec, s0: State, direction: State, T: float = 2.0,
                          ladder: int = 7, delta0: float = 1e-2, dt: float = 1e-3,
                          pool=None) -> DependenceReport:
    """Response of the flow at time T to perturbations delta_j * direction.

    ``direction`` is rescaled to unit H^1 x H^-1 distance, so delta_j is the
    initial distance exactly.  ``pool`` (an Executor) runs the ladder
    concurrently.
    """
    if ladder < 4:
        raise ValueError("ladder must have at least 4 rungs")
    size = dependence_distance(direction)
    if size == 0:
        raise ValueError("direction must be nonzero")
    direction = direction * (1.0 / size)
    cfg = SolverConfig(dt, T, stride=max(1, int(round(T / dt))))
    deltas = [delta0 * 2.0**-j for j in range(ladder)]
    run = lambda s: simulate(model, s, cfg).final
    starts = [s0] + [s0 + direction * dj for dj in deltas]
    finals = list(pool.map(run, starts)) if pool is not None else [run(s) for s in starts]
    base = finals[0]
    responses = [dependence_response(base, f) for f in finals[1:]]
    ratios = [r / dj for r, dj in zip(responses, deltas)]
    return DependenceReport(deltas, responses, ratios, T)


# -- Nemytskii continuity --------------------------------------------------------

@dataclass
class ContinuityCheck:
    passed: bool
    epsilons: list
    input_distances: list
    distances: list
    exponent: float


def nemytskii_continuity_check(phi: Callable, v: SpectralField | GridField, steps: int = 8,
                               degree: int = 4, seed: int = 0, eps0: float = 0.1,
                               shrink: float = 0.1, tol: float = 1e-6,
                               sequence: Sequence[GridField] | None = None) -> ContinuityCheck:
    """Check phi(v_n) -> phi(v) in L_{6/r} as v_n -> v in L_6 on the grid.

    By default v_n = v + eps0 * shrink^n * noise with seeded smooth noise;
    an explicit ``sequence`` of grid fields may be supplied instead.
    """
    if steps < 5 and sequence is None:
        raise ValueError("need at least 5 steps")
    if not 1 <= degree <= 6:
        raise ValueError("degree must lie in [1, 6]")
    basis = v.basis
    base = v.values if isinstance(v, GridField) else coeffs_to_grid(basis, v.coeffs)
    p = 6.0 / degree
    if sequence is None:
        rng = np.random.default_rng(seed)
        noise = coeffs_to_grid(basis, rng.standard_normal(basis.shape) / basis.eigenvalues)
        noise /= grid_lp_norm(basis, noise, 6.0)
        eps = [eps0 * shrink**n for n in range(steps)]
        seq = [base + e * noise for e in eps]
    else:
        seq = [g.values for g in sequence]
        eps = [grid_lp_norm(basis, s - base, 6.0) for s in seq]
    target = phi(base)
    inputs = [grid_lp_norm(basis, s - base, 6.0) for s in seq]
    dists = [grid_lp_norm(basis, phi(s) - target, p) for s in seq]
    monotone = all(b <= a for a, b in zip(dists[:-1], dists[1:]))
    return ContinuityCheck(bool(monotone and dists[-1] < tol), list(eps), inputs, dists, p)


# -- uniform H_1 bound ---------------------------------------------------------------

@dataclass
class BoundTracker:
    times: np.ndarray
    h1_norms: np.ndarray
    running_sup: np.ndarray
    phi: np.ndarray
    mu: float

    @property
    def sup(self) -> float:
        return float(self.running_sup[-1])

    def sup_between(self, t0: float, t1: float) -> float:
        sel = (self.times >= t0) & (self.times <= t1)
        return float(np.max(self.h1_norms[sel]))


def track_bound(model: ModelSpec, rec: TrajectoryRecord, mu: float = 0.1) -> BoundTracker:
    """Running sup of ||(w, w_t)||_{H_1} and the functional

        Phi = ||grad w_t||^2/2 + (1+mu)||Lap w||^2/2 + mu <grad w_t, grad w> + <g, Lap w>.
    """
    lam = rec.basis.eigenvalues
    axes = tuple(range(1, rec.w.ndim))
    h1 = _h1_norms(rec.basis, rec.w, rec.v)
    g = model.forcing.coeffs
    phi = (0.5 * np.sum(lam * rec.v**2, axis=axes)
           + 0.5 * (1 + mu) * np.sum(lam**2 * rec.w**2, axis=axes)
           + mu * np.sum(lam * rec.v * rec.w, axis=axes)
           - np.sum(lam * g * rec.w, axis=axes))
    return BoundTracker(rec.times.copy(), h1, np.maximum.accumulate(h1), phi, mu)
