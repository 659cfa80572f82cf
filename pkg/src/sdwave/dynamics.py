"""Time evolution of the Galerkin system.

Each mode k carries (w_k, v_k) with linear generator

    A_k = [[0, 1], [-lam_k, -lam_k]],

whose exponential is available in closed form.  The nonlinear forcing
P(g - f(w) - sigma(w) v) enters the velocity equation only and is treated
by an exponential Runge-Kutta rule (ETD2RK of Cox & Matthews, or ETD1).

Write A = m I + B with m = -lam/2 and B^2 = s2 I, s2 = lam^2/4 - lam.  Any
entire function then satisfies

    phi(h A) = P I + Q B,   P = [phi(c+d) + phi(c-d)] / 2,
                            Q = h * (phi(c+d) - phi(c-d)) / (2 d),

with c = h m and d^2 = h^2 s2; near the double root (d -> 0) both are
evaluated from their Taylor series in d^2.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .model import ModelSpec, truncate_damping, truncate_source
from .spectral import BasisSpec, SpectralField, coeffs_to_grid, grid_to_coeffs

log = logging.getLogger(__name__)

# |lam - 4| below this uses the double-root series for exp(tA)
DOUBLE_ROOT_WINDOW = 1e-6


class BlowUpError(FloatingPointError):
    def __init__(self, time: float, message: str = "non-finite state"):
        self.time = time
        super().__init__(f"{message} at t={time:.6g}")


@dataclass(frozen=True, eq=False)
class State:
    w: SpectralField
    v: SpectralField

    def __post_init__(self):
        if self.w.basis != self.v.basis:
            raise ValueError("position and velocity must share a basis")

    @property
    def basis(self) -> BasisSpec:
        return self.w.basis

    @classmethod
    def zeros(cls, basis: BasisSpec) -> "State":
        return cls(basis.zeros(), basis.zeros())

    @classmethod
    def from_arrays(cls, basis: BasisSpec, w, v) -> "State":
        return cls(SpectralField(basis, w), SpectralField(basis, v))

    def __add__(self, other: "State") -> "State":
        return State(self.w + other.w, self.v + other.v)

    def __sub__(self, other: "State") -> "State":
        return State(self.w - other.w, self.v - other.v)

    def __mul__(self, a: float) -> "State":
        return State(self.w * a, self.v * a)

    __rmul__ = __mul__

    def h_norm(self) -> float:
        """Norm in H = H^1_0 x L_2."""
        lam = self.basis.eigenvalues
        return float(np.sqrt(np.sum(lam * self.w.coeffs**2) + np.sum(self.v.coeffs**2)))

    def h1_norm(self) -> float:
        """Norm in H_1 = (H^2 cap H^1_0) x H^1_0."""
        lam = self.basis.eigenvalues
        return float(np.sqrt(np.sum(lam**2 * self.w.coeffs**2) + np.sum(lam * self.v.coeffs**2)))


# -- closed-form linear semigroup --------------------------------------------

@dataclass(frozen=True)
class ModePropagator:
    lam: float
    t: float
    ww: float
    wv: float
    vw: float
    vv: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.ww, self.wv], [self.vw, self.vv]])

    @property
    def determinant(self) -> float:
        return self.ww * self.vv - self.wv * self.vw


def _exp_coefficients(lam: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
    """P, Q with exp(tA) = P I + Q B, per eigenvalue (three branches)."""
    lam = np.asarray(lam, dtype=float)
    c = -0.5 * t * lam
    s2 = 0.25 * lam * lam - lam
    d2 = t * t * s2
    P = np.empty_like(lam)
    Q = np.empty_like(lam)

    near = (np.abs(lam - 4.0) < DOUBLE_ROOT_WINDOW) | (np.abs(d2) < 1e-8)
    real = (~near) & (s2 > 0)
    cplx = (~near) & (s2 < 0)

    if np.any(near):
        z = d2[near]
        e = np.exp(c[near])
        # cosh(sqrt z) and sinh(sqrt z)/sqrt z to O(z^4)
        P[near] = e * (1 + z / 2 + z * z / 24 + z**3 / 720)
        Q[near] = t * e * (1 + z / 6 + z * z / 120 + z**3 / 5040)
    if np.any(real):
        d = np.sqrt(d2[real])
        ep, em = np.exp(c[real] + d), np.exp(c[real] - d)
        P[real] = 0.5 * (ep + em)
        Q[real] = t * (ep - em) / (2.0 * d)
    if np.any(cplx):
        th = np.sqrt(-d2[cplx])
        e = np.exp(c[cplx])
        P[cplx] = e * np.cos(th)
        Q[cplx] = t * e * np.sin(th) / th
    return P, Q


def _assemble(lam: np.ndarray, P: np.ndarray, Q: np.ndarray):
    """Entries (ww, wv, vw, vv) of P I + Q B, B = [[lam/2, 1], [-lam, -lam/2]]."""
    half = 0.5 * lam * Q
    return P + half, Q, -lam * Q, P - half


def mode_propagator(lam: float, t: float) -> ModePropagator:
    """exp(t [[0, 1], [-lam, -lam]]) in closed form."""
    if lam <= 0:
        raise ValueError("eigenvalue must be positive")
    if t < 0:
        raise ValueError("time must be nonnegative")
    lam_a = np.array([float(lam)])
    ww, wv, vw, vv = _assemble(lam_a, *_exp_coefficients(lam_a, float(t)))
    return ModePropagator(float(lam), float(t), float(ww[0]), float(wv[0]), float(vw[0]), float(vv[0]))


def propagator_entries(basis: BasisSpec, t: float):
    lam = basis.eigenvalues
    return _assemble(lam, *_exp_coefficients(lam, t))


def apply_U(s: State, t: float) -> State:
    """Linear semigroup of u_tt - Delta u_t - Delta u = 0, mode by mode."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    ww, wv, vw, vv = propagator_entries(s.basis, float(t))
    w, v = s.w.coeffs, s.v.coeffs
    return State.from_arrays(s.basis, ww * w + wv * v, vw * w + vv * v)


# -- phi functions ------------------------------------------------------------

def phi_scalar(z, jmax: int) -> np.ndarray:
    """phi_0..phi_jmax at complex points z; phi_j(z) = sum_n z^n/(n+j)!."""
    z = np.asarray(z, dtype=complex)
    out = np.empty((jmax + 1,) + z.shape, dtype=complex)
    small = np.abs(z) < 2.0
    if np.any(small):
        zs = z[small]
        for j in range(jmax + 1):
            term = np.full(zs.shape, 1.0 / math.factorial(j), dtype=complex)
            acc = term.copy()
            for n in range(1, 45):
                term = term * zs / (n + j)
                acc = acc + term
            out[j][small] = acc
    big = ~small
    if np.any(big):
        zb = z[big]
        cur = np.exp(zb)
        out[0][big] = cur
        for j in range(jmax):
            cur = (cur - 1.0 / math.factorial(j)) / zb
            out[j + 1][big] = cur
    return out


@lru_cache(maxsize=None)
def _derivative_combo(j: int, r: int) -> tuple[tuple[int, float], ...]:
    # d/dz phi_i = phi_i - i phi_{i+1}
    terms = {j: 1.0}
    for _ in range(r):
        nxt: dict = {}
        for i, c in terms.items():
            nxt[i] = nxt.get(i, 0.0) + c
            if i:
                nxt[i + 1] = nxt.get(i + 1, 0.0) - i * c
        terms = nxt
    return tuple(sorted(terms.items()))


def phi_coefficients(j: int, lam: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """P, Q with phi_j(h A) = P I + Q B per eigenvalue."""
    lam = np.asarray(lam, dtype=float)
    c = -0.5 * h * lam
    d2 = h * h * (0.25 * lam * lam - lam)
    P = np.empty_like(lam)
    Q = np.empty_like(lam)
    small = np.abs(d2) < 1e-2
    if np.any(small):
        cs, zs = c[small], d2[small]
        order = 9
        phis = phi_scalar(cs, j + order + 1).real
        derivs = []
        for r in range(order + 1):
            derivs.append(sum(coef * phis[i] for i, coef in _derivative_combo(j, r)))
        Ps = np.zeros_like(cs)
        Qs = np.zeros_like(cs)
        for n in range(order // 2 + 1):
            Ps += derivs[2 * n] * zs**n / math.factorial(2 * n)
            if 2 * n + 1 <= order:
                Qs += derivs[2 * n + 1] * zs**n / math.factorial(2 * n + 1)
        P[small] = Ps
        Q[small] = h * Qs
    big = ~small
    if np.any(big):
        cb = c[big]
        d = np.sqrt(d2[big].astype(complex))
        fp = phi_scalar(cb + d, j)[j]
        fm = phi_scalar(cb - d, j)[j]
        P[big] = (0.5 * (fp + fm)).real
        Q[big] = (h * (fp - fm) / (2.0 * d)).real
    return P, Q


def phi_matrix_entries(j: int, lam: np.ndarray, h: float):
    return _assemble(np.asarray(lam, dtype=float), *phi_coefficients(j, lam, h))


# -- nonlinear integrator ------------------------------------------------------

@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-3
    horizon: float = 1.0
    scheme: str = "etd2"
    stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.dt > self.horizon * (1 + 1e-12):
            raise ValueError("dt must not exceed the horizon")
        if self.scheme not in ("etd2", "etd1"):
            raise ValueError(f"unknown scheme {self.scheme!r}; use 'etd2' or 'etd1'")
        if self.stride < 1:
            raise ValueError("snapshot stride must be >= 1")

    @property
    def steps(self) -> int:
        return _step_count(self.horizon, self.dt)


def _step_count(t: float, dt: float) -> int:
    n = int(round(t / dt))
    if abs(n * dt - t) > 1e-9 * max(1.0, t):
        raise ValueError(f"time {t} is not a multiple of dt={dt}")
    return n


class Propagators:
    """Per-mode exp(hA), phi_1(hA), phi_2(hA) for a basis and step size."""

    def __init__(self, basis: BasisSpec, dt: float):
        lam = basis.eigenvalues
        self.dt = dt
        self.E = _assemble(lam, *_exp_coefficients(lam, dt))
        _, self.p1_wv, _, self.p1_vv = phi_matrix_entries(1, lam, dt)
        _, self.p2_wv, _, self.p2_vv = phi_matrix_entries(2, lam, dt)

    def linear(self, w, v):
        ww, wv, vw, vv = self.E
        return ww * w + wv * v, vw * w + vv * v


@lru_cache(maxsize=64)
def _propagators(basis: BasisSpec, dt: float) -> Propagators:
    return Propagators(basis, dt)


def stability_bound(model: ModelSpec, s: State) -> float:
    """Dry-run estimate of the largest stable explicit step.

    The linear part is exact; the explicit terms behave like damping of
    rate max sigma(w) and a restoring force of frequency sqrt(max |f'(w)|).
    """
    b = model.basis
    wg = coeffs_to_grid(b, s.w.coeffs)
    sig = float(np.max(np.abs(model.damping.sigma(wg)), initial=0.0))
    rates = [sig / 2.0]
    if model.source.df is not None:
        rates.append(math.sqrt(float(np.max(np.abs(model.source.df(wg)), initial=0.0))))
    rate = max(rates)
    return math.inf if rate == 0 else 1.0 / rate


class Forcing:
    """N(w, v) = P(g - f(w) - sigma(w) v) with the dissipation integrands."""

    def __init__(self, model: ModelSpec):
        self.model = model
        self.basis = model.basis
        self.g = model.forcing.coeffs
        self.f = model.source.f
        self.sigma = model.damping.sigma
        self.lam = model.basis.eigenvalues
        self.cell = model.basis.cell_volume
        self._zero_g = not np.any(self.g)

    def __call__(self, w, v):
        b = self.basis
        wg = coeffs_to_grid(b, w)
        vg = coeffs_to_grid(b, v)
        sg = self.sigma(wg)
        pointwise = self.f(wg) + sg * vg
        n = -grid_to_coeffs(b, pointwise)
        if not self._zero_g:
            n = n + self.g
        diss = (float(np.vdot(self.lam * v, v)), self.cell * float(np.vdot(sg * vg, vg)))
        return n, diss


def _etd_step(prop: Propagators, scheme: str, forcing, w, v, n0, n1_fn):
    """One exponential step; returns (w, v, predictor stage force or None)."""
    h = prop.dt
    lw, lv = prop.linear(w, v)
    aw = lw + h * prop.p1_wv * n0
    av = lv + h * prop.p1_vv * n0
    if scheme == "etd1":
        return aw, av
    n1 = n1_fn(aw, av)
    dn = n1 - n0
    return aw + h * prop.p2_wv * dn, av + h * prop.p2_vv * dn


def step(model: ModelSpec, s: State, dt: float, scheme: str = "etd2") -> State:
    """Advance one step of the full nonlinear system."""
    prop = _propagators(model.basis, float(dt))
    forcing = Forcing(model)
    n0, _ = forcing(s.w.coeffs, s.v.coeffs)
    with np.errstate(over="ignore", invalid="ignore"):
        w, v = _etd_step(prop, scheme, forcing, s.w.coeffs, s.v.coeffs, n0, lambda a, b: forcing(a, b)[0])
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
        raise BlowUpError(dt)
    return State.from_arrays(model.basis, w, v)


@dataclass
class TrajectoryRecord:
    """Snapshots of a run with cumulative dissipation integrals."""

    basis: BasisSpec
    times: np.ndarray
    w: np.ndarray
    v: np.ndarray
    diss_grad: np.ndarray
    diss_sigma: np.ndarray
    dt: float = 0.0
    forcing: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.times)

    def state(self, i: int) -> State:
        return State.from_arrays(self.basis, self.w[i], self.v[i])

    @property
    def final(self) -> State:
        return self.state(-1)


def simulate(model: ModelSpec, s0: State, cfg: SolverConfig, keep_forcing: bool = False,
             stop=None) -> TrajectoryRecord:
    """Repeated steps from s0; dissipation integrals by the trapezoid rule.

    ``stop(t, w, v)`` may end the run early (the last state is recorded).
    ``keep_forcing`` stores the nonlinear forcing at every snapshot (used by
    the Duhamel quadrature).
    """
    b = model.basis
    if s0.basis != b:
        raise ValueError("initial state lives on a different basis")
    prop = _propagators(b, float(cfg.dt))
    forcing = Forcing(model)
    bound = stability_bound(model, s0)
    if cfg.dt > bound:
        log.warning("dt=%g exceeds the dry-run stability estimate %.3g", cfg.dt, bound)

    nsteps = cfg.steps
    w, v = s0.w.coeffs.copy(), s0.v.coeffs.copy()
    n0, (dg0, ds0) = forcing(w, v)
    times, ws, vs, gs, ss, fs = [0.0], [w], [v], [0.0], [0.0], [n0]
    grad_acc = sig_acc = 0.0
    stage = lambda a, c: forcing(a, c)[0]
    for i in range(1, nsteps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            w, v = _etd_step(prop, cfg.scheme, forcing, w, v, n0, stage)
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
                raise BlowUpError(i * cfg.dt)
            n0, (dg1, ds1) = forcing(w, v)
        if not (math.isfinite(dg1) and math.isfinite(ds1)):
            raise BlowUpError(i * cfg.dt)
        grad_acc += 0.5 * cfg.dt * (dg0 + dg1)
        sig_acc += 0.5 * cfg.dt * (ds0 + ds1)
        dg0, ds0 = dg1, ds1
        t = i * cfg.dt
        done = stop is not None and stop(t, w, v)
        if i % cfg.stride == 0 or i == nsteps or done:
            times.append(t)
            ws.append(w)
            vs.append(v)
            gs.append(grad_acc)
            ss.append(sig_acc)
            if keep_forcing:
                fs.append(n0)
        if done:
            break
    return TrajectoryRecord(b, np.array(times), np.array(ws), np.array(vs), np.array(gs), np.array(ss),
                            dt=cfg.dt, forcing=np.array(fs) if keep_forcing else None)


def duhamel_C(model: ModelSpec, s0: State, t: float, dt: float,
              rec: TrajectoryRecord | None = None) -> State:
    """C(t) s0 = int_0^t U(t-s) (0, Phi(s)) ds, Phi = g - f(w) - sigma(w) w_t.

    Phi is taken piecewise linear between trajectory samples and each
    piece is integrated against the exact semigroup (second order).
    """
    b = model.basis
    if t == 0:
        return State.zeros(b)
    if rec is None:
        rec = simulate(model, s0, SolverConfig(dt=dt, horizon=t), keep_forcing=True)
    if rec.forcing is None:
        raise ValueError("trajectory carries no forcing samples")
    n = _step_count(t, dt)
    if len(rec.forcing) < n + 1 or abs(rec.dt - dt) > 1e-15 * dt or abs(rec.times[1] - rec.times[0] - dt) > 1e-12:
        raise ValueError("trajectory samples missing for the requested time and step")
    prop = _propagators(b, float(dt))
    cw = np.zeros(b.shape)
    cv = np.zeros(b.shape)
    for i in range(n):
        f0, f1 = rec.forcing[i], rec.forcing[i + 1]
        cw, cv = prop.linear(cw, cv)
        cw = cw + dt * ((prop.p1_wv - prop.p2_wv) * f0 + prop.p2_wv * f1)
        cv = cv + dt * ((prop.p1_vv - prop.p2_vv) * f0 + prop.p2_vv * f1)
    return State.from_arrays(b, cw, cv)


@dataclass
class SplitRecord:
    """Background w and the pieces v_k (truncated, zero data) and u_k."""

    k: int
    background: TrajectoryRecord
    v: TrajectoryRecord
    u: TrajectoryRecord

    def reconstruction_errors(self) -> np.ndarray:
        """||v_k + u_k - w||_{H^1} at every snapshot."""
        lam = self.background.basis.eigenvalues
        diff = self.v.w + self.u.w - self.background.w
        return np.sqrt(np.sum(lam * diff**2, axis=tuple(range(1, diff.ndim))))


def integrate_split(model: ModelSpec, k: int, s_start: State, cfg: SolverConfig,
                    background: TrajectoryRecord | None = None) -> SplitRecord:
    """Integrate the truncated system for v_k and its complement u_k.

        v_k'' - Lap v_k' + sigma_k(w) v_k' - Lap v_k + f_k(w) = g,  zero data
        u_k'' - Lap u_k' + sigma(w) w' - sigma_k(w) v_k' - Lap u_k = f_k(w) - f(w),
                                                          data = s_start

    The background w(t) is simulated first (every step stored) and enters
    both subsystems as given data.
    """
    b = model.basis
    if background is None:
        background = simulate(model, s_start, SolverConfig(cfg.dt, cfg.horizon, cfg.scheme, 1))
    nsteps = cfg.steps
    if len(background) < nsteps + 1:
        raise ValueError("background trajectory is too short")
    f, sigma = model.source.f, model.damping.sigma
    fk, sk = truncate_source(model.source, k), truncate_damping(model.damping, k)
    g = model.forcing.coeffs
    prop = _propagators(b, float(cfg.dt))

    # background pointwise data, evaluated once per step index
    cache: dict = {}

    def bg(i):
        if i not in cache:
            wg = coeffs_to_grid(b, background.w[i])
            wt = coeffs_to_grid(b, background.v[i])
            cache.clear()
            cache[i] = (fk(wg), sk(wg), f(wg), sigma(wg) * wt)
        return cache[i]

    def force(i, vk, vkt):
        fk_w, sk_w, f_w, sig_wt = bg(i)
        vkt_g = coeffs_to_grid(b, vkt)
        damp = sk_w * vkt_g
        nv = g - grid_to_coeffs(b, fk_w + damp)
        nu = grid_to_coeffs(b, fk_w - f_w - sig_wt + damp)
        return nv, nu

    vw, vv = np.zeros(b.shape), np.zeros(b.shape)
    uw, uv = s_start.w.coeffs.copy(), s_start.v.coeffs.copy()
    out = {"vw": [vw], "vv": [vv], "uw": [uw], "uv": [uv], "t": [0.0]}
    keep = [0]
    nv0, nu0 = force(0, vw, vv)
    h = cfg.dt
    for i in range(1, nsteps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            lvw, lvv = prop.linear(vw, vv)
            luw, luv = prop.linear(uw, uv)
            avw, avv = lvw + h * prop.p1_wv * nv0, lvv + h * prop.p1_vv * nv0
            auw, auv = luw + h * prop.p1_wv * nu0, luv + h * prop.p1_vv * nu0
            if cfg.scheme == "etd2":
                nv1, nu1 = force(i, avw, avv)
                dv, du = nv1 - nv0, nu1 - nu0
                avw, avv = avw + h * prop.p2_wv * dv, avv + h * prop.p2_vv * dv
                auw, auv = auw + h * prop.p2_wv * du, auv + h * prop.p2_vv * du
            vw, vv, uw, uv = avw, avv, auw, auv
            if not all(np.all(np.isfinite(a)) for a in (vw, vv, uw, uv)):
                raise BlowUpError(i * h, "split subsystem blew up")
            nv0, nu0 = force(i, vw, vv)
        if i % cfg.stride == 0 or i == nsteps:
            keep.append(i)
            out["t"].append(i * h)
            out["vw"].append(vw)
            out["vv"].append(vv)
            out["uw"].append(uw)
            out["uv"].append(uv)
    idx = np.array(keep)
    zeros = np.zeros(len(idx))
    bgrec = TrajectoryRecord(b, background.times[idx], background.w[idx], background.v[idx],
                             background.diss_grad[idx], background.diss_sigma[idx], dt=cfg.dt)
    times = np.array(out["t"])
    vrec = TrajectoryRecord(b, times, np.array(out["vw"]), np.array(out["vv"]), zeros, zeros, dt=cfg.dt)
    urec = TrajectoryRecord(b, times, np.array(out["uw"]), np.array(out["uv"]), zeros, zeros, dt=cfg.dt)
    return SplitRecord(k, bgrec, vrec, urec)


def random_state(basis: BasisSpec, rng: np.random.Generator, radius: float = 1.0,
                 norm: str = "h", decay: float = 1.0) -> State:
    """Gaussian coefficients damped by lam^-decay, scaled to the given norm."""
    lam = basis.eigenvalues
    w = rng.standard_normal(basis.shape) * lam ** (-decay)
    v = rng.standard_normal(basis.shape) * lam ** (-decay + 0.5)
    s = State.from_arrays(basis, w, v)
    size = s.h_norm() if norm == "h" else s.h1_norm()
    return s * (radius / size)
