"""Experiment runners behind the command line; each returns data plus verdicts."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .attractor import (
    basin_sample,
    find_equilibria,
    omega_limit,
    power_law_exponent,
    smallest_decaying_k,
    splitting_experiment,
)
from .config import RunConfig
from .diagnostics import (
    audit_energy_equality,
    continuous_dependence,
    dependence_response,
    lyapunov_check,
    measure_decay,
    measure_smoothing,
    track_bound,
)
from .dynamics import SolverConfig, State, apply_U, duhamel_C, random_state, simulate
from .model import ModelSpec, make_damping, make_forcing, make_source, validate_conditions
from .spectral import BasisSpec


@dataclass
class ExperimentResult:
    summary: dict
    verdicts: dict
    report: dict = field(default_factory=dict)
    # name -> (model, TrajectoryRecord) for trajectory CSV/snapshot files
    trajectories: dict = field(default_factory=dict)
    # name -> column dict for report-style CSV files
    tables: dict = field(default_factory=dict)


def build_basis(cfg: RunConfig) -> BasisSpec:
    m = cfg.model
    return BasisSpec(m["dimension"], m["modes_per_dim"], Fraction(m["oversampling"]))


def build_model(cfg: RunConfig) -> ModelSpec:
    m = cfg.model
    basis = build_basis(cfg)
    f = m["forcing"]
    if f["coefficients"] is not None:
        g = make_forcing(basis, coeffs=f["coefficients"])
    else:
        g = make_forcing(basis, f["preset"], f["amplitude"])
    return ModelSpec(basis, make_source(m["source"]["family"], **m["source"]["params"]),
                     make_damping(m["damping"]["family"], **m["damping"]["params"]), g)


def build_initial(basis: BasisSpec, spec: dict, rng: np.random.Generator) -> State:
    kind = spec["kind"]
    if kind == "zero":
        return State.zeros(basis)
    if kind == "random":
        return random_state(basis, rng, spec["radius"], spec["norm"], spec["decay"])
    if kind == "mode":
        k = spec["mode"] or [1] * basis.dimension
        return State(basis.sine_product(k, spec["amplitude"]), basis.zeros())
    w = np.zeros(basis.shape) if spec["w"] is None else np.asarray(spec["w"], dtype=float)
    v = np.zeros(basis.shape) if spec["v"] is None else np.asarray(spec["v"], dtype=float)
    return State.from_arrays(basis, w, v)


def solver_config(cfg: RunConfig, **over) -> SolverConfig:
    s = dict(cfg.solver)
    s.update(over)
    return SolverConfig(s["dt"], s["horizon"], s["scheme"], s["stride"])


def _rng(cfg: RunConfig) -> np.random.Generator:
    return np.random.default_rng(cfg.seed)


def run_simulate(cfg: RunConfig, pool=None) -> ExperimentResult:
    model = build_model(cfg)
    e = cfg.experiment
    s0 = build_initial(model.basis, e["initial"], _rng(cfg))
    rec = simulate(model, s0, solver_config(cfg))
    ledger = audit_energy_equality(model, rec)
    lyap = lyapunov_check(model, rec)
    bound = track_bound(model, rec, e["mu"])
    summary = {
        "final_time": float(rec.times[-1]),
        "max_energy_residual": ledger.max_residual,
        "lyapunov_initial": float(ledger.L[0]),
        "lyapunov_final": float(ledger.L[-1]),
        "sup_h1_norm": bound.sup,
        "phi_final": float(bound.phi[-1]),
        "mu": bound.mu,
    }
    verdicts = {
        "finite": bool(np.all(np.isfinite(rec.w)) and np.all(np.isfinite(bound.phi))),
        "lyapunov_nonincreasing": lyap.passed,
    }
    return ExperimentResult(summary, verdicts, {"lyapunov_check": lyap.__dict__},
                            trajectories={"trajectory": (model, rec)})


def run_audit_energy(cfg: RunConfig, pool=None) -> ExperimentResult:
    model = build_model(cfg)
    e = cfg.experiment
    s0 = build_initial(model.basis, e["initial"], _rng(cfg))
    dt0 = cfg.solver["dt"]
    dts = [dt0 * 0.5**j for j in range(e["halvings"] + 1)]
    horizon = cfg.solver["horizon"]
    residuals, base = [], None
    for dt in dts:
        stride = max(1, int(round(e["sample_every"] / dt)))
        rec = simulate(model, s0, SolverConfig(dt, horizon, cfg.solver["scheme"], stride))
        residuals.append(audit_energy_equality(model, rec).max_residual)
        if base is None:
            base = rec
    ratios = [a / b if b > 0 else math.inf for a, b in zip(residuals[:-1], residuals[1:])]
    orders = [math.log2(r) if 0 < r < math.inf else math.nan for r in ratios]
    lyap = lyapunov_check(model, base)
    summary = {"dts": dts, "max_residuals": residuals, "ratios": ratios, "orders": orders,
               "order_estimate": float(np.nanmin(orders)) if orders else math.nan,
               "max_residual": residuals[0]}
    all_zero = max(residuals) < 1e-14
    verdicts = {
        "order_two": bool(all_zero or all(r >= e["min_ratio"] for r in ratios)),
        "lyapunov_nonincreasing": lyap.passed,
    }
    return ExperimentResult(summary, verdicts, trajectories={"trajectory": (model, base)})


def run_linear_decay(cfg: RunConfig, pool=None) -> ExperimentResult:
    e = cfg.experiment
    rep = measure_decay(build_basis(cfg), e["probes"], e["horizon"], e["samples"], cfg.seed)
    verdicts = {
        "rate_within_tolerance": rep.relative_deviation < e["tolerance"],
        "prefactor_at_least_one": rep.prefactor >= 1.0,
        "prefactor_bounded": rep.prefactor <= e["max_prefactor"],
        "rate_positive": rep.rate > 0,
    }
    return ExperimentResult(rep.to_dict(), verdicts)


def run_smoothing(cfg: RunConfig, pool=None) -> ExperimentResult:
    e = cfg.experiment
    basis = build_basis(cfg)
    times = np.geomspace(e["t_min"], e["t_max"], e["samples"])
    rep = measure_smoothing(basis, times)
    doubled = measure_smoothing(BasisSpec(basis.dimension, 2 * basis.modes, basis.oversampling), times)
    dev = abs(doubled.sup_scaled - rep.sup_scaled) / rep.sup_scaled
    summary = {"sup_scaled": rep.sup_scaled, "sup_scaled_doubled": doubled.sup_scaled,
               "relative_change": dev, "max_position_amplification": max(rep.position_amplification)}
    verdicts = {
        "finite": bool(np.all(np.isfinite(rep.amplification))),
        "stable_under_doubling": dev < e["tolerance"],
    }
    table = {"time": rep.times, "H2xH1_norm": rep.amplification}
    return ExperimentResult(summary, verdicts, rep.to_dict(), tables={"amplification": table})


def duhamel_errors(model: ModelSpec, s0: State, t: float, dts) -> list:
    """||S(t)s0 - U(t)s0 - C(t)s0||_H for each step size."""
    lin = apply_U(s0, t)
    out = []
    for dt in dts:
        rec = simulate(model, s0, SolverConfig(dt, t), keep_forcing=True)
        c = duhamel_C(model, s0, t, dt, rec)
        out.append((rec.final - lin - c).h_norm())
    return out


def run_compare(cfg: RunConfig, pool=None) -> ExperimentResult:
    model = build_model(cfg)
    e = cfg.experiment
    rng = _rng(cfg)
    s0 = build_initial(model.basis, e["initial"], rng)
    direction = random_state(model.basis, rng, 1.0)
    dt = cfg.solver["dt"]
    dep = continuous_dependence(model, s0, direction, e["T"], e["ladder"], e["delta0"], dt, pool)
    same = simulate(model, s0, SolverConfig(dt, e["T"], stride=SolverConfig(dt, e["T"]).steps)).final
    again = simulate(model, s0, SolverConfig(dt, e["T"], stride=SolverConfig(dt, e["T"]).steps)).final
    r0 = dependence_response(same, again)
    dts = [dt * 0.5**j for j in range(e["halvings"] + 1)]
    derr = duhamel_errors(model, s0, e["duhamel_t"], dts)
    dratios = [a / b for a, b in zip(derr[:-1], derr[1:])]
    ratios = np.array(dep.ratios)
    quad = np.array(dep.quadratic_ratios)
    summary = {
        "dependence": dep.to_dict(),
        "ratio_spread": float(ratios.max() / ratios.min()),
        "ratios_nonincreasing": bool(np.all(np.diff(ratios) <= 0)),
        "quadratic_ratio_spread": float(quad.max() / quad.min()),
        "identical_data_response": r0,
        "duhamel_dts": dts,
        "duhamel_errors": derr,
        "duhamel_ratios": dratios,
    }
    verdicts = {
        "identical_data_zero": r0 == 0.0,
        "ratios_bounded": bool(np.all(np.isfinite(ratios)) and ratios.max() <= ratios[0] * (1 + 1e-9)),
        "ratio_spread_below_limit": summary["ratio_spread"] < e["max_spread"],
        "duhamel_order_two": all(r >= e["min_ratio"] for r in dratios),
    }
    return ExperimentResult(summary, verdicts)


def _stationarity(model: ModelSpec, eq, dt: float) -> float:
    s = State(eq.w, model.basis.zeros())
    rec = simulate(model, s, SolverConfig(dt, 1.0, stride=SolverConfig(dt, 1.0).steps))
    lam = model.basis.eigenvalues
    return float(np.sqrt(np.sum(lam * (rec.final.w.coeffs - eq.w.coeffs) ** 2) + np.sum(rec.final.v.coeffs**2)))


def run_equilibria(cfg: RunConfig, pool=None) -> ExperimentResult:
    model = build_model(cfg)
    e = cfg.experiment
    eqs = find_equilibria(model, e["starts"], cfg.seed, e["tol"], pool=pool)
    drift = [_stationarity(model, q, cfg.solver["dt"]) for q in eqs]
    D = eqs.distances()
    off = D[~np.eye(len(eqs), dtype=bool)] if len(eqs) > 1 else np.array([np.inf])
    summary = {"count": len(eqs), "dropped": eqs.dropped, "drift": drift,
               "lyapunov_values": [q.lyapunov for q in eqs], "stability_indices": [q.index for q in eqs]}
    verdicts = {
        "found_any": len(eqs) > 0,
        "residuals_below_tol": all(q.residual < e["tol"] for q in eqs),
        "stationary": all(d < 10 * e["tol"] for d in drift),
        "distinct": bool(off.min() > 1e-6),
    }
    return ExperimentResult(summary, verdicts, eqs.to_dict())


def run_omega_limit(cfg: RunConfig, pool=None) -> ExperimentResult:
    model = build_model(cfg)
    e = cfg.experiment
    eqs = find_equilibria(model, e["starts"], cfg.seed, pool=pool)
    s0 = build_initial(model.basis, e["initial"], _rng(cfg))
    rep = omega_limit(model, s0, solver_config(cfg), eqs, e["threshold"], e["dwell"], e["match_tol"])
    verdicts = {
        "converged": rep.converged,
        "matched_equilibrium": rep.matched >= 0,
        "lyapunov_descent": rep.lyapunov_final <= rep.lyapunov_initial + 1e-12,
    }
    return ExperimentResult(rep.to_dict(), verdicts, {"equilibria": eqs.to_dict()})


def run_basins(cfg: RunConfig, pool=None) -> ExperimentResult:
    model = build_model(cfg)
    e = cfg.experiment
    eqs = find_equilibria(model, e["starts"], cfg.seed, pool=pool)
    tally = basin_sample(model, e["ensemble"], e["radius"], cfg.seed, solver_config(cfg), eqs, pool,
                         threshold=e["threshold"], dwell=e["dwell"], match_tol=e["match_tol"])
    summary = {"tally": {str(k): v for k, v in sorted(tally.items(), key=lambda kv: str(kv[0]))},
               "equilibria": len(eqs)}
    verdicts = {
        "all_conclusive": tally.get("inconclusive", 0) == 0,
        "attracted_to_equilibria": tally.get("unmatched", 0) == 0,
    }
    return ExperimentResult(summary, verdicts, {"equilibria": eqs.to_dict()})


def run_split(cfg: RunConfig, pool=None) -> ExperimentResult:
    model = build_model(cfg)
    e = cfg.experiment
    s0 = build_initial(model.basis, e["initial"], _rng(cfg))
    ks = e["k_list"] or [1, 2, 4, 8]
    reps = splitting_experiment(model, ks, s0, solver_config(cfg), e["burn_in"], e["threshold"], pool)
    ref = reps[0].start_h1_norm
    sup_w = reps[0].sup_abs_w
    inactive = [r for r in reps if r.k >= 2 * sup_w]
    summary = {
        "burn_in": e["burn_in"],
        "burn_in_h1_norm": ref,
        "sup_abs_w": sup_w,
        "k0": smallest_decaying_k(reps),
        "power_law_exponent": power_law_exponent([r.k for r in reps], [r.sup_v_norm for r in reps]),
        "reports": [r.to_dict() for r in reps],
    }
    verdicts = {
        "inactive_levels_tested": len(inactive) > 0,
        "u_energy_decays": bool(inactive) and all(r.decayed for r in inactive),
        "v_bounded": all(r.sup_v_norm < e["bound_factor"] * max(ref, 1e-300) for r in inactive) and bool(inactive),
        "finite": all(math.isfinite(r.sup_v_norm) and math.isfinite(r.reconstruction_error) for r in reps),
    }
    tables = {}
    for r in reps:
        tables[f"split_k{r.k}"] = {"time": r.times, "E": r.u_energy}
    return ExperimentResult(summary, verdicts, tables=tables)


def run_validate_model(cfg: RunConfig, pool=None) -> ExperimentResult:
    model = build_model(cfg)
    e = cfg.experiment
    rep = validate_conditions(model, e["samples"], e["s_max"], e["margin"], seed=cfg.seed)
    return ExperimentResult(rep.to_dict(), {"conditions_hold": rep.passed})


RUNNERS = {
    "simulate": run_simulate,
    "audit-energy": run_audit_energy,
    "linear-decay": run_linear_decay,
    "smoothing": run_smoothing,
    "compare": run_compare,
    "equilibria": run_equilibria,
    "omega-limit": run_omega_limit,
    "basins": run_basins,
    "split": run_split,
    "validate-model": run_validate_model,
}


def run_experiment(cfg: RunConfig, pool=None) -> ExperimentResult:
    return RUNNERS[cfg.experiment["name"]](cfg, pool)
