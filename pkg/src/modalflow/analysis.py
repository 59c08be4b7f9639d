"""Recursive prediction, reference trajectories, error series and the a-priori bound checks."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .basis import Basis, FieldSample
from .resnet import ResNet, operator_norm_estimate
from .solvers import (BLOWUP_NORM, BlowUpError, PdeSpec, SolverConfig, evolve_modal,
                      exact_fields, galerkin_rollout, propagator_matrix)
from .trajectory import Trajectory

BOUND_TOL = 1e-10


def rollout(model: ResNet, u0, steps: int, basis: Basis | None = None,
            delta: float = 1.0) -> Trajectory:
    """v~(0) = v^(0); v~(t_{k+1}) = N(v~(t_k)).

    ``u0`` is a modal vector or a :class:`FieldSample` on ``basis``'s
    quadrature grid (projected first).
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if isinstance(u0, FieldSample):
        if basis is None:
            raise ValueError("a basis is needed to project a field initial condition")
        v = basis.project(u0)
    else:
        v = np.asarray(u0, dtype=float)
    out = np.empty((steps + 1, model.n))
    out[0] = v
    for k in range(steps):
        v = model.forward(v)
        norm = float(np.linalg.norm(v))
        if not np.isfinite(norm) or norm > BLOWUP_NORM:
            raise BlowUpError(k + 1, norm, "network rollout")
        out[k + 1] = v
    return Trajectory(delta, out, "predicted")


def reference_trajectory(basis: Basis, u0_fn, steps: int, delta: float, pde: PdeSpec,
                         kind: str = "optimal-projection",
                         config: SolverConfig | None = None,
                         fields: np.ndarray | None = None) -> Trajectory:
    """optimal-projection: P_n of the true solution at each t_k;
    exact-modal: iterated Pi^{-1} P_n E_delta Pi from v^(0); galerkin: spectral Galerkin."""
    if fields is None:
        if kind == "optimal-projection":
            fields = exact_fields(basis, pde, u0_fn, delta, steps, config)
        else:
            fields = np.asarray(u0_fn(basis.grid), dtype=float)[None]
    v0 = basis.project(fields[0])
    if kind == "optimal-projection":
        return Trajectory(delta, basis.project(fields), kind)
    if kind == "exact-modal":
        out = [v0]
        if pde.linear:
            a = propagator_matrix(basis, pde, delta)
            for _ in range(steps):
                out.append(a @ out[-1])
        else:
            for _ in range(steps):
                out.append(evolve_modal(basis, out[-1], delta, pde, config))
        return Trajectory(delta, np.array(out), kind)
    if kind == "galerkin":
        return galerkin_rollout(basis, v0, delta, steps, pde)
    raise ValueError(f"unknown reference kind {kind!r}")


def _series(x, basis: Basis | None, norm: str) -> np.ndarray:
    if isinstance(x, Trajectory):
        if norm == "field":
            if basis is None:
                raise ValueError("field norms need the basis")
            return x.fields(basis)
        return x.coeffs
    return np.asarray(x, dtype=float)


def relative_error(a, b, basis: Basis | None = None, norm: str = "field") -> np.ndarray:
    """Per-step |a - b| / |b|; entries with |b| = 0 are flagged as NaN.

    ``a``/``b`` are trajectories or arrays of per-step fields on the quadrature
    grid (``norm="field"``) or per-step coefficient vectors (``norm="coeff"``).
    """
    if norm not in ("field", "coeff"):
        raise ValueError(f"unknown norm {norm!r}")
    sa, sb = _series(a, basis, norm), _series(b, basis, norm)
    if sa.shape != sb.shape:
        raise ValueError(f"time axes differ: {sa.shape} vs {sb.shape}")
    if isinstance(a, Trajectory) and isinstance(b, Trajectory) and not np.isclose(a.delta, b.delta):
        raise ValueError("trajectories use different time lags")
    if norm == "field":
        num, den = basis.norm(sa - sb), basis.norm(sb)
    else:
        num, den = np.linalg.norm(sa - sb, axis=-1), np.linalg.norm(sb, axis=-1)
    out = np.full(num.shape, np.nan)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


@dataclass
class ErrorReport:
    times: list[float]
    rel_err_field: list[float]
    rel_err_coeff: list[float]
    coeff_err: list[float]
    field_err: list[float]
    eps_proj: list[float]
    eps_dnn: float
    norm_N: float
    norm_PE: float
    bound_rhs: list[float]
    solution_bound_rhs: list[float]
    holds: bool
    solution_holds: bool
    decomposition_holds: bool
    min_slack: float
    probe: dict = field(default_factory=dict)

    def to_json(self, path=None) -> str:
        doc = json.dumps(asdict(self), indent=1, default=_json_default, allow_nan=False)
        if path is not None:
            with open(path, "w") as f:
                f.write(doc)
        return doc


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(type(x))


def _clean(a) -> list:
    return [None if not np.isfinite(x) else float(x) for x in np.asarray(a, dtype=float)]


def error_bound_rhs(norm_n: float, eps_dnn: float, vhat_norms: np.ndarray, eps_proj: np.ndarray,
                    norm_pe: float) -> np.ndarray:
    """sum_{j<k} |N|^{k-1-j} (eps_dnn |v^(t_j)| + eps_proj(t_j) |P_n E|) for k = 0 .. K."""
    terms = eps_dnn * np.asarray(vhat_norms) + np.asarray(eps_proj) * norm_pe
    rhs = np.zeros(len(terms))
    for k in range(1, len(terms)):
        rhs[k] = norm_n * rhs[k - 1] + terms[k - 1]
    return rhs


def probe_estimates(model: ResNet, basis: Basis, pde: PdeSpec, delta: float, probe: np.ndarray,
                    config: SolverConfig | None = None) -> dict:
    """Operator-norm style estimates over a finite probe set.

    eps_dnn is taken relative, max |N v - M v| / |v|, matching its use as an
    operator norm multiplying |v^(t_j)| in the bound.
    """
    probe = np.atleast_2d(probe)
    if probe.shape[0] == 0:
        raise ValueError("empty probe set")
    exact = evolve_modal(basis, probe, delta, pde, config)
    net = model.forward(probe)
    norms = np.linalg.norm(probe, axis=1)
    keep = norms > 0
    dev = np.linalg.norm(net - exact, axis=1)
    return {
        "eps_dnn": float(np.max(dev[keep] / norms[keep])),
        "eps_dnn_abs": float(np.max(dev)),
        "norm_N": operator_norm_estimate(model.forward, probe),
        "norm_PE": float(np.max(np.linalg.norm(exact[keep], axis=1) / norms[keep])),
    }


def theorem_bound_check(model: ResNet, basis: Basis, pde: PdeSpec, delta: float,
                        probe: np.ndarray, u0_fn, steps: int,
                        config: SolverConfig | None = None,
                        probe_description: str = "", fields: np.ndarray | None = None,
                        prediction: Trajectory | None = None) -> ErrorReport:
    """Measure the prediction error and the a-priori bound on it, step by step.

    Checks |v~(t_k) - v^(t_k)| <= RHS_k (coefficients) and
    |u~_n - u| <= eps_proj(t_k) + RHS_k (fields) for k = 0 .. steps.
    """
    est = probe_estimates(model, basis, pde, delta, probe, config)
    if fields is None:
        fields = exact_fields(basis, pde, u0_fn, delta, steps, config)
    fields = fields[: steps + 1]
    vhat = basis.project(fields)
    if prediction is None:
        prediction = rollout(model, vhat[0], steps, delta=delta)
    vtil = prediction.coeffs[: steps + 1]
    eps_proj = basis.projection_error(fields)
    coeff_err = np.linalg.norm(vtil - vhat, axis=1)
    field_err = basis.norm(basis.lift_values(vtil) - fields)
    rhs = error_bound_rhs(est["norm_N"], est["eps_dnn"], np.linalg.norm(vhat, axis=1),
                          eps_proj, est["norm_PE"])
    sol_rhs = eps_proj + rhs
    slack = rhs - coeff_err
    return ErrorReport(
        times=_clean(delta * np.arange(steps + 1)),
        rel_err_field=_clean(relative_error(basis.lift_values(vtil), fields, basis)),
        rel_err_coeff=_clean(relative_error(vtil, vhat, norm="coeff")),
        coeff_err=_clean(coeff_err),
        field_err=_clean(field_err),
        eps_proj=_clean(eps_proj),
        eps_dnn=est["eps_dnn"],
        norm_N=est["norm_N"],
        norm_PE=est["norm_PE"],
        bound_rhs=_clean(rhs),
        solution_bound_rhs=_clean(sol_rhs),
        holds=bool(np.all(coeff_err <= rhs + BOUND_TOL)),
        solution_holds=bool(np.all(field_err <= sol_rhs + BOUND_TOL)),
        decomposition_holds=bool(np.all(field_err <= coeff_err + eps_proj + BOUND_TOL)),
        min_slack=float(np.min(slack[1:])) if steps > 0 else 0.0,
        probe={"description": probe_description, "points": int(np.atleast_2d(probe).shape[0]),
               "eps_dnn_abs": est["eps_dnn_abs"],
               "eps_dnn_definition": "max over probe of |N(v) - M(v)|_2 / |v|_2",
               "norm_definition": "max over probe of |Op(v)|_2 / |v|_2"},
    )


def exact_modal_bound_check(basis: Basis, pde: PdeSpec, delta: float, u0_fn, steps: int) -> dict:
    """Error of the exact finite-dimensional operator against
    sum_{j<=k} |P_n E|^{k-j} eps_proj(t_j), for linear problems.

    |P_n E_delta| is the spectral norm of the propagator restricted to V_n, which
    equals the full operator norm for these translation/decay semigroups.
    """
    fields = exact_fields(basis, pde, u0_fn, delta, steps)
    traj = reference_trajectory(basis, u0_fn, steps, delta, pde, "exact-modal", fields=fields)
    lhs = basis.norm(traj.fields(basis) - fields)
    eps_proj = basis.projection_error(fields)
    norm_pe = float(np.linalg.norm(propagator_matrix(basis, pde, delta), 2))
    rhs = np.zeros(steps + 1)
    for k in range(steps + 1):
        rhs[k] = sum(norm_pe ** (k - j) * eps_proj[j] for j in range(k + 1))
    return {"lhs": lhs, "rhs": rhs, "eps_proj": eps_proj, "norm_PE": norm_pe,
            "holds": bool(np.all(lhs <= rhs + BOUND_TOL))}
