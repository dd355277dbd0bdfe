"""Two independent solvers for the truncated jump-driven heat equation.

``solve_mild`` iterates the heat-kernel integral form of the equation to
a fixed point on successive time windows.  Within a window the map is
strictly causal: drift integrals use left-endpoint quadrature on the
grid times, and each jump reads the state at its own left limit, so the
discretized map is strictly lower triangular in event order.  Two
consequences are exploited deliberately:

* successive substitution converges in finitely many sweeps, so
  ``tol=0.0`` requests the exact floating-point fixed point (used by
  the cross-cutoff consistency experiment, which demands agreement far
  below any iteration tolerance);
* values at times before the first event that distinguishes two coupled
  runs are bitwise identical between them.

``solve_galerkin`` projects the noise onto the first m sine modes and
integrates the resulting finite jump-driven stiff system exactly
between events with an exponential step, applying jumps at their exact
times.

Both solvers are deterministic functions of (problem, noise, grid) and
share immutable inputs, so concurrent solves need no locking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .coefficients import CoefficientSpec, InitialCondition, validate_hypothesis
from .errors import (
    BlowUpError,
    NonContractionError,
    ParameterError,
)
from .kernel import KernelEvaluator
from .noise import (
    NoiseRealization,
    SpaceTimeDomain,
    StableParams,
    TruncationSpec,
)

__all__ = [
    "GridSpec",
    "ProblemSpec",
    "GridSolution",
    "SpectralSolution",
    "ModeProjectedNoise",
    "solve_mild",
    "project_noise",
    "solve_galerkin",
    "spectral_to_grid",
    "weak_form_residual",
    "grid_h_norm",
    "grid_lp_norm_p",
]

# Lags shorter than this multiple of the quadrature spacing squared are
# treated as the identity (the kernel is narrower than the quadrature
# can resolve, and G_0 acts as a delta).
_LAG_MIN_FACTOR = 2.0


@dataclass(frozen=True)
class GridSpec:
    """Uniform space-time grid: n_t steps in time, n_x cells in space."""

    n_t: int
    n_x: int

    def __post_init__(self):
        if self.n_t < 2 or self.n_x < 2:
            raise ParameterError("need n_t >= 2 and n_x >= 2")

    def dt(self, horizon_T: float) -> float:
        return horizon_T / self.n_t

    def dx(self, length_L: float) -> float:
        return length_L / self.n_x

    def times(self, horizon_T: float) -> np.ndarray:
        return np.linspace(0.0, horizon_T, self.n_t + 1)

    def nodes(self, length_L: float) -> np.ndarray:
        return np.linspace(0.0, length_L, self.n_x + 1)


@dataclass(frozen=True)
class ProblemSpec:
    """Full data of one truncated equation instance."""

    params: StableParams
    trunc: TruncationSpec
    dom: SpaceTimeDomain
    drift: CoefficientSpec
    noise_coef: CoefficientSpec
    init: InitialCondition

    def validate(self, require_monotone: bool = False) -> None:
        """Audit the coefficient hypotheses and the initial condition."""
        validate_hypothesis(self.drift, require_monotone=False)
        validate_hypothesis(self.noise_coef, require_monotone=require_monotone)
        self.init.validate_dirichlet(self.dom.length_L)

    def with_truncation(self, trunc: TruncationSpec) -> "ProblemSpec":
        return replace(self, trunc=trunc)

    def canonical(self) -> dict:
        return {
            "params": {
                "alpha": self.params.alpha,
                "c_plus": self.params.c_plus,
                "c_minus": self.params.c_minus,
            },
            "truncation": {
                "big_cutoff_K": self.trunc.big_cutoff_K,
                "small_cutoff_eps": self.trunc.small_cutoff_eps,
                "gaussian_correction": self.trunc.gaussian_correction,
            },
            "domain": {
                "horizon_T": self.dom.horizon_T,
                "length_L": self.dom.length_L,
            },
            "drift": self.drift.canonical(),
            "noise_coef": self.noise_coef.canonical(),
            "init": self.init.canonical(),
        }


@dataclass
class GridSolution:
    """Solution values on the space-time grid, boundaries exactly zero."""

    values: np.ndarray  # shape (n_t + 1, n_x + 1)
    problem: ProblemSpec
    grid: GridSpec
    picard_iterations: list = field(default_factory=list)
    contraction_ratios: list = field(default_factory=list)
    solver_tag: str = "mild"

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise BlowUpError(f"non-finite values in {self.solver_tag} solution")

    def times(self) -> np.ndarray:
        return self.grid.times(self.problem.dom.horizon_T)

    def nodes(self) -> np.ndarray:
        return self.grid.nodes(self.problem.dom.length_L)

    def save_csv(self, path) -> None:
        nodes = self.nodes()
        times = self.times()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t," + ",".join(f"x={x:.17g}" for x in nodes) + "\n")
            for t, row in zip(times, self.values):
                fh.write(
                    f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n"
                )

    def metadata(self) -> dict:
        return {
            "solver_tag": self.solver_tag,
            "grid": {"n_t": self.grid.n_t, "n_x": self.grid.n_x},
            "picard_iterations": list(self.picard_iterations),
            "contraction_ratios": [
                None if not math.isfinite(r) else r for r in self.contraction_ratios
            ],
        }


@dataclass
class SpectralSolution:
    """Mode-coefficient paths a_n(t_i) for the projected dynamics."""

    coeffs: np.ndarray  # shape (n_t + 1, m)
    m: int
    problem: ProblemSpec
    grid: GridSpec
    solver_tag: str = "galerkin"

    def __post_init__(self):
        if not np.all(np.isfinite(self.coeffs)):
            raise BlowUpError("non-finite coefficients in spectral solution")

    @property
    def mode_rates(self) -> np.ndarray:
        """Decay rates n^2 pi^2 / (2 L^2) of the sine modes."""
        L = self.problem.dom.length_L
        n = np.arange(1, self.m + 1)
        return (n * math.pi / L) ** 2 / 2.0

    @property
    def basis_sup(self) -> float:
        """Uniform sup bound sqrt(2/L) of every basis function."""
        return math.sqrt(2.0 / self.problem.dom.length_L)


def _basis_matrix(x: np.ndarray, m: int, length_L: float) -> np.ndarray:
    """Orthonormal sine basis sampled at x: shape (len(x), m)."""
    n = np.arange(1, m + 1)
    return math.sqrt(2.0 / length_L) * np.sin(
        np.pi * np.outer(np.asarray(x, float), n) / length_L
    )


def grid_h_norm(row: np.ndarray, dx: float) -> float:
    """Trapezoid L2 norm of grid-node values."""
    sq = np.asarray(row, float) ** 2
    return math.sqrt(dx * (0.5 * sq[0] + sq[1:-1].sum() + 0.5 * sq[-1]))


def grid_lp_norm_p(row: np.ndarray, dx: float, p: float) -> float:
    """Trapezoid value of int |row|^p dx (the p-th power, not its root)."""
    ap = np.abs(np.asarray(row, float)) ** p
    return float(dx * (0.5 * ap[0] + ap[1:-1].sum() + 0.5 * ap[-1]))


# -- mild-form fixed-point solver ----------------------------------------

_lag_matrix_cache: dict = {}


def _lag_matrices(
    ke: KernelEvaluator,
    x_all: np.ndarray,
    y_q: np.ndarray,
    w_q: float,
    dt: float,
    max_lag: int,
) -> list:
    """Kernel application matrices at lags dt..max_lag*dt (quadrature folded in)."""
    key = (ke, x_all.size, y_q.size, repr(dt), max_lag)
    hit = _lag_matrix_cache.get(key)
    if hit is not None:
        return hit
    mats = [
        ke.eval(k * dt, x_all[:, None], y_q[None, :]) * w_q
        for k in range(1, max_lag + 1)
    ]
    if len(_lag_matrix_cache) > 8:
        _lag_matrix_cache.clear()
    _lag_matrix_cache[key] = mats
    return mats


class _WindowNotContracting(Exception):
    def __init__(self, ratio):
        self.ratio = ratio


def _integrand_matrix(problem, mu, s_times, y_q, u_cols, gauss_cols):
    """Columns of the drift-like integrand (f - mu*phi [+ Gaussian]) at grid sources."""
    h = np.empty((y_q.size, len(s_times)))
    for j, (s, ucol) in enumerate(zip(s_times, u_cols)):
        fv = problem.drift.evaluate(s, y_q, ucol)
        col = np.asarray(fv, float)
        if mu != 0.0 or gauss_cols is not None:
            pv = np.asarray(problem.noise_coef.evaluate(s, y_q, ucol), float)
            if mu != 0.0:
                col = col - mu * pv
            if gauss_cols is not None:
                col = col + pv * gauss_cols[j]
        h[:, j] = col
    return h


def _solve_window(
    problem,
    noise,
    ke,
    x_all,
    y_q,
    w_q,
    kmats,
    a_idx,
    w,
    dt,
    v_a_q,
    jump_slice,
    gauss_rows,
    tol,
    max_iter,
    adaptive,
    stack_cache,
):
    """Fixed-point solve of the mild map on one window of w grid steps.

    Returns (targets, iterations, max_ratio) where targets has shape
    (w, len(x_all)).  Raises _WindowNotContracting to request halving.
    """
    a = a_idx * dt
    lag_min = _LAG_MIN_FACTOR * (w_q * w_q)
    jt, jx, jz = jump_slice
    n_jump = jt.size
    t_targets = a + dt * np.arange(1, w + 1)

    # Propagation of the window-initial state to every target time.
    base = np.stack([kmats[i - 1] @ v_a_q for i in range(1, w + 1)])

    # Jump-to-target kernel columns, fixed across sweeps.
    jcols = {}
    for l in range(n_jump):
        for i in range(1, w + 1):
            if jt[l] <= t_targets[i - 1]:
                lag = max(t_targets[i - 1] - jt[l], 1e-18)
                jcols[(l, i)] = ke.eval(lag, x_all, jx[l])

    # Rows used by the scalar left-limit evaluations at jump times are
    # pure geometry, so they are built once per window and reused by
    # every sweep.  Lags below the quadrature resolution fall back to
    # interpolation (the kernel acts as the identity there).
    def make_row(lag, x_pt):
        if lag < lag_min:
            return None  # identity semantics
        return ke.eval(lag, float(x_pt), y_q) * w_q

    def row_apply(row, x_pt, vec_q):
        if row is None:
            return float(np.interp(x_pt, y_q, vec_q))
        return float(row @ vec_q)

    jrow_va = []  # propagation row of v_a to each jump point
    jrow_drift = []  # (source index, weight, row) per grid source
    for l in range(n_jump):
        jrow_va.append(make_row(jt[l] - a, jx[l]))
        entries = []
        j = 0
        while a + j * dt < jt[l] and j < w:
            s_j = a + j * dt
            weight = min(a + (j + 1) * dt, jt[l]) - s_j
            entries.append((j, weight, make_row(jt[l] - s_j, jx[l])))
            j += 1
        jrow_drift.append(entries)

    gs = np.zeros((n_jump, n_jump))
    for l in range(n_jump):
        for k in range(l):
            if jt[l] > jt[k]:
                gs[l, k] = float(
                    ke.eval(max(jt[l] - jt[k], 1e-18), jx[l], jx[k])
                )

    s_times = a + dt * np.arange(w)

    # Initial sweep state: pure propagation of the window-initial data.
    u_state = [v_a_q] + [base[j - 1][-y_q.size:] for j in range(1, w)]
    upre = np.array(
        [row_apply(r, jx[l], v_a_q) for l, r in enumerate(jrow_va)], dtype=float
    )
    targets_old = base.copy()

    n_all = x_all.size
    k_stack = stack_cache.get(w)  # one fused GEMM per sweep
    if k_stack is None:
        k_stack = stack_cache[w] = np.vstack(kmats[:w])

    iterations = 0
    ratios = []
    d_prev = None
    while True:
        iterations += 1
        h = _integrand_matrix(problem, noise.compensator_mu, s_times, y_q, u_state, gauss_rows)
        phi_j = (
            np.asarray(problem.noise_coef.evaluate(jt, jx, upre), float).reshape(-1)
            if n_jump
            else np.zeros(0)
        )

        conv = (k_stack @ h).reshape(w, n_all, w)
        targets = base.copy()
        for i in range(1, w + 1):
            acc = targets[i - 1]
            for k in range(1, i + 1):
                acc += dt * conv[k - 1][:, i - k]
            for l in range(n_jump):
                if (l, i) in jcols:
                    acc += jcols[(l, i)] * (phi_j[l] * jz[l])

        upre_new = np.empty(n_jump)
        for l in range(n_jump):
            val = row_apply(jrow_va[l], jx[l], v_a_q)
            for j, weight, row in jrow_drift[l]:
                val += weight * row_apply(row, jx[l], h[:, j])
            for k in range(l):
                if gs[l, k] != 0.0:
                    val += gs[l, k] * phi_j[k] * jz[k]
            upre_new[l] = val

        d = float(np.max(np.abs(targets - targets_old))) if targets.size else 0.0
        if n_jump:
            d = max(d, float(np.max(np.abs(upre_new - upre))))
        if not np.isfinite(d):
            raise BlowUpError(
                f"non-finite Picard iterate in window starting at t={a:.6g}",
                path_seed=noise.seed,
            )
        if d_prev is not None and d_prev > 0.0:
            ratios.append(d / d_prev)
        d_prev = d

        u_state = [v_a_q] + [targets[j - 1][-y_q.size:] for j in range(1, w)]
        upre = upre_new
        targets_old = targets

        if d <= tol:
            break
        if adaptive and w > 1 and iterations >= 4 and ratios and ratios[-1] >= 0.9:
            raise _WindowNotContracting(ratios[-1])
        if iterations >= max_iter:
            if adaptive and w > 1:
                raise _WindowNotContracting(ratios[-1] if ratios else math.nan)
            raise NonContractionError(
                f"Picard iteration did not reach tol={tol} within {max_iter} "
                f"sweeps on window [{a:.6g}, {a + w * dt:.6g}]",
                window=(a, a + w * dt),
                ratio=ratios[-1] if ratios else math.nan,
            )

    max_ratio = max(ratios) if ratios else math.nan
    return targets_old, iterations, max_ratio


def solve_mild(
    problem: ProblemSpec,
    noise: NoiseRealization,
    grid: GridSpec,
    tol: float = 1e-10,
    max_iter: int | None = None,
    *,
    window_steps: int = 4,
    adaptive: bool = True,
    kernel: KernelEvaluator | None = None,
) -> GridSolution:
    """Fixed point of the discretized heat-kernel integral equation.

    Per window of ``window_steps`` grid steps, the map

        u(t) = G_(t-a) u(a) + sum_s dt * G_(t-s)[f - mu*phi](s, ., u(s))
               + sum_(a < tau_j <= t) G_(t-tau_j)(., x_j) phi(tau_j-, x_j,
                 u(tau_j-, x_j)) z_j

    is iterated until the successive-iterate sup difference is <= tol
    (``tol=0.0``: until bitwise stationary, which the strictly causal
    quadrature guarantees after finitely many sweeps).  Windows whose
    observed contraction ratio reaches 0.9 are halved and redone when
    ``adaptive`` is set; a window of a single step that still fails
    raises :class:`NonContractionError`.
    """
    if tol < 0.0:
        raise ParameterError("tol must be >= 0")
    if window_steps < 1:
        raise ParameterError("window_steps must be >= 1")
    _check_noise_matches(problem, noise)

    T, L = problem.dom.horizon_T, problem.dom.length_L
    n_t, n_x = grid.n_t, grid.n_x
    dt = grid.dt(T)
    n_q = 4 * n_x
    ke = kernel or KernelEvaluator(length_L=L)
    x_out = grid.nodes(L)
    y_q, w_q = ke.quad_nodes(n_q)
    x_all = np.concatenate([x_out, y_q])
    kmats = _lag_matrices(ke, x_all, y_q, w_q, dt, window_steps)

    gauss = None
    if problem.trunc.gaussian_correction:
        # Scaled so that adding phi*gauss to the drift integrand
        # reproduces sum G * phi * dW over the cells of one step.
        gauss = noise.gaussian_increments(n_t, n_q) / (dt * w_q)

    u0_nodes = problem.init.values(x_out)
    u0_nodes[0] = 0.0
    u0_nodes[-1] = 0.0
    values = np.empty((n_t + 1, n_x + 1))
    values[0] = u0_nodes

    v_a_q = problem.init.values(y_q)
    iter_counts: list[int] = []
    ratio_list: list[float] = []
    stack_cache: dict = {}

    a_idx = 0
    while a_idx < n_t:
        w = min(window_steps, n_t - a_idx)
        while True:
            a = a_idx * dt
            in_window = (noise.taus > a) & (noise.taus <= a + w * dt)
            jump_slice = (
                noise.taus[in_window],
                noise.xs[in_window],
                noise.zs[in_window],
            )
            n_events = w + int(jump_slice[0].size)
            eff_max_iter = max_iter
            if eff_max_iter is None:
                eff_max_iter = n_events + 8 if tol == 0.0 else 200
            gauss_rows = gauss[a_idx : a_idx + w] if gauss is not None else None
            try:
                targets, iters, ratio = _solve_window(
                    problem,
                    noise,
                    ke,
                    x_all,
                    y_q,
                    w_q,
                    kmats,
                    a_idx,
                    w,
                    dt,
                    v_a_q,
                    jump_slice,
                    gauss_rows,
                    tol,
                    eff_max_iter,
                    adaptive,
                    stack_cache,
                )
                break
            except _WindowNotContracting:
                w = max(1, w // 2)

        for i in range(1, w + 1):
            values[a_idx + i] = targets[i - 1][: n_x + 1]
        v_a_q = targets[w - 1][-n_q:]
        iter_counts.append(iters)
        ratio_list.append(ratio)
        a_idx += w

    return GridSolution(
        values=values,
        problem=problem,
        grid=grid,
        picard_iterations=iter_counts,
        contraction_ratios=ratio_list,
        solver_tag="mild",
    )


def _check_noise_matches(problem: ProblemSpec, noise: NoiseRealization) -> None:
    if noise.params != problem.params:
        raise ParameterError("noise realization and problem disagree on parameters")
    if noise.domain != problem.dom:
        raise ParameterError("noise realization and problem disagree on the domain")
    if noise.truncation != problem.trunc:
        raise ParameterError("noise realization and problem disagree on truncation")


# -- spectral projection solver ------------------------------------------


@dataclass(frozen=True)
class ModeProjectedNoise:
    """Coordinate jump paths of the noise in the sine basis.

    Mode n jumps by ``e_n(x_j) * z_j`` at each jump time and drifts at
    the constant compensator rate ``mu * int e_n``.
    """

    taus: np.ndarray
    increments: np.ndarray  # shape (n_jumps, m)
    compensator_rates: np.ndarray  # shape (m,)
    m: int

    def path_values(self, mode: int, times) -> np.ndarray:
        """Compensated path of one mode (1-based) at the given times."""
        if not 1 <= mode <= self.m:
            raise ParameterError(f"mode must be in 1..{self.m}")
        ts = np.asarray(times, dtype=float)
        jump_sums = np.array(
            [self.increments[self.taus <= t, mode - 1].sum() for t in ts]
        )
        return jump_sums - self.compensator_rates[mode - 1] * ts


def _basis_integrals(m: int, length_L: float) -> np.ndarray:
    """Exact integrals of the basis functions over [0, L]."""
    n = np.arange(1, m + 1)
    return math.sqrt(2.0 / length_L) * length_L * (1.0 - np.cos(n * np.pi)) / (
        n * np.pi
    )


def project_noise(noise: NoiseRealization, m: int) -> ModeProjectedNoise:
    """Exact projection of the jumps onto the first m sine modes."""
    if m < 1:
        raise ParameterError("m must be >= 1")
    L = noise.domain.length_L
    basis_at_jumps = _basis_matrix(noise.xs, m, L)
    increments = basis_at_jumps * noise.zs[:, None]
    rates = noise.compensator_mu * _basis_integrals(m, L)
    return ModeProjectedNoise(
        taus=noise.taus.copy(),
        increments=increments,
        compensator_rates=rates,
        m=int(m),
    )


def _phi1(x: np.ndarray) -> np.ndarray:
    """(1 - exp(-x))/x, stable at the origin."""
    out = np.empty_like(x)
    small = x < 1e-8
    out[small] = 1.0 - 0.5 * x[small]
    out[~small] = -np.expm1(-x[~small]) / x[~small]
    return out


def solve_galerkin(
    problem: ProblemSpec,
    noise: NoiseRealization,
    m: int,
    grid: GridSpec,
    *,
    n_quad: int | None = None,
) -> SpectralSolution:
    """Event-driven exponential integration of the m-mode projection.

    Between events each coefficient decays exactly at its mode rate
    while the drift (plus compensator, plus optional Gaussian
    correction) is frozen at the left state; at each jump time tau the
    coefficients gain the projected multiplication-operator action

        da_n = sum_k <phi(tau-, ., u(tau-)) e_k, e_n> e_k(x_j) z_j

    evaluated by quadrature at the jump's exact time.
    """
    if m < 1:
        raise ParameterError("m must be >= 1")
    _check_noise_matches(problem, noise)
    T, L = problem.dom.horizon_T, problem.dom.length_L
    n_t = grid.n_t
    dt = grid.dt(T)
    n_q = n_quad or 4 * grid.n_x
    if m > n_q // 4:
        raise ParameterError(
            f"m={m} too large for quadrature resolution n_quad={n_q}"
        )
    y_q = (np.arange(n_q) + 0.5) * (L / n_q)
    w_q = L / n_q
    basis = _basis_matrix(y_q, m, L)  # (n_q, m)
    rates = (np.arange(1, m + 1) * math.pi / L) ** 2 / 2.0
    mu = noise.compensator_mu
    comp_profile = basis @ _basis_integrals(m, L) if mu != 0.0 else None

    gauss = None
    if problem.trunc.gaussian_correction:
        gauss = noise.gaussian_increments(n_t, n_q) / (dt * w_q)

    a = basis.T @ (w_q * problem.init.values(y_q))
    coeffs = np.empty((n_t + 1, m))
    coeffs[0] = a

    def advance(a_vec, t_left, delta, step_idx):
        if delta <= 0.0:
            return a_vec
        u_q = basis @ a_vec
        b = basis.T @ (w_q * np.asarray(problem.drift.evaluate(t_left, y_q, u_q), float))
        if mu != 0.0 or gauss is not None:
            pv = np.asarray(problem.noise_coef.evaluate(t_left, y_q, u_q), float)
            if mu != 0.0:
                b = b - mu * (basis.T @ (w_q * pv * comp_profile))
            if gauss is not None:
                b = b + basis.T @ (w_q * pv * gauss[step_idx])
        lam_d = rates * delta
        return np.exp(-lam_d) * a_vec + delta * _phi1(lam_d) * b

    jump_idx = 0
    taus, xs, zs = noise.taus, noise.xs, noise.zs
    for i in range(n_t):
        t0, t1 = i * dt, (i + 1) * dt
        t_cur = t0
        while jump_idx < taus.size and taus[jump_idx] <= t1:
            tau = float(taus[jump_idx])
            a = advance(a, t_cur, tau - t_cur, i)
            u_q = basis @ a
            pv = np.asarray(problem.noise_coef.evaluate(tau, y_q, u_q), float)
            mode_vals = _basis_matrix(np.asarray([xs[jump_idx]]), m, L)[0]
            spike = basis @ (mode_vals * zs[jump_idx])
            a = a + basis.T @ (w_q * pv * spike)
            t_cur = tau
            jump_idx += 1
        a = advance(a, t_cur, t1 - t_cur, i)
        if not np.all(np.isfinite(a)):
            raise BlowUpError(
                f"non-finite spectral coefficients at t={t1:.6g}",
                path_seed=noise.seed,
            )
        coeffs[i + 1] = a

    return SpectralSolution(coeffs=coeffs, m=int(m), problem=problem, grid=grid)


def spectral_to_grid(sol: SpectralSolution, grid: GridSpec) -> GridSolution:
    """Synthesize mode coefficients onto grid nodes (boundaries exact zeros)."""
    if grid.n_t != sol.grid.n_t:
        raise ParameterError("grid time resolution must match the coefficient paths")
    L = sol.problem.dom.length_L
    nodes = grid.nodes(L)
    basis_nodes = _basis_matrix(nodes, sol.m, L)
    values = sol.coeffs @ basis_nodes.T
    values[:, 0] = 0.0
    values[:, -1] = 0.0
    return GridSolution(
        values=values,
        problem=sol.problem,
        grid=grid,
        solver_tag=f"galerkin(m={sol.m})",
    )


# -- weak-form residual diagnostic ----------------------------------------


def _default_test_fn(length_L: float) -> Callable[[np.ndarray], np.ndarray]:
    def chi(x):
        return np.sin(math.pi * np.asarray(x, float) / length_L) ** 3

    return chi


def weak_form_residual(
    sol: GridSolution,
    noise: NoiseRealization,
    test_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    *,
    t: float,
) -> float:
    """Absolute residual of the variational identity at grid time t.

    The test function must vanish together with its first derivative at
    both endpoints (checked numerically); default is sin^3(pi x / L).
    All integrals are evaluated on the solution grid, so the residual
    carries the grid's discretization error and shrinks under
    refinement.
    """
    problem, grid = sol.problem, sol.grid
    T, L = problem.dom.horizon_T, problem.dom.length_L
    dt, dx = grid.dt(T), grid.dx(L)
    idx = int(round(t / dt))
    if not 0 <= idx <= grid.n_t or abs(t - idx * dt) > 1e-9 * max(T, 1.0):
        raise ParameterError(f"t={t} is not a grid time")
    chi = test_fn or _default_test_fn(L)

    h = 1e-6 * L
    scale = float(np.max(np.abs(chi(np.linspace(0, L, 64))))) or 1.0
    for pt in (0.0, L):
        if abs(float(chi(np.asarray(pt)))) > 1e-8 * scale:
            raise ParameterError("test function must vanish at the boundary")
        inner = pt + h if pt == 0.0 else pt - h
        deriv = (float(chi(np.asarray(inner))) - float(chi(np.asarray(pt)))) / h
        if abs(deriv) > 1e-4 * scale / L:
            raise ParameterError(
                "test function's derivative must vanish at the boundary"
            )

    nodes = grid.nodes(L)
    chi_v = np.asarray(chi(nodes), float)
    hh = 1e-4 * L
    chi_dd = (
        np.asarray(chi(nodes + hh), float)
        - 2.0 * chi_v
        + np.asarray(chi(nodes - hh), float)
    ) / hh**2

    def pair(row, weights):
        prod = row * weights
        return dx * (0.5 * prod[0] + prod[1:-1].sum() + 0.5 * prod[-1])

    rows = sol.values[: idx + 1]
    times = np.arange(idx + 1) * dt

    lhs = pair(rows[-1], chi_v)
    rhs = pair(rows[0], chi_v)

    lap_terms = np.array([pair(r, chi_dd) for r in rows])
    rhs += 0.5 * np.trapezoid(lap_terms, dx=dt)

    f_terms = np.array(
        [pair(np.asarray(problem.drift.evaluate(s, nodes, r), float), chi_v)
         for s, r in zip(times, rows)]
    )
    rhs += np.trapezoid(f_terms, dx=dt)

    mu = noise.compensator_mu
    phi_rows = [
        np.asarray(problem.noise_coef.evaluate(s, nodes, r), float)
        for s, r in zip(times, rows)
    ]
    if mu != 0.0:
        comp_terms = np.array([pair(pr, chi_v) for pr in phi_rows])
        rhs -= mu * np.trapezoid(comp_terms, dx=dt)

    t_end = idx * dt
    for tau, xj, zj in zip(noise.taus, noise.xs, noise.zs):
        if tau > t_end:
            break
        i_pre = max(0, min(idx, int(math.ceil(tau / dt - 1e-12)) - 1))
        u_pre = float(np.interp(xj, nodes, sol.values[i_pre]))
        phi_val = float(problem.noise_coef.evaluate(tau, xj, u_pre))
        rhs += phi_val * float(np.interp(xj, nodes, chi_v)) * zj

    if problem.trunc.gaussian_correction:
        n_q = 4 * grid.n_x
        y_q = (np.arange(n_q) + 0.5) * (L / n_q)
        chi_q = np.asarray(chi(y_q), float)
        dW = noise.gaussian_increments(grid.n_t, n_q)
        for i in range(idx):
            u_row = np.interp(y_q, nodes, sol.values[i])
            pv = np.asarray(
                problem.noise_coef.evaluate(i * dt, y_q, u_row), float
            )
            rhs += float(np.sum(pv * chi_q * dW[i]))

    return abs(lhs - rhs)
