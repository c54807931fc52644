"""Sum-of-norm (L1,2) GMMV solver: spectral projected gradient on the
LS_tau subproblems, Newton root finding on the Pareto curve and a
cross-validation stopping rule.

Internally the problem is solved in normalised units: the data are scaled
to unit Frobenius norm over the reconstruction rows and the operator by the
largest spectral norm of its frequency blocks. Results are mapped back.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import SolverOptions
from .errors import GmmvError, SolverError
from .sensing import SensingOperator

# residual level (relative to ||Y_rec||) treated as an exact fit
EXACT_FIT = 1e-13


# --------------------------------------------------------------------------
# norms and projection


def row_norms(J):
    J = np.asarray(J)
    if J.ndim == 2 and np.iscomplexobj(J) and J.flags.c_contiguous:
        v = J.view(J.real.dtype).reshape(J.shape[0], -1)
    else:
        v = np.abs(J).reshape(J.shape[0], -1) if J.ndim else np.abs(J)
    return np.sqrt(np.einsum("ij,ij->i", v, v))


def mixed_norm(J, alpha=1, beta=2):
    """``(sum_n ||J[n, :]||_beta^alpha)^(1/alpha)``.

    Supported pairs: ``(1, 2)``, ``(2, 2)`` (Frobenius) and ``(inf, 2)``
    (largest row norm, the dual of ``(1, 2)``).
    """
    if beta != 2 or alpha not in (1, 2, math.inf):
        raise GmmvError(f"mixed norm ({alpha}, {beta}) is not supported", code="UNSUPPORTED_NORM")
    v = row_norms(J)
    if v.size == 0:
        return 0.0
    if alpha == 1:
        return float(v.sum())
    if alpha == 2:
        return float(np.sqrt(np.sum(v * v)))
    return float(v.max())


def project_l1_ball(v, tau):
    """Euclidean projection of a nonnegative vector onto ``{x >= 0: sum x <= tau}``."""
    v = np.asarray(v, dtype=float)
    if v.sum() <= tau:
        return v.copy()
    if tau == 0:
        return np.zeros_like(v)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, v.size + 1)
    hit = np.nonzero(u * k > css - tau)[0]
    # the first entry always qualifies; rounding can hide it for tiny tau
    rho = hit[-1] if hit.size else 0
    theta = (css[rho] - tau) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_l12_ball(J, tau):
    """Closest matrix (Frobenius) to ``J`` with ``||X||_{1,2} <= tau``."""
    if tau < 0:
        raise GmmvError(f"ball radius must be nonnegative, got {tau}", code="NEGATIVE_RADIUS")
    J = np.asarray(J)
    v = row_norms(J)
    if v.sum() <= tau:
        return J.copy()
    w = project_l1_ball(v, tau)
    scale = np.divide(w, v, out=np.zeros_like(v), where=v > 0)
    return J * scale[:, None]


# --------------------------------------------------------------------------
# Pareto-curve quantities


def pareto_derivative(residual_norm, grad_dual_norm):
    """Slope of the Pareto curve: ``-||Phi^H R||_{inf,2} / ||R||_F``."""
    if residual_norm <= 0:
        raise GmmvError("Pareto slope is undefined at a zero residual", code="ZERO_RESIDUAL")
    return -float(grad_dual_norm) / float(residual_norm)


def pareto_derivative_op(op: SensingOperator, J, Y, rows="recon"):
    """:func:`pareto_derivative` evaluated for an operator, iterate and data."""
    R = op.forward(J, rows) - np.where(op.mask(rows), Y, 0.0)
    return pareto_derivative(np.linalg.norm(R), mixed_norm(op.adjoint(R, rows), math.inf))


def newton_update_tau(tau, phi, dphi, sigma=0.0):
    """Newton step ``tau + (sigma - phi) / phi'`` on the Pareto curve.

    When ``phi > sigma`` the root lies to the right; a step that does not
    increase ``tau`` (inexact subproblem) falls back to doubling it.
    """
    if dphi >= 0:
        if phi == sigma:
            return float(tau)
        raise GmmvError(f"Pareto slope must be negative, got {dphi}", code="NONNEGATIVE_DERIVATIVE")
    new = tau + (sigma - phi) / dphi
    if phi > sigma and new <= tau:
        new = 2.0 * tau
    return float(max(new, 0.0))


def initial_tau(norm_y, dual_norm, sigma=0.0):
    """First Newton iterate from ``tau = 0``: ``(||Y||_F - sigma) / ||Phi^H Y||_{inf,2}``.

    This equals the exact Newton step when the data have unit norm, which
    is how the solver calls it.
    """
    if dual_norm <= 0:
        raise GmmvError("Phi^H Y vanishes; the data are invisible to the operator",
                        code="NONNEGATIVE_DERIVATIVE")
    return max(float(norm_y - sigma) / float(dual_norm), 0.0)


# --------------------------------------------------------------------------
# spectral projected gradient


@dataclass
class SpgState:
    """Iterate of the LS_tau subproblem (normalised units)."""

    J: np.ndarray
    R: np.ndarray          # Phi J - Y on the reconstruction rows
    G: np.ndarray          # Phi^H R
    f: float               # 0.5 ||R||_F^2
    step: float = 1.0
    history: list = field(default_factory=list)   # recent objective values

    @property
    def phi(self):
        return math.sqrt(2.0 * self.f)


def _make_state(forward, adjoint, J, Y):
    R = forward(J) - Y
    f = 0.5 * float(np.vdot(R, R).real)
    return SpgState(J, R, adjoint(R), f, history=[f])


def optimality_gap(state: SpgState, tau):
    """Projected-gradient certificate ``||J - P_tau(J - G)||_F``."""
    return float(np.linalg.norm(state.J - project_l12_ball(state.J - state.G, tau)))


def spg_lasso_step(state: SpgState, forward, adjoint, Y, tau, options: SolverOptions = SolverOptions()):
    """One spectral projected-gradient iteration for
    ``min 0.5 ||Phi J - Y||^2  s.t.  ||J||_{1,2} <= tau``.

    ``forward`` / ``adjoint`` act on the reconstruction rows only. Uses a
    projected search direction, a non-monotone Armijo backtracking against
    the largest of the last ``nonmonotone_memory`` objective values, and a
    Barzilai-Borwein step for the next iteration. Returns a new state.
    """
    f_ref = max(state.history[-options.nonmonotone_memory:])
    # a BB step can overshoot badly right after a tau update; the operator is
    # scaled to norm <= 1, so step 1 is a safe fallback (descent lemma)
    for step in (state.step, 1.0) if state.step > 1.0 else (state.step,):
        d = project_l12_ball(state.J - step * state.G, tau) - state.J
        gtd = float(np.vdot(state.G, d).real)
        alpha = 1.0
        for _ in range(options.max_backtracks + 1):
            J_new = state.J + alpha * d
            R_new = forward(J_new) - Y
            f_new = 0.5 * float(np.vdot(R_new, R_new).real)
            if f_new <= f_ref + options.gamma * alpha * gtd or gtd >= 0:
                break
            alpha *= 0.5
        else:
            continue
        break
    else:
        raise SolverError("line search failed to find sufficient decrease", code="LINESEARCH_FAILED")
    G_new = adjoint(R_new)
    s = J_new - state.J
    yv = G_new - state.G
    sts = float(np.vdot(s, s).real)
    sty = float(np.vdot(s, yv).real)
    step = options.step_max if sty <= 0 else min(max(sts / sty, options.step_min), options.step_max)
    hist = (state.history + [f_new])[-max(options.nonmonotone_memory, 1):]
    return SpgState(J_new, R_new, G_new, f_new, step, hist)


# --------------------------------------------------------------------------
# results


@dataclass
class InversionResult:
    """Output of a GMMV inversion (all quantities in physical units)."""

    J: np.ndarray                     # N x PI contrast sources at the returned iterate
    r_rec: np.ndarray                 # reconstruction residual per inner iteration (index 0: J = 0)
    r_cv: np.ndarray                  # CV residual per inner iteration (empty in sigma mode)
    tau: np.ndarray                   # tau per outer iteration
    phi: np.ndarray                   # phi at the end of each outer iteration
    certificate: np.ndarray           # ||J - P(J - G)|| / max(1, ||J||) (normalised units) per outer iteration
    converged: np.ndarray             # whether each outer subproblem met the certificate
    n_iter: int
    n_opt: int
    norm_y: float                     # ||Y_rec||_F
    sigma_hat: float                  # r_rec at the returned iterate
    status: str
    mode: str
    phi_scale: float = 1.0            # factor mapping normalised residuals to physical units
    extra: dict = field(default_factory=dict)

    @property
    def noise_estimate(self):
        """``r_rec(N_opt) / ||Y_rec||_F``."""
        return self.sigma_hat / self.norm_y if self.norm_y > 0 else 0.0

    def image(self):
        """``gamma_n = sum_columns |J[n, col]|^2``."""
        return np.sum(self.J.real**2 + self.J.imag**2, axis=1)


# --------------------------------------------------------------------------
# drivers


class _Problem:
    """Operator and data in normalised units."""

    def __init__(self, op: SensingOperator, Y):
        Y = np.asarray(Y, dtype=complex)
        if Y.shape != op.shape_data:
            raise SolverError(f"data shape {Y.shape} does not match operator {op.shape_data}",
                              code="DIM_MISMATCH")
        if not np.all(np.isfinite(Y)):
            raise SolverError("data contain non-finite values", code="BAD_DATA")
        self.op = op
        self.rec = op.mask("recon")
        self.cvm = op.mask("cv")
        Y_rec = np.where(self.rec, Y, 0.0)
        self.norm_y = float(np.linalg.norm(Y_rec))
        if self.norm_y == 0:
            raise SolverError("reconstruction data are identically zero", code="ZERO_DATA")
        self.s = float(op.block_norms().max())
        self.Y = Y_rec / self.norm_y
        self.Y_cv = np.where(self.cvm, Y, 0.0) / self.norm_y
        self.has_cv = bool(self.cvm.any())

    def forward(self, J):
        # keep the all-row prediction so the CV residual of an accepted
        # iterate costs no extra product; recon rows are unaffected by it
        Z = self.op.forward(J, "all") / self.s
        self._last = (J, Z)
        return np.where(self.rec, Z, 0.0)

    def adjoint(self, R):
        return self.op.adjoint(R, "recon") / self.s

    def cv_residual(self, J):
        last = getattr(self, "_last", None)
        Z = last[1] if last is not None and last[0] is J else self.op.forward(J, "all") / self.s
        return float(np.linalg.norm(np.where(self.cvm, Z, 0.0) - self.Y_cv))

    def to_physical(self, J):
        return J * (self.norm_y / self.s)


def _run(problem: _Problem, options: SolverOptions, sigma_rel: float, use_cv: bool,
         callback: Optional[Callable] = None, J0=None):
    """Shared outer/inner loop. ``sigma_rel`` is the target residual relative
    to ``||Y_rec||``."""
    P = problem
    zero = np.zeros(P.op.shape_sources, dtype=complex)
    state = _make_state(P.forward, P.adjoint, zero if J0 is None else J0, P.Y)
    r_rec = [state.phi]
    r_cv = [P.cv_residual(state.J)] if use_cv else []
    best_J, n_opt = state.J, 0
    taus, phis, certs, conv = [], [], [], []

    if state.phi <= sigma_rel + options.sigma_tol and not use_cv:
        return state.J, r_rec, r_cv, taus, phis, certs, conv, 0, 0, "converged"
    tau = initial_tau(state.phi, mixed_norm(state.G, math.inf), sigma_rel) if J0 is None else \
        mixed_norm(state.J, 1)
    n_iter = 0
    status = "max_iter"
    state.step = 1.0
    while True:
        taus.append(tau)
        inner = 0
        converged = False
        done = False
        while True:
            gap = optimality_gap(state, tau) / max(1.0, float(np.linalg.norm(state.J)))
            # every subproblem takes at least one step so tau cannot cycle
            if inner > 0 and gap <= options.inner_tol:
                converged = True
                break
            if inner >= options.max_inner:
                break
            if n_iter >= options.max_iter:
                done = True
                break
            state = spg_lasso_step(state, P.forward, P.adjoint, P.Y, tau, options)
            inner += 1
            n_iter += 1
            r_rec.append(state.phi)
            if callback is not None:
                callback(n_iter, state.J)
            if use_cv:
                r_cv.append(P.cv_residual(state.J))
                if r_cv[-1] < r_cv[n_opt]:
                    n_opt, best_J = n_iter, state.J
                if n_iter - n_opt >= options.delta_n:
                    status, done = "cv_stop", True
                    break
                if state.phi <= EXACT_FIT:
                    status, done = "exact_fit", True
                    break
            elif abs(state.phi - sigma_rel) <= options.sigma_tol:
                status, done = "converged", True
                break
        phis.append(state.phi)
        if done:
            gap = optimality_gap(state, tau) / max(1.0, float(np.linalg.norm(state.J)))
        certs.append(gap)
        conv.append(converged)
        if done:
            break
        if state.phi <= EXACT_FIT:
            status = "exact_fit"
            break
        dphi = pareto_derivative(state.phi, mixed_norm(state.G, math.inf))
        if dphi == 0:
            status = "stalled"
            break
        tau = newton_update_tau(tau, state.phi, dphi, sigma_rel)
        if not use_cv and tau < mixed_norm(state.J, 1):
            state = _make_state(P.forward, P.adjoint, project_l12_ball(state.J, tau), P.Y)
    if not use_cv:
        best_J, n_opt = state.J, n_iter
    return best_J, r_rec, r_cv, taus, phis, certs, conv, n_iter, n_opt, status


def _result(problem, out, mode, options):
    J, r_rec, r_cv, taus, phis, certs, conv, n_iter, n_opt, status = out
    ny = problem.norm_y
    r_rec = np.asarray(r_rec) * ny
    res = InversionResult(
        J=problem.to_physical(J), r_rec=r_rec, r_cv=np.asarray(r_cv) * ny,
        tau=np.asarray(taus) * (ny / problem.s), phi=np.asarray(phis) * ny,
        certificate=np.asarray(certs), converged=np.asarray(conv, dtype=bool),
        n_iter=n_iter, n_opt=n_opt, norm_y=ny, sigma_hat=float(r_rec[n_opt]), status=status,
        mode=mode, phi_scale=ny, extra={"operator_scale": problem.s, "options": options.to_dict()})
    return res


def solve_gmmv_cv(op: SensingOperator, Y, options: SolverOptions = SolverOptions(),
                  callback: Optional[Callable] = None) -> InversionResult:
    """GMMV inversion with cross-validation stopping.

    Only reconstruction rows drive the iterates; after every inner iteration
    the CV residual is evaluated, the iterate with the smallest CV residual
    is kept, and the run stops ``delta_n`` iterations after the last
    improvement. ``Y`` is a dataset or an ``(n_receivers, P*I)`` array.
    """
    Y = getattr(Y, "Y", Y)
    problem = _Problem(op, Y)
    if not problem.has_cv:
        raise SolverError("cross-validation mode needs CV receivers", code="NO_CV_SPLIT")
    out = _run(problem, options, 0.0, True, callback)
    res = _result(problem, out, "cv", options)
    if res.status == "max_iter":
        raise SolverError(f"no CV minimum confirmed within {options.max_iter} iterations",
                          code="MAX_ITERATIONS", result=res)
    return res


def solve_gmmv_sigma(op: SensingOperator, Y, sigma, options: SolverOptions = SolverOptions(),
                     callback: Optional[Callable] = None) -> InversionResult:
    """Basis-pursuit-denoise GMMV inversion with known residual target
    ``sigma`` (physical units, over the reconstruction rows)."""
    Y = getattr(Y, "Y", Y)
    problem = _Problem(op, Y)
    if sigma < 0:
        raise SolverError("sigma must be nonnegative", code="BAD_OPTION")
    sigma_rel = sigma / problem.norm_y
    if sigma_rel >= 1.0:
        J = np.zeros(op.shape_sources, dtype=complex)
        return InversionResult(J, np.array([problem.norm_y]), np.array([]), np.array([]), np.array([]),
                               np.array([]), np.array([], bool), 0, 0, problem.norm_y,
                               problem.norm_y, "converged", "sigma", problem.norm_y)
    out = _run(problem, options, sigma_rel, False, callback)
    res = _result(problem, out, "sigma", options)
    if res.status == "max_iter":
        raise SolverError(f"residual target not reached within {options.max_iter} iterations",
                          code="MAX_ITERATIONS", result=res)
    return res


# --------------------------------------------------------------------------
# uniqueness diagnostic


@dataclass(frozen=True)
class UniquenessReport:
    support_size: int
    spark: int
    rank: int
    bound: float
    satisfied: bool
    guideline_pi_gt_q: Optional[bool] = None


def spark(A, tol=1e-10, max_cols=20):
    """Smallest number of linearly dependent columns (exhaustive search)."""
    A = np.asarray(A)
    m, n = A.shape
    if n > max_cols:
        raise GmmvError(f"spark by enumeration needs <= {max_cols} columns, got {n}",
                        code="TOO_LARGE_FOR_SPARK")
    smax = np.linalg.norm(A, 2) if A.size else 0.0
    for k in range(1, n + 1):
        for cols in itertools.combinations(range(n), k):
            s = np.linalg.svd(A[:, cols], compute_uv=False)
            if s.size < k or s[-1] <= tol * max(smax, 1e-300):
                return k
    return n + 1


def uniqueness_check(X, A, P=None, I=None, Q=None) -> UniquenessReport:
    """Joint-sparse uniqueness condition ``|supp X| < (spark A - 1 + rank X) / 2``.

    ``P``, ``I``, ``Q`` optionally evaluate the configuration guideline
    ``P * I > Q``.
    """
    X = np.asarray(X)
    sp = spark(A)
    s = np.linalg.svd(X, compute_uv=False) if X.size else np.zeros(0)
    rank = int(np.sum(s > 1e-10 * s.max())) if s.size and s.max() > 0 else 0
    supp = int(np.sum(row_norms(X) > 1e-12))
    bound = (sp - 1 + rank) / 2.0
    guide = None if None in (P, I, Q) else bool(P * I > Q)
    return UniquenessReport(supp, sp, rank, bound, bool(supp < bound), guide)
