"""Coupled nonnegative CP decomposition by alternating proximal gradient.

``S`` nonnegative tensors are decomposed jointly; per mode ``n`` the first
``L_n`` factor columns are shared by all blocks.  Each iteration takes one
projected gradient step per variable (core weight vectors first, then factor
matrices mode by mode) at a Nesterov-extrapolated point, with the step size
set by the spectral norm of the corresponding gram surrogate.  If the
objective fails to decrease the iteration is redone from the
non-extrapolated points, which restores the majorization-minimization
descent guarantee.

Two evaluation modes:

* ``full`` — gradients use the raw tensors (one tall Khatri-Rao product per
  mode, block and iteration).
* ``lra`` — each tensor is first compressed by unconstrained ALS
  (:func:`concpd.cpd_als.cpd_als`); gradient linear terms then reduce to
  products of small cross-gram matrices, so per-iteration cost scales with
  the sum of dimensions instead of their product.  Reported trace
  quantities (objective, relative error) still refer to the original
  tensors, as does the stopping rule; the restart safeguard governs the
  compressed objective, which is what the iteration actually minimizes.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .cpd_als import AlsOptions, cpd_als
from .kruskal import CoupledFactorSet, KruskalTensor, reconstruct
from .tensor_ops import factors_khatri_rao, hadamard_gram, matricize, spectral_norm

__all__ = [
    "CoupledProblem",
    "SolverOptions",
    "SolveResult",
    "TraceRow",
    "solve",
    "objective",
    "core_gradient",
    "factor_gradient",
    "core_linear_term",
    "core_linear_term_lra",
    "factor_linear_term",
    "factor_linear_term_lra",
    "lipschitz_core",
    "lipschitz_factor",
    "extrapolation_weight",
    "t_next",
    "init_factors",
]


# ---------------------------------------------------------------------------
# problem / options / result containers
# ---------------------------------------------------------------------------


@dataclass
class CoupledProblem:
    """``S`` nonnegative tensors to decompose jointly.

    Parameters
    ----------
    tensors : list of ndarray
        Nonnegative arrays of a shared order; dimensions may differ between
        blocks only in modes with ``coupled_counts[n] == 0``.
    ranks : int or list of int
        Target rank per block (an int is broadcast to all blocks).
    coupled_counts : list of int
        Per mode, the number of leading factor columns shared by all blocks.
    mode : "full" or "lra"
    update_core : bool
        ``False`` selects the fixed-core variant: the weight vectors stay at
        their all-ones initialization and only factors are optimized.
    als_options : AlsOptions, optional
        Compression settings for ``mode="lra"``; ``rank=None`` means "match
        the block's target rank", and the per-block ALS seed is
        ``als_options.seed + s``.
    """

    tensors: list
    ranks: list
    coupled_counts: list
    mode: str = "full"
    update_core: bool = True
    als_options: AlsOptions = None

    def __post_init__(self):
        self.tensors = [np.asarray(t, dtype=float) for t in self.tensors]
        if isinstance(self.ranks, (int, np.integer)):
            self.ranks = [int(self.ranks)] * len(self.tensors)
        self.ranks = [int(r) for r in self.ranks]
        self.coupled_counts = [int(c) for c in self.coupled_counts]

    @property
    def n_blocks(self):
        return len(self.tensors)

    @property
    def order(self):
        return self.tensors[0].ndim

    def validate(self):
        if not self.tensors:
            raise ValueError("no tensors")
        if self.mode not in ("full", "lra"):
            raise ValueError(f"unknown mode {self.mode!r}")
        order = self.tensors[0].ndim
        for s, t in enumerate(self.tensors):
            if t.ndim != order:
                raise ValueError(f"block {s} has order {t.ndim}, expected {order}")
            if not np.isfinite(t).all():
                raise ValueError(f"block {s} contains non-finite values")
            if (t < 0).any():
                raise ValueError(f"block {s} contains negative entries")
        if len(self.ranks) != len(self.tensors):
            raise ValueError("one rank per block required")
        if any(r < 1 for r in self.ranks):
            raise ValueError("ranks must be >= 1")
        if len(self.coupled_counts) != order:
            raise ValueError("one coupled count per mode required")
        min_rank = min(self.ranks)
        for n, c in enumerate(self.coupled_counts):
            if not 0 <= c <= min_rank:
                raise ValueError(
                    f"coupled count {c} in mode {n} exceeds minimum rank {min_rank}"
                )
            if c > 0:
                sizes = {t.shape[n] for t in self.tensors}
                if len(sizes) != 1:
                    raise ValueError(
                        f"mode {n} is coupled but block sizes differ: {sorted(sizes)}"
                    )


@dataclass
class SolverOptions:
    max_iter: int = 1000
    tol: float = 1e-8
    delta_w: float = 0.9999
    seed: int = 0
    trace_every: int = 1

    def __post_init__(self):
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0.0 < self.delta_w < 1.0:
            raise ValueError("delta_w must lie in (0, 1)")
        if self.trace_every < 1:
            raise ValueError("trace_every must be >= 1")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    obj_fun: float
    rel_err: float
    elapsed_s: float


@dataclass
class SolveResult:
    """Outcome of :func:`solve`.

    ``trace`` rows report the objective and relative error against the
    original tensors.  ``objective_history`` records, for every accepted
    iteration (entry 0 is the initialization), the objective the solver
    actually minimizes — identical to the trace objective in full mode,
    the compressed-tensor objective in lra mode — and is the quantity the
    restart rule keeps non-increasing.
    """

    factors: CoupledFactorSet
    trace: list
    termination_reason: str
    objective_history: list = field(repr=False, default_factory=list)
    rel_err_history: list = field(repr=False, default_factory=list)
    n_iter: int = 0
    n_restarts: int = 0
    solve_seconds: float = 0.0
    compress_seconds: float = 0.0
    compression: list = None


# ---------------------------------------------------------------------------
# gradient / step-size / extrapolation building blocks
# ---------------------------------------------------------------------------


def objective(tensors, blocks):
    """``1/2 sum_s ||M_s - [[lam_s; U_s]]||_F^2`` via explicit residuals."""
    total = 0.0
    for t, k in zip(tensors, blocks):
        m0 = matricize(t, 0)
        x0 = (k.factors[0] * k.weights) @ factors_khatri_rao(k.factors, skip=0).T
        d = m0 - x0
        total += 0.5 * float(np.einsum("ij,ij->", d, d))
    return total


def core_gradient(gram_all, lam_hat, linear):
    """Gradient of the block objective in the core weights.

    ``gram_all`` is the all-modes Hadamard product of factor grams and
    ``linear`` the Khatri-Rao contraction of the data (see
    :func:`core_linear_term`), both at the current factors.
    """
    return gram_all @ lam_hat - linear


def core_linear_term(tensor, factors):
    """``(U_kr)^T vec(M)`` computed through the mode-0 unfolding."""
    mtt = matricize(tensor, 0) @ factors_khatri_rao(factors, skip=0)
    return np.einsum("ir,ir->r", factors[0], mtt)


def core_linear_term_lra(tilde, factors):
    """Same contraction when ``M`` is the compressed model ``tilde``.

    Uses the cross-gram identity: the Khatri-Rao contraction of
    ``reconstruct(tilde)`` equals the all-modes Hadamard product of
    ``U^T U~`` summed against the compression weights.
    """
    cross = hadamard_gram(factors, mats2=tilde.factors)
    return cross @ tilde.weights


def factor_gradient(u_hat, gram_skip, mtt, lam):
    """Gradient of the block objective in one mode's factor.

    ``gram_skip`` is the Hadamard gram over the other modes, ``mtt`` the
    matricized-tensor-times-Khatri-Rao product for this mode (see
    :func:`factor_linear_term`), ``u_hat`` the (possibly extrapolated)
    point.
    """
    return u_hat @ (gram_skip * np.outer(lam, lam)) - mtt * lam


def factor_linear_term(tensor, factors, n):
    """``M_(n) U_kr^(-n)`` — the tall product that dominates full-mode cost."""
    return matricize(tensor, n) @ factors_khatri_rao(factors, skip=n)


def factor_linear_term_lra(tilde, factors, n):
    """Same product against ``reconstruct(tilde)`` using only small matrices."""
    cross = hadamard_gram(tilde.factors, skip=n, mats2=factors)
    return (tilde.factors[n] * tilde.weights) @ cross


def lipschitz_core(factors):
    """Step-size bound for the core update: spectral norm of the full gram."""
    return spectral_norm(hadamard_gram(factors))


def lipschitz_factor(factors, lam, n):
    """Step-size bound for a mode-``n`` factor update."""
    gram_skip = hadamard_gram(factors, skip=n)
    return spectral_norm(gram_skip * np.outer(lam, lam))


def t_next(t):
    """Momentum sequence ``t_k = (1 + sqrt(1 + 4 t_{k-1}^2)) / 2``."""
    return 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))


def extrapolation_weight(w_hat, lip_prev, lip_curr, delta_w):
    """``min(w_hat, delta_w * sqrt(L_prev / L_curr))``; 0 on degenerate blocks."""
    if lip_curr <= 0.0 or lip_prev <= 0.0:
        return 0.0
    return min(w_hat, delta_w * float(np.sqrt(lip_prev / lip_curr)))


def init_factors(problem, seed):
    """Uniform [0, 1) initialization with the common prefix drawn once.

    Weight vectors are uniform [0, 1) as well, except in the fixed-core
    variant where they are all ones.  The draw order (common prefixes by
    mode, then per block: individual columns by mode, then weights) is part
    of the determinism contract.
    """
    rng = np.random.default_rng(seed)
    counts = problem.coupled_counts
    dims0 = problem.tensors[0].shape
    common = [rng.random((dims0[n], counts[n])) for n in range(problem.order)]
    blocks = []
    for s in range(problem.n_blocks):
        rank = problem.ranks[s]
        facs = []
        for n in range(problem.order):
            ind = rng.random((problem.tensors[s].shape[n], rank - counts[n]))
            # uncoupled modes may differ in size between blocks, so the
            # zero-width common slab cannot be stacked against them
            facs.append(np.hstack([common[n], ind]) if counts[n] else ind)
        if problem.update_core:
            lam = rng.random(rank)
        else:
            lam = np.ones(rank)
        blocks.append(KruskalTensor(facs, lam))
    return CoupledFactorSet(blocks, list(counts))


# ---------------------------------------------------------------------------
# the solver
# ---------------------------------------------------------------------------


class _Apg:
    """Iteration state: current/previous iterates plus gram caches."""

    def __init__(self, problem, opts, tilde):
        self.p = problem
        self.o = opts
        self.tilde = tilde
        self.S = problem.n_blocks
        self.N = problem.order
        self.counts = problem.coupled_counts

        start = init_factors(problem, opts.seed)
        self.curr = start.blocks
        self.prev = [b.copy() for b in self.curr]

        self.m0 = [matricize(t, 0) for t in problem.tensors]
        self.norm_sq = [float(np.vdot(t, t)) for t in problem.tensors]
        self.gram = [[f.T @ f for f in b.factors] for b in self.curr]
        if tilde is not None:
            self.cross = [
                [tf.T @ f for tf, f in zip(tilde[s].factors, self.curr[s].factors)]
                for s in range(self.S)
            ]
            self.tilde_sq = [
                float(np.ones(k.rank) @ hadamard_gram(k.factors) @ np.ones(k.rank))
                for k in tilde
            ]
        # full-mode core linear terms (U_kr)^T vec(M), staged at iteration end
        self.b = [None] * self.S
        # last-mode linear term cached for reuse, tagged with its iteration
        self._mtt_last = [None] * self.S
        self._mtt_tag = [-1] * self.S
        self._iter_tag = 0

        self.lip_core = [None] * self.S
        self.lip_fac = [[None] * self.S for _ in range(self.N)]
        self.t_k = 1.0
        self.n_restarts = 0

    # -- gram-cache helpers ------------------------------------------------

    def _gram_product(self, s, skip=None):
        rank = self.p.ranks[s]
        out = np.ones((rank, rank))
        for m, g in enumerate(self.gram[s]):
            if m != skip:
                out *= g
        return out

    def _cross_product(self, s, skip=None):
        out = None
        for m, c in enumerate(self.cross[s]):
            if m != skip:
                out = c.copy() if out is None else out * c
        return out

    def _refresh_factor_caches(self, s, n):
        f = self.curr[s].factors[n]
        self.gram[s][n] = f.T @ f
        if self.tilde is not None:
            self.cross[s][n] = self.tilde[s].factors[n].T @ f

    # -- block updates -----------------------------------------------------

    def _update_cores(self, w_hat):
        for s in range(self.S):
            gram_all = self._gram_product(s)
            ld = spectral_norm(gram_all)
            ld_prev = self.lip_core[s] if self.lip_core[s] is not None else ld
            self.lip_core[s] = ld
            lam = self.curr[s].weights
            if ld == 0.0:
                # all factor columns are zero, so the gradient is too
                self.prev[s].weights = lam
                self.curr[s].weights = lam.copy()
                continue
            w = extrapolation_weight(w_hat, ld_prev, ld, self.o.delta_w)
            lam_hat = lam + w * (lam - self.prev[s].weights)
            if self.tilde is None:
                linear = self.b[s]
            else:
                linear = self._cross_product(s).T @ self.tilde[s].weights
            grad = core_gradient(gram_all, lam_hat, linear)
            self.prev[s].weights = lam
            self.curr[s].weights = np.maximum(0.0, lam_hat - grad / ld)

    def _update_mode(self, n, w_hat):
        ln = self.counts[n]
        per_block = []
        for s in range(self.S):
            lam = self.curr[s].weights
            gram_skip = self._gram_product(s, skip=n)
            step_mat = gram_skip * np.outer(lam, lam)
            lu = spectral_norm(step_mat)
            lu_prev = self.lip_fac[n][s] if self.lip_fac[n][s] is not None else lu
            self.lip_fac[n][s] = lu
            mtt = None
            if lu > 0.0:
                if self.tilde is None:
                    kr = factors_khatri_rao(self.curr[s].factors, skip=n)
                    m_n = self.m0[s] if n == 0 else matricize(self.p.tensors[s], n)
                    mtt = m_n @ kr
                    if n == self.N - 1:
                        self._mtt_last[s] = mtt
                        self._mtt_tag[s] = self._iter_tag
                else:
                    tilde = self.tilde[s]
                    cross_skip = self._cross_product(s, skip=n)
                    mtt = (tilde.factors[n] * tilde.weights) @ cross_skip
            per_block.append((step_mat, lu, lu_prev, mtt))

        sum_lu = sum(entry[1] for entry in per_block)
        if ln > 0:
            sum_prev = sum(entry[2] for entry in per_block)
            w_common = extrapolation_weight(w_hat, sum_prev, sum_lu, self.o.delta_w)
            c_curr = self.curr[0].factors[n][:, :ln]
            c_prev = self.prev[0].factors[n][:, :ln]
            c_hat = c_curr + w_common * (c_curr - c_prev)
            grad_common = np.zeros_like(c_hat)

        new_individual = []
        for s, (step_mat, lu, lu_prev, mtt) in enumerate(per_block):
            u = self.curr[s].factors[n]
            lam = self.curr[s].weights
            if lu == 0.0:
                # zero step bound implies a zero gradient; keep the block
                new_individual.append(u[:, ln:].copy())
                continue
            w = extrapolation_weight(w_hat, lu_prev, lu, self.o.delta_w)
            i_hat = u[:, ln:] + w * (u[:, ln:] - self.prev[s].factors[n][:, ln:])
            u_hat = np.hstack([c_hat, i_hat]) if ln > 0 else i_hat
            grad = u_hat @ step_mat - mtt * lam
            if ln > 0:
                grad_common += grad[:, :ln]
            new_individual.append(np.maximum(0.0, i_hat - grad[:, ln:] / lu))

        if ln > 0:
            if sum_lu > 0.0:
                c_new = np.maximum(0.0, c_hat - grad_common / sum_lu)
            else:
                c_new = c_curr.copy()
        for s in range(self.S):
            old = self.curr[s].factors[n]
            new = np.hstack([c_new, new_individual[s]]) if ln > 0 else new_individual[s]
            self.prev[s].factors[n] = old
            self.curr[s].factors[n] = new
            self._refresh_factor_caches(s, n)

    def _sweep(self, w_hat):
        if self.p.update_core:
            self._update_cores(w_hat)
        for n in range(self.N):
            self._update_mode(n, w_hat)

    # -- objective / relative error ----------------------------------------

    def _small_residual_sq(self, s):
        """Stable ``||M~ - X||^2`` via per-mode QR of the stacked factors.

        The residual of two Kruskal models lives in the span of their
        concatenated factors; rotating into that basis gives a small dense
        core whose norm is free of the cancellation that ruins the gram
        expansion once the residual is tiny.
        """
        tilde = self.tilde[s]
        weights = np.concatenate([tilde.weights, -self.curr[s].weights])
        coeffs = []
        for n in range(self.N):
            stacked = np.hstack([tilde.factors[n], self.curr[s].factors[n]])
            coeffs.append(np.linalg.qr(stacked, mode="r"))
        core = reconstruct(KruskalTensor(coeffs, weights))
        return float(np.vdot(core, core))

    def _evaluate(self):
        """Objective and relative error at the current iterate.

        Returns ``(obj_internal, obj_original, rel_err)`` and stages the
        next iteration's core linear terms (full mode).  The internal
        objective is evaluated so that its error stays far below the true
        per-iteration decrease — explicitly in full mode, via the QR route
        in lra mode once the compressed residual is small.
        """
        obj_int = 0.0
        obj_orig = 0.0
        rel = 0.0
        staged = [None] * self.S
        for s in range(self.S):
            lam = self.curr[s].weights
            facs = self.curr[s].factors
            if self.tilde is None:
                kr0 = factors_khatri_rao(facs, skip=0)
                x0 = (facs[0] * lam) @ kr0.T
                d = self.m0[s] - x0
                res_sq = float(np.einsum("ij,ij->", d, d))
                obj_int += 0.5 * res_sq
                if self._mtt_tag[s] == self._iter_tag:
                    staged[s] = np.einsum(
                        "ir,ir->r", facs[self.N - 1], self._mtt_last[s]
                    )
                else:
                    staged[s] = np.einsum("ir,ir->r", facs[0], self.m0[s] @ kr0)
            else:
                model_sq = float(lam @ self._gram_product(s) @ lam)
                inner = float(lam @ (self._cross_product(s).T @ self.tilde[s].weights))
                res_sq_t = self.tilde_sq[s] - 2.0 * inner + model_sq
                if res_sq_t < 1e-3 * self.tilde_sq[s]:
                    res_sq_t = self._small_residual_sq(s)
                obj_int += 0.5 * max(res_sq_t, 0.0)
                # original-tensor quantities for the trace and stopping rule
                kr0 = factors_khatri_rao(facs, skip=0)
                b_orig = np.einsum("ir,ir->r", facs[0], self.m0[s] @ kr0)
                res_sq = max(self.norm_sq[s] - 2.0 * lam @ b_orig + model_sq, 0.0)
            if not np.isfinite(res_sq):
                raise FloatingPointError(
                    f"block {s} produced a non-finite objective "
                    f"at iteration {self._iter_tag}"
                )
            if self.tilde is None:
                obj_orig = obj_int
            else:
                obj_orig += 0.5 * res_sq
            norm = np.sqrt(self.norm_sq[s])
            rel += np.sqrt(max(res_sq, 0.0)) / norm if norm > 0.0 else 0.0
        return obj_int, obj_orig, rel / self.S, staged

    # -- restart -----------------------------------------------------------

    def _restore_previous(self):
        for s in range(self.S):
            self.curr[s].weights = self.prev[s].weights.copy()
            for n in range(self.N):
                self.curr[s].factors[n] = self.prev[s].factors[n].copy()
                self._refresh_factor_caches(s, n)


def solve(problem, opts=None):
    """Run the coupled decomposition; see the module docstring.

    Stops when the original-tensor relative error changes by less than
    ``opts.tol`` between iterations ("tolerance") or after
    ``opts.max_iter`` iterations ("max_iterations").
    """
    opts = opts if opts is not None else SolverOptions()
    problem.validate()

    compress_seconds = 0.0
    tilde = None
    if problem.mode == "lra":
        base = problem.als_options if problem.als_options is not None else AlsOptions()
        tic = time.perf_counter()
        tilde = []
        for s, (tensor, rank) in enumerate(zip(problem.tensors, problem.ranks)):
            als = AlsOptions(
                rank=base.rank if base.rank is not None else rank,
                tol=base.tol,
                max_iter=base.max_iter,
                seed=base.seed + s,
            )
            try:
                tilde.append(cpd_als(tensor, als).model)
            except ValueError as exc:
                raise ValueError(f"compression of block {s} failed: {exc}") from exc
        compress_seconds = time.perf_counter() - tic

    state = _Apg(problem, opts, tilde)
    t0 = time.perf_counter()

    obj_int, obj_orig, rel_err, staged = state._evaluate()
    state.b = staged
    obj_history = [obj_int]
    rel_history = [rel_err]
    trace = [TraceRow(0, obj_orig, rel_err, time.perf_counter() - t0)]

    termination = "max_iterations"
    n_done = 0
    for k in range(1, opts.max_iter + 1):
        state._iter_tag = k
        t_new = t_next(state.t_k)
        w_hat = (state.t_k - 1.0) / t_new
        state.t_k = t_new

        state._sweep(w_hat)
        obj_int, obj_orig, new_rel, staged = state._evaluate()
        if obj_int >= obj_history[-1]:
            # extrapolation overshot: redo the iteration without it
            state.n_restarts += 1
            state._restore_previous()
            state._sweep(0.0)
            obj_int, obj_orig, new_rel, staged = state._evaluate()
        state.b = staged
        obj_history.append(obj_int)
        rel_history.append(new_rel)
        n_done = k
        last = abs(new_rel - rel_err) < opts.tol or k == opts.max_iter
        if k % opts.trace_every == 0 or last:
            trace.append(TraceRow(k, obj_orig, new_rel, time.perf_counter() - t0))
        if abs(new_rel - rel_err) < opts.tol:
            termination = "tolerance"
            break
        rel_err = new_rel

    factors = CoupledFactorSet(state.curr, list(problem.coupled_counts))
    return SolveResult(
        factors=factors,
        trace=trace,
        termination_reason=termination,
        objective_history=obj_history,
        rel_err_history=rel_history,
        n_iter=n_done,
        n_restarts=state.n_restarts,
        solve_seconds=time.perf_counter() - t0,
        compress_seconds=compress_seconds,
        compression=tilde,
    )
