"""Bayesian optimization of a functional restricted to a finite span.

The search happens on the cube [-1, 1]^R mapped into the space by

    g(c) = f( sum_i (c_i * ell) q_i ),

where the q_i are an orthonormal basis (either orthonormalized random
draws or the leading eigenfunctions of the gradient second-moment estimate
built from gradients at those same draws) and ell is 1.5 times the largest
projection coefficient of the initial designs, so every initial design
lands inside the cube (at coordinates within +-2/3).  Each sequential step
fits the shared GP on the standardized observations and maximizes expected
improvement over scrambled low-discrepancy candidates plus a local
coordinate-descent polish.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr
from scipy.stats import qmc

from .asm import GradientSampleSet, eigendecompose
from .errors import NotOrthonormalError
from .gp import fit_gp
from .hilbert import Field, Subspace, orthonormalize

N_CANDIDATES = 1024
N_POLISH = 4
POLISH_STEPS = 50


@dataclass
class SpanObjective:
    """Cube-parameterized restriction of a functional to a finite span.
    The cube center c = 0 maps to the zero element of the span."""

    f: object
    basis: Subspace
    ell: float
    init_coords: np.ndarray

    @property
    def cube_dim(self):
        return self.basis.dim

    def field_at(self, c):
        c = np.asarray(c, dtype=np.float64)
        return Field(self.basis.space, (c * self.ell) @ self.basis.vectors)

    def evaluate_cube(self, c):
        return float(self.f.evaluate(self.field_at(c)))


def build_span_objective(f, basis, init_fields):
    """Project the initial designs onto the basis (normal equations
    (Q*Q)^-1 Q*M, which for an orthonormal basis reduce to plain inner
    products), size the cube from the largest coefficient, and return the
    objective together with the initial cube coordinates."""
    if not isinstance(basis, Subspace) or not basis.orthonormal:
        raise NotOrthonormalError(
            "span basis must be orthonormal; orthonormalize it first"
        )
    if basis.dim < 1:
        raise ValueError("need a basis of at least one element")
    if isinstance(init_fields, (list, tuple)):
        init = np.array([u.values for u in init_fields])
    else:
        init = np.atleast_2d(np.asarray(init_fields, dtype=np.float64))
    qm = basis.coefficients(init)  # Q*M, one row per initial design
    coeffs = np.linalg.solve(basis.gram(), qm.T).T
    max_coeff = float(np.max(np.abs(coeffs)))
    if max_coeff == 0.0:
        raise ValueError("all initial designs are orthogonal to the span")
    ell = 1.5 * max_coeff
    return SpanObjective(f, basis, ell, coeffs / ell)


def expected_improvement(mean, sd, best):
    """EI for minimization: E[max(best - f, 0)] under a Gaussian posterior.
    Vectorizes over mean/sd arrays; sd = 0 degrades to max(best - mean, 0)."""
    scalar = np.isscalar(mean) and np.isscalar(sd)
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    sd = np.atleast_1d(np.asarray(sd, dtype=np.float64))
    imp = best - mean
    out = np.maximum(imp, 0.0)
    pos = sd > 0
    if np.any(pos):
        z = imp[pos] / sd[pos]
        dens = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
        out[pos] = imp[pos] * ndtr(z) + sd[pos] * dens
    return float(out[0]) if scalar else out


@dataclass
class BOTrace:
    """One optimization run: evaluated cube points, objective values, and
    the running best (nonincreasing)."""

    coords: np.ndarray
    values: np.ndarray
    best: np.ndarray
    method: str
    seed: int
    n_init: int
    n_seq: int
    gradient_calls: int = 0
    error: str = None
    meta: dict = field(default_factory=dict)


def _derived_seed(*parts):
    return int(
        np.random.SeedSequence(entropy=tuple(int(p) for p in parts)).generate_state(1)[0]
    )


def _polish(model, best_y, c0):
    """Coordinate-descent EI polish with a shrinking search window."""
    c = c0.copy()
    R = c.shape[0]
    width = 2.0
    for step in range(POLISH_STEPS):
        dim = step % R
        line = np.clip(np.linspace(c[dim] - width / 2, c[dim] + width / 2, 21), -1.0, 1.0)
        trial = np.tile(c, (line.size, 1))
        trial[:, dim] = line
        mean, sd = model.predict(trial)
        c = trial[int(np.argmax(expected_improvement(mean, sd, best_y)))]
        width *= 0.85
    return c


def run_bo(objective, n_init, n_seq, seed):
    """Sequential EI minimization on the cube.

    The design starts with the cube center (the zero element of the span)
    followed by the first n_init projected initial designs; each of the
    n_seq steps fits the GP and evaluates the EI argmax.  An objective
    failure truncates the trace and records the error.
    """
    if n_init < 2:
        raise ValueError("n_init must be >= 2")
    if n_init > objective.init_coords.shape[0]:
        raise ValueError(
            f"objective carries {objective.init_coords.shape[0]} initial designs, "
            f"need {n_init}"
        )
    R = objective.cube_dim
    planned = [np.zeros(R)] + [c.copy() for c in objective.init_coords[:n_init]]

    coords, values = [], []
    error = None
    try:
        for c in planned:
            coords.append(c)
            values.append(objective.evaluate_cube(c))
        for t in range(n_seq):
            X = np.array(coords)
            y = np.array(values)
            model = fit_gp(X, y)
            best_y = float(np.min(y))
            sob = qmc.Sobol(R, scramble=True, seed=_derived_seed(seed, 2, t))
            cand = 2.0 * sob.random(N_CANDIDATES) - 1.0
            mean, sd = model.predict(cand)
            ei = expected_improvement(mean, sd, best_y)
            top = np.argsort(-ei, kind="stable")[:N_POLISH]
            finalists = [cand[i] for i in top]
            finalists += [_polish(model, best_y, cand[i]) for i in top]
            fin = np.array(finalists)
            fm, fs = model.predict(fin)
            pick = fin[int(np.argmax(expected_improvement(fm, fs, best_y)))]
            coords.append(pick)
            values.append(objective.evaluate_cube(pick))
    except Exception as exc:  # objective failure: truncate with a record
        coords = coords[: len(values)]
        error = repr(exc)

    values = np.array(values)
    coords = np.array(coords) if coords else np.zeros((0, R))
    best = np.minimum.accumulate(values) if values.size else values
    return BOTrace(
        coords=coords,
        values=values,
        best=best,
        method="",
        seed=int(seed),
        n_init=n_init,
        n_seq=n_seq,
        error=error,
    )


@dataclass
class MethodComparison:
    """Traces and per-iteration best-so-far percentiles for both basis
    choices."""

    traces: list
    summary: dict  # method -> (iterations, 3) array of 10/50/90 percentiles
    n_iterations: int


def rand_basis(measure, fields_matrix):
    """Orthonormalized random draws as the search basis."""
    fields = [Field(measure.space, v) for v in fields_matrix]
    return orthonormalize(fields)


def asm_basis(f, measure, fields_matrix, R):
    """Leading eigenfunctions of the gradient second-moment estimate built
    from gradients at the given draws (one gradient per draw)."""
    values = np.empty(fields_matrix.shape[0])
    grads = np.empty_like(fields_matrix)
    for b, row in enumerate(fields_matrix):
        u = Field(measure.space, row)
        values[b] = f.evaluate(u)
        grads[b] = f.gradient(u).values
    samples = GradientSampleSet(measure.space, fields_matrix, grads, values, 0)
    est = eigendecompose(samples)
    keep = min(R, est.rank)
    return Subspace(
        measure.space, est.eigenfunctions.vectors[:keep], orthonormal=True, tol=1e-8
    )


def compare_methods(f, measure, R, repetitions, base_seed=0, n_init=10, n_seq=40):
    """Run the random-basis and estimated-basis optimizers side by side.

    Every repetition draws R basis samples and n_init initial designs once
    and shares them across both methods; only the projection basis differs.
    Returns per-iteration 10/50/90 percentiles of the best observed value.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    traces = []
    for rep in range(repetitions):
        basis_seed = _derived_seed(base_seed, rep, 10)
        init_seed = _derived_seed(base_seed, rep, 11)
        bo_seed = _derived_seed(base_seed, rep, 12)
        draws = measure.sample_matrix(R, basis_seed)
        init_fields = measure.sample_matrix(n_init, init_seed)
        bases = {
            "asm": asm_basis(f, measure, draws, R),
            "rand": rand_basis(measure, draws),
        }
        for method in ("asm", "rand"):
            objective = build_span_objective(f, bases[method], init_fields)
            trace = run_bo(objective, n_init, n_seq, bo_seed)
            trace.method = method
            trace.seed = rep
            trace.gradient_calls = R if method == "asm" else 0
            trace.meta = {
                "basis_seed": basis_seed,
                "init_seed": init_seed,
                "bo_seed": bo_seed,
                "ell": objective.ell,
            }
            traces.append(trace)

    n_iter = n_init + n_seq + 1
    summary = {}
    for method in ("asm", "rand"):
        stack = np.array(
            [t.best for t in traces if t.method == method and t.error is None]
        )
        summary[method] = np.percentile(stack, [10.0, 50.0, 90.0], axis=0).T
    return MethodComparison(traces, summary, n_iter)
