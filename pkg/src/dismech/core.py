"""Problem data and cost functions shared by the allocation and consensus settings.

Agents carry strictly convex quadratic costs.  An agent's private type is its
preferred decision (the unconstrained minimizer of its cost); the public
curvature plus the type determine the full quadratic, which is what lets a
mechanism re-evaluate a cost at a reported type.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CURVATURE_FLOOR",
    "RANK_TOL",
    "AgentType",
    "QuadraticCost",
    "AllocationProblem",
    "SocialChoice",
    "evaluate_cost",
    "argmin_augmented",
]

# Smallest admissible eigenvalue of a cost curvature matrix.  Anything below
# this is treated as non-strictly-convex and rejected at construction.
CURVATURE_FLOOR = 1e-8

# Relative tolerance for the full-row-rank check on coupling matrices.
RANK_TOL = 1e-10


def _as_vector(x, name="x"):
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class AgentType:
    """An agent's private type: the decision it would pick if unconstrained.

    Scalar types (consensus) are stored as length-1 vectors.
    """

    theta: np.ndarray

    def __post_init__(self):
        theta = _as_vector(self.theta, "theta")
        if not np.all(np.isfinite(theta)):
            raise ValueError("type vector must be finite")
        object.__setattr__(self, "theta", theta)

    @property
    def dim(self):
        return self.theta.shape[0]

    def scalar(self):
        if self.dim != 1:
            raise ValueError("type is not scalar")
        return float(self.theta[0])


@dataclass(frozen=True)
class QuadraticCost:
    """Strictly convex quadratic cost  0.5 x'Ax + b'x + c0.

    A must be symmetric with smallest eigenvalue >= CURVATURE_FLOOR.  The
    declared type parameterization keeps A public and writes the type theta
    into the linear and constant terms:  b = -A theta, c0 = 0.5 theta'A theta,
    i.e. the cost 0.5 (x - theta)' A (x - theta).  The scalar consensus cost
    (x - theta)^2 is the special case A = 2.
    """

    A: np.ndarray
    b: np.ndarray
    c0: float = 0.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = _as_vector(self.b, "b")
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"curvature matrix must be square, got {A.shape}")
        if A.shape[0] != b.shape[0]:
            raise ValueError(
                f"curvature/linear size mismatch: {A.shape} vs {b.shape}"
            )
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.isfinite(self.c0)):
            raise ValueError("cost parameters must be finite")
        if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(A).max()))):
            raise ValueError("curvature matrix must be symmetric")
        lam_min = float(np.linalg.eigvalsh(A)[0])
        if lam_min < CURVATURE_FLOOR:
            raise ValueError(
                f"curvature matrix is not strictly convex: lambda_min={lam_min:g}"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c0", float(self.c0))

    @classmethod
    def from_target(cls, A, target):
        """Cost 0.5 (x - target)' A (x - target) with public curvature A."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        t = _as_vector(target, "target")
        return cls(A=A, b=-A @ t, c0=0.5 * float(t @ A @ t))

    @classmethod
    def consensus(cls, theta):
        """Scalar disagreement cost (x - theta)^2."""
        if isinstance(theta, AgentType):
            theta = theta.scalar()
        return cls.from_target(np.array([[2.0]]), [float(theta)])

    @property
    def dim(self):
        return self.b.shape[0]

    @property
    def target(self):
        """Unconstrained minimizer, i.e. the type under the declared parameterization."""
        return np.linalg.solve(self.A, -self.b)

    def with_target(self, target):
        """Same curvature, re-parameterized at a (possibly misreported) type."""
        if isinstance(target, AgentType):
            target = target.theta
        return QuadraticCost.from_target(self.A, target)

    @property
    def min_curvature(self):
        return float(np.linalg.eigvalsh(self.A)[0])


def evaluate_cost(cost, x):
    """Value of the cost at decision x."""
    x = _as_vector(x)
    if x.shape[0] != cost.dim:
        raise ValueError(f"decision has dim {x.shape[0]}, cost expects {cost.dim}")
    return 0.5 * float(x @ cost.A @ x) + float(cost.b @ x) + cost.c0


def argmin_augmented(cost, q):
    """Unique minimizer of  cost(x) + q'x  (the price-augmented best response).

    For a broadcast price p and coupling block R_i, pass q = R_i' p.
    """
    q = _as_vector(q, "q")
    if q.shape[0] != cost.dim:
        raise ValueError(f"price term has dim {q.shape[0]}, cost expects {cost.dim}")
    return np.linalg.solve(cost.A, -(cost.b + q))


class AllocationProblem:
    """Coupled cost allocation problem: minimize sum_i v_i(x_i) s.t. Rx = c.

    R is partitioned column-wise into per-agent blocks matching the cost
    dimensions and must have full row rank.
    """

    def __init__(self, costs, R, c):
        costs = list(costs)
        if not costs:
            raise ValueError("problem needs at least one agent")
        R = np.atleast_2d(np.asarray(R, dtype=float))
        c = _as_vector(c, "c")
        dims = [cost.dim for cost in costs]
        if R.shape[1] != sum(dims):
            raise ValueError(
                f"R has {R.shape[1]} columns but cost blocks total {sum(dims)}"
            )
        if R.shape[0] != c.shape[0]:
            raise ValueError(f"R has {R.shape[0]} rows but c has {c.shape[0]}")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(c))):
            raise ValueError("problem data must be finite")
        scale = float(np.linalg.norm(R))
        rank = int(np.linalg.matrix_rank(R, tol=RANK_TOL * max(scale, 1.0)))
        if rank < R.shape[0]:
            raise ValueError(
                f"R must have full row rank: rank {rank} < {R.shape[0]} rows"
            )
        self.costs = costs
        self.R = R
        self.c = c
        self._slices = []
        off = 0
        for d in dims:
            self._slices.append(slice(off, off + d))
            off += d
        self._gram_cho = None

    @property
    def num_agents(self):
        return len(self.costs)

    @property
    def dim(self):
        return self.R.shape[1]

    @property
    def num_constraints(self):
        return self.R.shape[0]

    def block(self, i):
        """Column slice of agent i's decision block."""
        return self._slices[i]

    def coupling_block(self, i):
        """Columns of R that multiply agent i's block (the matrix R_i)."""
        return self.R[:, self._slices[i]]

    def split(self, x):
        """Per-agent views of a concatenated decision vector."""
        x = _as_vector(x)
        if x.shape[0] != self.dim:
            raise ValueError(f"decision has dim {x.shape[0]}, problem expects {self.dim}")
        return [x[s] for s in self._slices]

    def total_cost(self, x):
        return sum(evaluate_cost(cost, xi) for cost, xi in zip(self.costs, self.split(x)))

    def curvature_blockdiag(self):
        H = np.zeros((self.dim, self.dim))
        for cost, s in zip(self.costs, self._slices):
            H[s, s] = cost.A
        return H

    def linear_terms(self):
        return np.concatenate([cost.b for cost in self.costs])

    @property
    def min_curvature(self):
        """Strong convexity constant of the total cost (smallest block eigenvalue)."""
        return min(cost.min_curvature for cost in self.costs)

    def gram_solve(self, rhs):
        """Solve (R R') y = rhs, caching the Cholesky factor."""
        from scipy.linalg import cho_factor, cho_solve

        if self._gram_cho is None:
            self._gram_cho = cho_factor(self.R @ self.R.T)
        return cho_solve(self._gram_cho, rhs)

    def with_costs(self, costs):
        """Same coupling structure with replaced per-agent costs."""
        return AllocationProblem(costs, self.R, self.c)

    def targets(self):
        """Per-agent types under the declared parameterization."""
        return [AgentType(cost.target) for cost in self.costs]


@dataclass(frozen=True)
class SocialChoice:
    """A social decision together with the tax charged to each agent."""

    x: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _as_vector(self.x, "x"))
        object.__setattr__(self, "t", _as_vector(self.t, "t"))

    @property
    def num_agents(self):
        return self.t.shape[0]
