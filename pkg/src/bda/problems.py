"""Built-in bi-level test problems with analytic derivatives and reference solutions.

Each factory returns a :class:`BilevelProblem` whose callables take the
upper-level point ``x`` and the lower-level point ``y`` as 1-D float arrays.
Second derivatives are supplied in closed form where the solvers need them;
known minimizers, value functions, and lower-level optimal values are attached
so that metric and verification code has exact references.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .numerics import (BoxRegion, CapabilityError, ContractError, as_vector,
                       rng_stream)

Array = np.ndarray
VecFn = Callable[[Array, Array], Array]
MatFn = Callable[[Array, Array], Array]


@dataclass(frozen=True)
class BilevelProblem:
    """Contract between a concrete problem and the solver stack.

    ``F`` / ``f`` are the upper- and lower-level objectives, ``n`` / ``m``
    their variable dimensions, and ``region_x`` / ``region_y`` the feasible
    boxes.  Optional fields carry second derivatives, smoothness constants,
    and analytic reference data; solvers raise :class:`CapabilityError` when
    a field they need is absent.
    """

    name: str
    n: int
    m: int
    region_x: BoxRegion
    region_y: BoxRegion
    F: Callable[[Array, Array], float]
    f: Callable[[Array, Array], float]
    grad_x_F: VecFn
    grad_y_F: VecFn
    grad_y_f: VecFn
    grad_x_f: Optional[VecFn] = None
    hess_yy_f: Optional[MatFn] = None
    hess_yx_f: Optional[MatFn] = None
    hess_yy_F: Optional[MatFn] = None
    hess_yx_F: Optional[MatFn] = None
    L_F: Optional[float] = None
    L_f: Optional[float] = None
    sigma: Optional[float] = None
    F_lower_bound: Optional[float] = None
    # a point of the lower-level solution set S(x); the UL-optimal one when known
    y_star_of_x: Optional[Callable[[Array], Array]] = None
    f_star_of_x: Optional[Callable[[Array], float]] = None
    phi_star_of_x: Optional[Callable[[Array], float]] = None
    grad_phi_of_x: Optional[Callable[[Array], Array]] = None
    x_opt: Optional[Array] = None
    y_opt: Optional[Array] = None
    metadata: dict = field(default_factory=dict)

    def require(self, *fields: str) -> None:
        missing = [name for name in fields if getattr(self, name) is None]
        if missing:
            raise CapabilityError(
                f"problem '{self.name}' does not provide: {', '.join(missing)}")

    def check_point(self, x, y) -> tuple[Array, Array]:
        return (as_vector(x, dim=self.n, name="x"),
                as_vector(y, dim=self.m, name="y"))


# ---------------------------------------------------------------------------
# counter-example: quartic UL over a lower level whose solution set is a
# whole affine subspace (the free half of the LL variable never appears in f)
# ---------------------------------------------------------------------------

def make_counterexample(n: int, x_radius: float = 100.0,
                        y_radius: float = 3.0) -> BilevelProblem:
    """Coupled quartic/quadratic problem with a non-singleton LL solution set.

    The LL variable is the concatenation ``w = (y, z)`` of dimension ``2n``;
    the LL objective ignores ``z`` entirely, so S(x) = {(x, z) : z free}.
    Global optimum: x = y = z = all-ones, with UL value 0.

    ``y_radius`` bounds the LL box.  It is chosen well outside the iterates of
    standard runs (which live within about the unit cube) yet finite, so that
    diameter-based rate constants stay meaningful.
    """
    if n < 1:
        raise ContractError("make_counterexample: n must be >= 1")
    e = np.ones(n)

    def split(w):
        return w[:n], w[n:]

    def F(x, w):
        y, z = split(w)
        return float(np.dot(x - z, x - z) ** 2 + np.dot(y - e, y - e) ** 2)

    def f(x, w):
        y, _ = split(w)
        return float(0.5 * np.dot(y, y) - np.dot(x, y))

    def grad_x_F(x, w):
        _, z = split(w)
        return 4.0 * np.dot(x - z, x - z) * (x - z)

    def grad_y_F(x, w):
        y, z = split(w)
        gy = 4.0 * np.dot(y - e, y - e) * (y - e)
        gz = 4.0 * np.dot(x - z, x - z) * (z - x)
        return np.concatenate([gy, gz])

    def grad_y_f(x, w):
        y, _ = split(w)
        return np.concatenate([y - x, np.zeros(n)])

    def grad_x_f(x, w):
        y, _ = split(w)
        return -y

    def hess_yy_F(x, w):
        y, z = split(w)
        dy = y - e
        dz = z - x
        top = 4.0 * (np.dot(dy, dy) * np.eye(n) + 2.0 * np.outer(dy, dy))
        bot = 4.0 * (np.dot(dz, dz) * np.eye(n) + 2.0 * np.outer(dz, dz))
        out = np.zeros((2 * n, 2 * n))
        out[:n, :n] = top
        out[n:, n:] = bot
        return out

    def hess_yx_F(x, w):
        _, z = split(w)
        d = x - z
        out = np.zeros((2 * n, n))
        out[n:, :] = -8.0 * np.outer(d, d) - 4.0 * np.dot(d, d) * np.eye(n)
        return out

    def hess_yy_f(x, w):
        out = np.zeros((2 * n, 2 * n))
        out[:n, :n] = np.eye(n)
        return out

    def hess_yx_f(x, w):
        out = np.zeros((2 * n, n))
        out[:n, :] = -np.eye(n)
        return out

    def y_star_of_x(x):
        # the UL-optimal member of S(x): y = x with the free half set to x
        x = as_vector(x, dim=n, name="x")
        return np.concatenate([x, x])

    def f_star_of_x(x):
        x = as_vector(x, dim=n, name="x")
        return float(-0.5 * np.dot(x, x))

    def phi_star_of_x(x):
        x = as_vector(x, dim=n, name="x")
        return float(np.dot(x - e, x - e) ** 2)

    def grad_phi_of_x(x):
        x = as_vector(x, dim=n, name="x")
        return 4.0 * np.dot(x - e, x - e) * (x - e)

    return BilevelProblem(
        name="counterexample", n=n, m=2 * n,
        region_x=BoxRegion.cube(n, -x_radius, x_radius),
        region_y=BoxRegion.cube(2 * n, -y_radius, y_radius),
        F=F, f=f,
        grad_x_F=grad_x_F, grad_y_F=grad_y_F, grad_y_f=grad_y_f,
        grad_x_f=grad_x_f,
        hess_yy_f=hess_yy_f, hess_yx_f=hess_yx_f,
        hess_yy_F=hess_yy_F, hess_yx_F=hess_yx_F,
        L_F=None,  # quartic UL: no global Lipschitz gradient constant
        L_f=1.0, sigma=None, F_lower_bound=0.0,
        y_star_of_x=y_star_of_x, f_star_of_x=f_star_of_x,
        phi_star_of_x=phi_star_of_x, grad_phi_of_x=grad_phi_of_x,
        x_opt=e.copy(), y_opt=np.concatenate([e, e]),
    )


# ---------------------------------------------------------------------------
# scalar-UL problem whose LL is strongly convex in one coordinate only;
# plain LL descent leaves the second coordinate untouched, which caps the
# reachable UL point at 1/2 although the true optimum sits at 1
# ---------------------------------------------------------------------------

def make_remark1() -> BilevelProblem:
    """Two-dimensional LL with a flat direction that plain descent never moves."""

    def F(x, y):
        return float(0.5 * (x[0] - y[1]) ** 2 + 0.5 * (y[0] - 1.0) ** 2)

    def f(x, y):
        return float(0.5 * y[0] ** 2 - x[0] * y[0])

    def grad_x_F(x, y):
        return np.array([x[0] - y[1]])

    def grad_y_F(x, y):
        return np.array([y[0] - 1.0, y[1] - x[0]])

    def grad_y_f(x, y):
        return np.array([y[0] - x[0], 0.0])

    def grad_x_f(x, y):
        return np.array([-y[0]])

    def hess_yy_F(x, y):
        return np.eye(2)

    def hess_yx_F(x, y):
        return np.array([[0.0], [-1.0]])

    def hess_yy_f(x, y):
        return np.array([[1.0, 0.0], [0.0, 0.0]])

    def hess_yx_f(x, y):
        return np.array([[-1.0], [0.0]])

    def y_star_of_x(x):
        # UL-optimal member of S(x) = {(x, t) : t free}
        return np.array([x[0], x[0]])

    def f_star_of_x(x):
        return float(-0.5 * x[0] ** 2)

    def phi_star_of_x(x):
        return float(0.5 * (x[0] - 1.0) ** 2)

    def grad_phi_of_x(x):
        return np.array([x[0] - 1.0])

    return BilevelProblem(
        name="remark1", n=1, m=2,
        region_x=BoxRegion.cube(1, -100.0, 100.0),
        region_y=BoxRegion.whole_space(2),
        F=F, f=f,
        grad_x_F=grad_x_F, grad_y_F=grad_y_F, grad_y_f=grad_y_f,
        grad_x_f=grad_x_f,
        hess_yy_f=hess_yy_f, hess_yx_f=hess_yx_f,
        hess_yy_F=hess_yy_F, hess_yx_F=hess_yx_F,
        L_F=1.0, L_f=1.0, sigma=None, F_lower_bound=0.0,
        y_star_of_x=y_star_of_x, f_star_of_x=f_star_of_x,
        phi_star_of_x=phi_star_of_x, grad_phi_of_x=grad_phi_of_x,
        x_opt=np.array([1.0]), y_opt=np.array([1.0, 1.0]),
    )


def remark1_plain_descent_limit(s_l: float, K: int) -> tuple[float, float]:
    """Closed forms for the flat-direction problem under K plain LL steps:
    the contraction product a_K and the resulting best reachable UL point
    a_K / (1 + a_K**2)."""
    if not (0.0 < s_l < 1.0):
        raise ContractError("s_l must lie in (0, 1)")
    a = 1.0 - (1.0 - s_l) ** K
    return a, a / (1.0 + a * a)


def make_remark1_regularized(epsilon: float) -> BilevelProblem:
    """Variant with a small quadratic term on the flat LL coordinate.

    The regularized LL is strongly convex, but the bi-level optimum moves to
    x = 1/2, y = (1/2, 0) for every epsilon > 0: regularizing the flat
    direction does not restore the true solution even as epsilon vanishes.
    """
    if epsilon <= 0:
        raise ContractError("epsilon must be positive")
    base = make_remark1()

    def f(x, y):
        return float(0.5 * y[0] ** 2 + 0.5 * epsilon * y[1] ** 2 - x[0] * y[0])

    def grad_y_f(x, y):
        return np.array([y[0] - x[0], epsilon * y[1]])

    def grad_x_f(x, y):
        return np.array([-y[0]])

    def hess_yy_f(x, y):
        return np.array([[1.0, 0.0], [0.0, epsilon]])

    def hess_yx_f(x, y):
        return np.array([[-1.0], [0.0]])

    def y_star_of_x(x):
        return np.array([x[0], 0.0])

    def f_star_of_x(x):
        return float(-0.5 * x[0] ** 2)

    def phi_star_of_x(x):
        return float(0.5 * x[0] ** 2 + 0.5 * (x[0] - 1.0) ** 2)

    def grad_phi_of_x(x):
        return np.array([2.0 * x[0] - 1.0])

    return BilevelProblem(
        name=f"remark1_regularized(eps={epsilon:g})", n=1, m=2,
        region_x=base.region_x, region_y=base.region_y,
        F=base.F, f=f,
        grad_x_F=base.grad_x_F, grad_y_F=base.grad_y_F, grad_y_f=grad_y_f,
        grad_x_f=grad_x_f,
        hess_yy_f=hess_yy_f, hess_yx_f=hess_yx_f,
        hess_yy_F=base.hess_yy_F, hess_yx_F=base.hess_yx_F,
        L_F=1.0, L_f=1.0, sigma=epsilon, F_lower_bound=0.0,
        y_star_of_x=y_star_of_x, f_star_of_x=f_star_of_x,
        phi_star_of_x=phi_star_of_x, grad_phi_of_x=grad_phi_of_x,
        x_opt=np.array([0.5]), y_opt=np.array([0.5, 0.0]),
    )


# ---------------------------------------------------------------------------
# strongly convex quadratic LL fixture: everything about it is closed-form,
# which makes it the workhorse for hypergradient cross-validation
# ---------------------------------------------------------------------------

def lls_quadratic(A, B, b, rho: float = 0.0,
                  x_radius: float = 2.0, y_radius: float | None = None,
                  name: str = "lls_quadratic") -> BilevelProblem:
    """f(x,y) = y'Ay/2 - (Bx)'y with A symmetric positive definite;
    F(x,y) = ||y - b||^2/2 + rho ||x||^2/2.  y*(x) = A^{-1}Bx exactly."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 0:
        B = B.reshape(1, 1)
    elif B.ndim == 1:
        B = B.reshape(-1, 1)
    b = np.atleast_1d(np.asarray(b, dtype=float))
    m, n = B.shape
    if A.shape != (m, m) or b.shape != (m,):
        raise ContractError("lls_quadratic: inconsistent A/B/b shapes")
    if not np.allclose(A, A.T):
        raise ContractError("lls_quadratic: A must be symmetric")
    eigvals = np.linalg.eigvalsh(A)
    if eigvals[0] <= 0:
        raise ContractError("lls_quadratic: A must be positive definite")
    sigma = float(eigvals[0])
    L_f = float(eigvals[-1])
    M = np.linalg.solve(A, B)  # dy*/dx
    # global x minimizer of phi(x) = ||Mx - b||^2/2 + rho ||x||^2/2
    x_opt = np.linalg.solve(M.T @ M + rho * np.eye(n), M.T @ b)

    def F(x, y):
        return float(0.5 * np.dot(y - b, y - b) + 0.5 * rho * np.dot(x, x))

    def f(x, y):
        return float(0.5 * np.dot(y, A @ y) - np.dot(B @ x, y))

    def grad_x_F(x, y):
        return rho * x

    def grad_y_F(x, y):
        return y - b

    def grad_y_f(x, y):
        return A @ y - B @ x

    def grad_x_f(x, y):
        return -(B.T @ y)

    def hess_yy_F(x, y):
        return np.eye(m)

    def hess_yx_F(x, y):
        return np.zeros((m, n))

    def hess_yy_f(x, y):
        return A.copy()

    def hess_yx_f(x, y):
        return -B.copy()

    def y_star_of_x(x):
        return M @ as_vector(x, dim=n, name="x")

    def f_star_of_x(x):
        x = as_vector(x, dim=n, name="x")
        return float(-0.5 * np.dot(B @ x, M @ x))

    def phi_star_of_x(x):
        x = as_vector(x, dim=n, name="x")
        r = M @ x - b
        return float(0.5 * np.dot(r, r) + 0.5 * rho * np.dot(x, x))

    def grad_phi_of_x(x):
        x = as_vector(x, dim=n, name="x")
        return rho * x + M.T @ (M @ x - b)

    region_y = (BoxRegion.whole_space(m) if y_radius is None
                else BoxRegion.cube(m, -y_radius, y_radius))
    return BilevelProblem(
        name=name, n=n, m=m,
        region_x=BoxRegion.cube(n, -x_radius, x_radius),
        region_y=region_y,
        F=F, f=f,
        grad_x_F=grad_x_F, grad_y_F=grad_y_F, grad_y_f=grad_y_f,
        grad_x_f=grad_x_f,
        hess_yy_f=hess_yy_f, hess_yx_f=hess_yx_f,
        hess_yy_F=hess_yy_F, hess_yx_F=hess_yx_F,
        L_F=1.0, L_f=L_f, sigma=sigma, F_lower_bound=0.0,
        y_star_of_x=y_star_of_x, f_star_of_x=f_star_of_x,
        phi_star_of_x=phi_star_of_x, grad_phi_of_x=grad_phi_of_x,
        x_opt=x_opt, y_opt=M @ x_opt,
        metadata={"A": A, "B": B, "b": b, "rho": rho, "dy_star_dx": M},
    )


def make_lls_quadratic(n: int, m: int, seed: int) -> BilevelProblem:
    """Random well-conditioned instance of :func:`lls_quadratic`."""
    if n < 1 or m < 1:
        raise ContractError("make_lls_quadratic: n, m must be >= 1")
    rng = rng_stream(seed)
    Q = rng.standard_normal((m, m))
    A = Q @ Q.T / m + 0.5 * np.eye(m)
    B = rng.standard_normal((m, n)) / np.sqrt(m)
    b = rng.standard_normal(m)
    return lls_quadratic(A, B, b, rho=0.1,
                         name=f"lls_quadratic(n={n},m={m},seed={seed})")


# ---------------------------------------------------------------------------
# toy data hyper-cleaning: per-sample training weights (through a sigmoid)
# are the UL variable, a linear softmax classifier is the LL variable
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HypercleanConfig:
    num_classes: int = 3
    feature_dim: int = 2
    n_train: int = 30
    n_val: int = 30
    n_test: int = 30
    corruption_fraction: float = 0.5
    seed: int = 0
    ul_ridge: float = 0.0      # optional ridge on the sample weights in F

    def __post_init__(self):
        if self.n_train <= 0 or self.n_val <= 0 or self.n_test <= 0:
            raise ContractError("hyperclean: split sizes must be positive")
        if not (0.0 <= self.corruption_fraction < 1.0):
            raise ContractError("hyperclean: corruption_fraction must be in [0, 1)")
        if self.num_classes < 2 or self.feature_dim < 1:
            raise ContractError("hyperclean: need >= 2 classes and >= 1 feature")
        if self.ul_ridge < 0:
            raise ContractError("hyperclean: ul_ridge must be >= 0")


def _sigmoid(t):
    out = np.empty_like(t, dtype=float)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    ez = np.exp(t[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


class _SoftmaxData:
    """Pre-augmented features and one-hot labels for one split."""

    def __init__(self, features: Array, labels: Array, num_classes: int):
        self.features = features
        self.labels = labels.astype(int)
        count = features.shape[0]
        self.aug = np.hstack([features, np.ones((count, 1))])  # bias column
        self.onehot = np.zeros((count, num_classes))
        self.onehot[np.arange(count), self.labels] = 1.0
        self.num_classes = num_classes

    def logits(self, theta: Array) -> Array:
        return self.aug @ theta.T

    def probs(self, theta: Array) -> Array:
        return _softmax(self.logits(theta))

    def losses(self, theta: Array) -> Array:
        z = self.logits(theta)
        z = z - z.max(axis=1, keepdims=True)
        logsumexp = np.log(np.exp(z).sum(axis=1))
        picked = z[np.arange(z.shape[0]), self.labels]
        return logsumexp - picked

    def grads(self, theta: Array) -> Array:
        # per-sample gradient of the cross-entropy, flattened C*(d+1)
        resid = self.probs(theta) - self.onehot          # (N, C)
        return np.einsum("ic,ij->icj", resid, self.aug)  # (N, C, d+1)


def make_hypercleaning(cfg: HypercleanConfig) -> BilevelProblem:
    """Synthetic hyper-cleaning instance on Gaussian class blobs.

    LL: weighted softmax cross-entropy over the training split, weight of
    sample i being sigmoid(x_i).  UL: cross-entropy over the validation
    split, plus an optional ridge ul_ridge/2 * |x|^2 (zero by default).
    A ``corruption_fraction`` of training labels is reassigned to wrong
    classes; the true labels and corrupted indices are kept in ``metadata``
    for scoring.
    """
    rng = rng_stream(cfg.seed)
    C, d = cfg.num_classes, cfg.feature_dim
    means = 3.0 * rng.standard_normal((C, d))
    total = cfg.n_train + cfg.n_val + cfg.n_test
    labels = rng.integers(0, C, size=total)
    for split_lo, split_hi in ((0, cfg.n_train),
                               (cfg.n_train, cfg.n_train + cfg.n_val),
                               (cfg.n_train + cfg.n_val, total)):
        present = np.unique(labels[split_lo:split_hi])
        if present.size < C:
            raise ContractError(
                "hyperclean: a class has zero samples in one split; "
                "use a different seed or larger splits")
    features = means[labels] + rng.standard_normal((total, d))

    tr = slice(0, cfg.n_train)
    va = slice(cfg.n_train, cfg.n_train + cfg.n_val)
    te = slice(cfg.n_train + cfg.n_val, total)
    true_train_labels = labels[tr].copy()
    train_labels = labels[tr].copy()
    n_corrupt = int(round(cfg.corruption_fraction * cfg.n_train))
    corrupt_idx = rng.choice(cfg.n_train, size=n_corrupt, replace=False)
    for i in corrupt_idx:
        wrong = [c for c in range(C) if c != train_labels[i]]
        train_labels[i] = wrong[rng.integers(0, C - 1)]
    corrupted_mask = np.zeros(cfg.n_train, dtype=bool)
    corrupted_mask[corrupt_idx] = True

    train = _SoftmaxData(features[tr], train_labels, C)
    val = _SoftmaxData(features[va], labels[va], C)
    test = _SoftmaxData(features[te], labels[te], C)

    n = cfg.n_train
    m = C * (d + 1)

    def unpack(y):
        return y.reshape(C, d + 1)

    ridge = cfg.ul_ridge

    def F(x, y):
        out = float(val.losses(unpack(y)).sum())
        if ridge:
            out += 0.5 * ridge * float(np.dot(x, x))
        return out

    def f(x, y):
        w = _sigmoid(x)
        return float(np.dot(w, train.losses(unpack(y))))

    def grad_x_F(x, y):
        return ridge * np.asarray(x, dtype=float) if ridge else np.zeros(n)

    def grad_y_F(x, y):
        return val.grads(unpack(y)).sum(axis=0).ravel()

    def grad_y_f(x, y):
        w = _sigmoid(x)
        return np.einsum("i,icj->cj", w, train.grads(unpack(y))).ravel()

    def grad_x_f(x, y):
        w = _sigmoid(x)
        return w * (1.0 - w) * train.losses(unpack(y))

    def _hess_blocks(data: _SoftmaxData, theta: Array, weights: Array) -> Array:
        p = data.probs(theta)                            # (N, C)
        # sum_i w_i (diag(p_i) - p_i p_i') kron (u_i u_i')
        diag = np.einsum("i,ic,ij,ik->cjk", weights, p, data.aug, data.aug)
        cross = np.einsum("i,ic,ie,ij,ik->cjek", weights, p, p,
                          data.aug, data.aug)
        h = -cross
        idx = np.arange(data.num_classes)
        h[idx, :, idx, :] += diag
        m_ = theta.size
        return h.reshape(m_, m_)

    def hess_yy_F(x, y):
        theta = unpack(y)
        return _hess_blocks(val, theta, np.ones(val.labels.shape[0]))

    def hess_yx_F(x, y):
        return np.zeros((m, n))

    def hess_yy_f(x, y):
        return _hess_blocks(train, unpack(y), _sigmoid(x))

    def hess_yx_f(x, y):
        w = _sigmoid(x)
        g = train.grads(unpack(y)).reshape(n, m)
        return (w * (1.0 - w) * g.T)  # (m, n)

    # global smoothness bounds: each per-sample Hessian is bounded by
    # |u_i|^2 / 2 in spectral norm and the sigmoid weights sit in (0, 1)
    train_row_sq = (train.aug ** 2).sum(axis=1)
    val_row_sq = (val.aug ** 2).sum(axis=1)
    L_f = float(0.5 * train_row_sq.sum())
    L_F = float(0.5 * val_row_sq.sum())

    return BilevelProblem(
        name="hyperclean", n=n, m=m,
        region_x=BoxRegion.whole_space(n),
        region_y=BoxRegion.cube(m, -100.0, 100.0),
        F=F, f=f,
        grad_x_F=grad_x_F, grad_y_F=grad_y_F, grad_y_f=grad_y_f,
        grad_x_f=grad_x_f,
        hess_yy_f=hess_yy_f, hess_yx_f=hess_yx_f,
        hess_yy_F=hess_yy_F, hess_yx_F=hess_yx_F,
        L_F=L_F, L_f=L_f, sigma=None, F_lower_bound=0.0,
        metadata={
            "config": cfg,
            "train": train, "val": val, "test": test,
            "corrupted_mask": corrupted_mask,
            "true_train_labels": true_train_labels,
        },
    )


def hyperclean_dataset_rows(problem: BilevelProblem):
    """Rows (split, index, label, corrupted_flag, feature_0..feature_{d-1})
    for the optional CSV dump."""
    md = problem.metadata
    rows = []
    for split_name, data in (("train", md["train"]), ("val", md["val"]),
                             ("test", md["test"])):
        mask = md["corrupted_mask"] if split_name == "train" else None
        for i in range(data.features.shape[0]):
            flag = int(mask[i]) if mask is not None else 0
            rows.append((split_name, i, int(data.labels[i]), flag,
                         *data.features[i].tolist()))
    return rows


_FACTORIES = {
    "counterexample": make_counterexample,
    "remark1": make_remark1,
    "lls_quadratic": make_lls_quadratic,
    "hyperclean": lambda **kw: make_hypercleaning(HypercleanConfig(**kw)),
}


def make_problem(name: str, **params) -> BilevelProblem:
    """Factory lookup used by the CLI config loader."""
    if name not in _FACTORIES:
        raise ContractError(f"unknown problem '{name}'; "
                            f"available: {sorted(_FACTORIES)}")
    try:
        return _FACTORIES[name](**params)
    except TypeError as err:
        raise ContractError(f"bad parameters for problem '{name}': {err}") from err
