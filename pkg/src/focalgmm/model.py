"""Panel data, network transforms and moment assembly.

Each equation ``j`` is a linear regression ``y_j = x_j' B_j beta_j + eps_j``
where the observable matrix ``B_j`` maps a (sparse) structural parameter to
regression coefficients.  Structural parameters can be shared between
equations (a common network effect, common covariate slopes), so every local
column of ``B_j`` carries the index of the global coordinate it loads on.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError, as_matrix, as_vector

__all__ = [
    "StructuralError",
    "PanelData",
    "NetworkSpec",
    "TransformSpec",
    "LinearMomentSystem",
    "QuadraticMomentSet",
    "single_equation_transform",
    "build_spillover_transform",
    "build_spatial_transform",
    "build_lagged_transform",
    "spatial_panel",
    "lagged_panel",
    "assemble_linear_moments",
    "evaluate_scores",
    "gradient_contribution_std",
    "evaluate_quadratic_moments",
]


class StructuralError(ValidationError):
    """The network cannot support the requested transform."""


@dataclass
class PanelData:
    """Balanced panel: ``y[:, j]`` with covariates ``x[j]`` and instruments ``z[j]``."""

    y: np.ndarray
    x: list
    z: list
    labels: list = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        self.y = as_matrix(y, "y")
        n, p = self.y.shape
        if n < 1:
            raise ValidationError("the panel has no time points")
        if len(self.x) != p or len(self.z) != p:
            raise ValidationError(
                f"expected {p} covariate and instrument blocks, got {len(self.x)} and {len(self.z)}")
        self.x = [as_matrix(np.asarray(a, dtype=float).reshape(n, -1), f"x[{j}]")
                  for j, a in enumerate(self.x)]
        self.z = [as_matrix(np.asarray(a, dtype=float).reshape(n, -1), f"z[{j}]")
                  for j, a in enumerate(self.z)]
        if self.labels is None:
            self.labels = [str(j) for j in range(p)]
        elif len(self.labels) != p:
            raise ValidationError(f"{len(self.labels)} labels for {p} equations")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.y.shape[1]

    @property
    def q_sizes(self) -> list[int]:
        return [zj.shape[1] for zj in self.z]

    @property
    def q(self) -> int:
        return int(sum(self.q_sizes))

    def take(self, rows) -> "PanelData":
        rows = np.asarray(rows)
        return PanelData(self.y[rows], [a[rows] for a in self.x], [a[rows] for a in self.z],
                         list(self.labels))


@dataclass
class NetworkSpec:
    """Pre-specified adjacency ``W`` plus the anchor entry known to carry no deviation.

    When ``anchor`` is omitted the lexicographically smallest off-diagonal
    nonzero entry is used.
    """

    W: np.ndarray
    anchor: tuple = None
    zero_diag: bool = True

    def __post_init__(self):
        W = as_matrix(self.W, "W")
        if W.shape[0] != W.shape[1]:
            raise ValidationError(f"W must be square, got {W.shape}")
        if W.shape[0] < 2:
            raise ValidationError("network needs p >= 2")
        if self.zero_diag and np.any(np.diag(W) != 0):
            raise ValidationError("W has nonzero diagonal but zero_diag is set")
        self.W = W
        if self.anchor is None:
            off = W.copy()
            np.fill_diagonal(off, 0.0)
            nz = np.argwhere(off != 0)
            if nz.size:
                self.anchor = (int(nz[0, 0]), int(nz[0, 1]))
        else:
            j, k = (int(v) for v in self.anchor)
            p = W.shape[0]
            if not (0 <= j < p and 0 <= k < p) or j == k:
                raise StructuralError(f"anchor {self.anchor} is not an off-diagonal entry")
            if W[j, k] == 0:
                raise StructuralError(f"anchor entry W[{j},{k}] is zero")
            self.anchor = (j, k)

    @property
    def p(self) -> int:
        return self.W.shape[0]

    def require_anchor(self) -> tuple:
        if self.anchor is None:
            raise StructuralError("W has no nonzero off-diagonal entry to anchor on")
        return self.anchor


@dataclass
class TransformSpec:
    """Per-equation transforms ``B_j`` and the global parameter layout.

    ``columns[j][c]`` is the global coordinate that local column ``c`` of
    ``blocks[j]`` loads on; shared coordinates appear in several equations.
    """

    blocks: list
    columns: list
    names: list
    theta1: np.ndarray
    needs_instrument: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.blocks = [np.atleast_2d(np.asarray(B, dtype=float)) for B in self.blocks]
        self.columns = [np.asarray(c, dtype=int) for c in self.columns]
        K = len(self.names)
        for j, (B, cols) in enumerate(zip(self.blocks, self.columns)):
            if B.shape[1] != cols.size:
                raise ValidationError(f"B_{j} has {B.shape[1]} columns but {cols.size} indices")
            if cols.size and (cols.min() < 0 or cols.max() >= K):
                raise ValidationError(f"equation {j} references coordinates outside 0..{K - 1}")
        self.theta1 = np.unique(np.asarray(self.theta1, dtype=int))
        if self.theta1.size and (self.theta1.min() < 0 or self.theta1.max() >= K):
            raise ValidationError("theta1 indices out of range")
        if self.needs_instrument is None:
            self.needs_instrument = np.zeros(K, dtype=bool)
        self.needs_instrument = np.asarray(self.needs_instrument, dtype=bool)

    @property
    def K(self) -> int:
        return len(self.names)

    @property
    def p(self) -> int:
        return len(self.blocks)

    @property
    def theta2(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.K), self.theta1)

    def with_theta1(self, theta1) -> "TransformSpec":
        return TransformSpec(self.blocks, self.columns, list(self.names), theta1,
                             self.needs_instrument.copy(), dict(self.meta))

    def coefficients(self, theta) -> list:
        """Regression coefficients ``b_j = B_j beta_j`` for every equation."""
        theta = np.asarray(theta, dtype=float)
        return [B @ theta[cols] for B, cols in zip(self.blocks, self.columns)]

    def stacked(self) -> np.ndarray:
        """Block matrix mapping the global parameter to all stacked coefficients."""
        rows = sum(B.shape[0] for B in self.blocks)
        out = np.zeros((rows, self.K))
        r = 0
        for B, cols in zip(self.blocks, self.columns):
            out[r:r + B.shape[0], cols] += B
            r += B.shape[0]
        return out

    def layout(self) -> dict:
        return {"names": list(self.names), "theta1": self.theta1.tolist(),
                "theta2": self.theta2.tolist()}


def _delta_name(j: int, k: int) -> str:
    return f"delta[{j},{k}]"


def single_equation_transform(w, anchor: int = None, n_exog: int = 0) -> TransformSpec:
    """``B = (w, I_{-anchor})`` for one equation, coordinates ``(rho, delta_{-anchor})``."""
    w = as_vector(w, "w")
    p = w.size
    if p < 2:
        raise ValidationError("need at least two covariates")
    if anchor is None:
        nz = np.flatnonzero(w)
        if nz.size == 0:
            raise StructuralError("w has no nonzero entry to anchor on")
        anchor = int(nz[0])
    if w[anchor] == 0:
        raise StructuralError(f"anchor entry w[{anchor}] is zero")
    keep = [k for k in range(p) if k != anchor]
    B = np.zeros((p + n_exog, p + n_exog))
    B[:p, 0] = w
    B[keep, np.arange(1, p)] = 1.0
    B[p:, p:] = np.eye(n_exog)
    names = ["rho"] + [f"delta[{k}]" for k in keep] + [f"gamma[{l}]" for l in range(n_exog)]
    delta_index = np.full(p, -1)
    delta_index[keep] = np.arange(1, p)
    return TransformSpec([B], [np.arange(p + n_exog)], names, theta1=np.arange(p),
                         meta={"kind": "single", "w": w.tolist(), "anchor": anchor, "n_exog": n_exog,
                               "delta_index": delta_index.tolist(), "rho_index": 0})


def build_spillover_transform(network: NetworkSpec, p: int = None, n_exog: int = 0) -> TransformSpec:
    """Spillover system: each equation regresses on the common ``x_t``.

    Equation ``j`` uses ``B_j = (w_j, I_{p,-kbar_j})``; ``rho`` and the
    optional exogenous slopes are shared.  The anchor column ``kbar_j`` is
    the network anchor for its row and the first nonzero of ``w_j``
    otherwise.  Rows with ``w_j = 0`` carry no ``rho`` column.
    """
    W = network.W
    if p is None:
        p = network.p
    if p < 2 or W.shape[0] != p:
        raise ValidationError(f"network is {W.shape[0]}x{W.shape[0]}, expected p={p} >= 2")
    aj, ak = network.require_anchor()
    names = ["rho"]
    delta_index = np.full((p, p), -1)
    for j in range(p):
        nz = np.flatnonzero(W[j])
        kbar = ak if j == aj else (int(nz[0]) if nz.size else -1)
        for k in range(p):
            if k != kbar:
                delta_index[j, k] = len(names)
                names.append(_delta_name(j, k))
    gamma0 = len(names)
    names += [f"gamma[{l}]" for l in range(n_exog)]
    blocks, columns = [], []
    for j in range(p):
        has_rho = np.any(W[j] != 0)
        keep = np.flatnonzero(delta_index[j] >= 0)
        ncol = int(has_rho) + keep.size + n_exog
        B = np.zeros((p + n_exog, ncol))
        cols = []
        c = 0
        if has_rho:
            B[:p, 0] = W[j]
            cols.append(0)
            c = 1
        B[keep, c + np.arange(keep.size)] = 1.0
        cols += delta_index[j, keep].tolist()
        c += keep.size
        B[p:, c:] = np.eye(n_exog)
        cols += list(range(gamma0, gamma0 + n_exog))
        blocks.append(B)
        columns.append(np.asarray(cols))
    theta1 = np.flatnonzero([nm.startswith("delta") for nm in names])
    return TransformSpec(blocks, columns, names, theta1,
                         meta={"kind": "spillover", "W": W.tolist(), "anchor": [aj, ak],
                               "delta_index": delta_index.tolist(), "rho_index": 0,
                               "gamma_start": gamma0, "n_exog": n_exog})


def build_spatial_transform(network: NetworkSpec, n_exog: int = 0,
                            exclude_self: bool = False) -> TransformSpec:
    """Spatial autoregression ``y_t = rho W y_t + Delta y_t + Gamma X_t + eps_t``.

    Raw covariates of equation ``j`` are ``(y_t, X_{j,t})``.  Coordinates are
    ordered ``delta_1, ..., delta_p, rho, gamma`` with the anchor deviation
    removed; ``exclude_self`` additionally drops every ``delta_{j,j}``.
    All deviation coordinates and ``rho`` load on contemporaneous outcomes
    and are flagged as needing instruments.
    """
    W = network.W
    p = network.p
    aj, ak = network.require_anchor()
    names = []
    delta_index = np.full((p, p), -1)
    for j in range(p):
        for k in range(p):
            if (j, k) == (aj, ak) or (exclude_self and j == k):
                continue
            delta_index[j, k] = len(names)
            names.append(_delta_name(j, k))
    rho = len(names)
    names.append("rho")
    gamma0 = len(names)
    names += [f"gamma[{l}]" for l in range(n_exog)]
    blocks, columns = [], []
    for j in range(p):
        keep = np.flatnonzero(delta_index[j] >= 0)
        B = np.zeros((p + n_exog, keep.size + 1 + n_exog))
        B[keep, np.arange(keep.size)] = 1.0
        B[:p, keep.size] = W[j]
        B[p:, keep.size + 1:] = np.eye(n_exog)
        blocks.append(B)
        columns.append(np.r_[delta_index[j, keep], rho, gamma0 + np.arange(n_exog)])
    needs = np.zeros(len(names), dtype=bool)
    needs[: rho + 1] = True
    theta1 = np.arange(rho)
    return TransformSpec(blocks, columns, names, theta1, needs,
                         meta={"kind": "spatial", "W": W.tolist(), "anchor": [aj, ak],
                               "delta_index": delta_index.tolist(), "rho_index": rho,
                               "gamma_start": gamma0, "n_exog": n_exog,
                               "exclude_self": bool(exclude_self)})


def build_lagged_transform(network: NetworkSpec) -> TransformSpec:
    """Lagged network regression with ``B_j = (w_j, I_{p,-j})`` on ``y_{t-1}``.

    Each equation has its own ``rho_j``; the own-lag deviation is the anchor,
    so every ``w_{j,j}`` must be nonzero.
    """
    W = network.W
    p = network.p
    if np.any(np.diag(W) == 0):
        bad = int(np.flatnonzero(np.diag(W) == 0)[0])
        raise StructuralError(f"lagged transform needs w[{bad},{bad}] != 0")
    names, blocks, columns = [], [], []
    delta_index = np.full((p, p), -1)
    rho_index = []
    for j in range(p):
        keep = [k for k in range(p) if k != j]
        B = np.zeros((p, p))
        B[:, 0] = W[j]
        B[keep, np.arange(1, p)] = 1.0
        start = len(names)
        rho_index.append(start)
        names.append(f"rho[{j}]")
        for k in keep:
            delta_index[j, k] = len(names)
            names.append(_delta_name(j, k))
        blocks.append(B)
        columns.append(np.arange(start, start + p))
    theta1 = np.flatnonzero([nm.startswith("delta") for nm in names])
    return TransformSpec(blocks, columns, names, theta1,
                         meta={"kind": "lagged", "W": W.tolist(),
                               "delta_index": delta_index.tolist(), "rho_index": rho_index})


def spatial_panel(y, z, X=None, labels=None) -> PanelData:
    """Panel for the spatial model: equation ``j`` sees ``(y_t, X_{j,t})``."""
    y = np.asarray(y, dtype=float)
    p = y.shape[1]
    x = [y if X is None else np.hstack([y, np.asarray(X[j], dtype=float)]) for j in range(p)]
    return PanelData(y, x, list(z), labels)


def lagged_panel(y, z=None, labels=None) -> PanelData:
    """Panel for the lagged model on ``t = 2..n``; instruments default to ``y_{t-1}``."""
    y = np.asarray(y, dtype=float)
    p = y.shape[1]
    lag = y[:-1]
    if z is None:
        z = [lag] * p
    else:
        z = [np.asarray(zj, dtype=float)[1:] for zj in z]
    return PanelData(y[1:], [lag] * p, z, labels)


@dataclass
class LinearMomentSystem:
    """``g_hat(theta) = G_hat @ theta + g0_hat`` for stacked ``E_n[z_j (y_j - xt_j' beta_j)]``."""

    G_hat: np.ndarray
    g0_hat: np.ndarray
    row_slices: list
    data: PanelData = None
    spec: TransformSpec = None

    @property
    def q(self) -> int:
        return self.G_hat.shape[0]

    @property
    def K(self) -> int:
        return self.G_hat.shape[1]

    def moments(self, theta) -> np.ndarray:
        return self.G_hat @ np.asarray(theta, dtype=float) + self.g0_hat

    def scores(self, theta) -> np.ndarray:
        return evaluate_scores(self.data, self.spec, theta)


def _row_slices(data: PanelData) -> list:
    edges = np.r_[0, np.cumsum(data.q_sizes)]
    return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def _check_dims(data: PanelData, spec: TransformSpec):
    if spec.p != data.p:
        raise ValidationError(f"transform has {spec.p} equations, data has {data.p}")
    for j, (B, xj, zj) in enumerate(zip(spec.blocks, data.x, data.z)):
        if B.shape[0] != xj.shape[1]:
            raise ValidationError(
                f"equation {j}: B_j has {B.shape[0]} rows but x_j has {xj.shape[1]} columns")
        if zj.shape[1] < B.shape[1]:
            raise ValidationError(
                f"equation {j}: {zj.shape[1]} instruments for {B.shape[1]} parameters")


def assemble_linear_moments(data: PanelData, spec: TransformSpec) -> LinearMomentSystem:
    """Sample gradient and intercept of the stacked linear IV moments (1/n averages)."""
    _check_dims(data, spec)
    n = data.n
    slices = _row_slices(data)
    G = np.zeros((data.q, spec.K))
    g0 = np.zeros(data.q)
    for j, sl in enumerate(slices):
        zj = data.z[j]
        dead = np.flatnonzero(~np.any(zj != 0, axis=0))
        if dead.size:
            warnings.warn(f"equation {j}: instrument columns {dead.tolist()} are identically zero",
                          RuntimeWarning, stacklevel=2)
        xt = data.x[j] @ spec.blocks[j]
        G[sl, spec.columns[j]] += -(zj.T @ xt) / n
        g0[sl] = zj.T @ data.y[:, j] / n
    return LinearMomentSystem(G, g0, slices, data, spec)


def evaluate_scores(data: PanelData, spec: TransformSpec, theta) -> np.ndarray:
    """Per-period stacked scores ``z_{j,t} eps_{j,t}(theta)``, shape ``(n, q)``."""
    _check_dims(data, spec)
    theta = as_vector(theta, "theta")
    if theta.size != spec.K:
        raise ValidationError(f"theta has length {theta.size}, expected {spec.K}")
    out = np.empty((data.n, data.q))
    for j, (sl, b) in enumerate(zip(_row_slices(data), spec.coefficients(theta))):
        resid = data.y[:, j] - data.x[j] @ b
        out[:, sl] = data.z[j] * resid[:, None]
    return out


def gradient_contribution_std(data: PanelData, spec: TransformSpec) -> np.ndarray:
    """Entrywise standard deviation over ``t`` of ``-z_{j,t} xt_{j,t}'`` in the ``q x K`` layout."""
    n = data.n
    out = np.zeros((data.q, spec.K))
    for j, sl in enumerate(_row_slices(data)):
        zj = data.z[j]
        xt = data.x[j] @ spec.blocks[j]
        mean = zj.T @ xt / n
        second = (zj ** 2).T @ (xt ** 2) / n
        out[sl, spec.columns[j]] = np.sqrt(np.maximum(second - mean ** 2, 0.0))
    return out


@dataclass
class QuadraticMomentSet:
    pairs: list
    values: np.ndarray


def evaluate_quadratic_moments(data: PanelData, spec: TransformSpec, theta, pairs) -> QuadraticMomentSet:
    """Averages ``E_n[a_t g_{i,l,t} g_{j,m,t}]`` for ``(i, l, j, m, a)`` pairs.

    ``a`` is a scalar or a length-``n`` weight series.  ``(i, l)`` and
    ``(j, m)`` index equation and instrument.
    """
    scores = evaluate_scores(data, spec, theta)
    slices = _row_slices(data)
    values = np.empty(len(pairs))
    for r, (i, l, j, m, a) in enumerate(pairs):
        if i == j and l == m:
            raise ValidationError(f"pair {r} repeats the same score (i={i}, l={l})")
        for eq, ins in ((i, l), (j, m)):
            if not (0 <= eq < data.p) or not (0 <= ins < data.q_sizes[eq]):
                raise IndexError(f"pair {r}: score ({eq}, {ins}) out of range")
        a = np.broadcast_to(np.asarray(a, dtype=float), (data.n,))
        gi = scores[:, slices[i].start + l]
        gj = scores[:, slices[j].start + m]
        values[r] = np.mean(a * gi * gj)
    return QuadraticMomentSet(list(pairs), values)
