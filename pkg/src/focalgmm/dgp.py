"""Synthetic data-generating processes for the Monte Carlo study.

Every draw comes from a Philox stream keyed by ``(seed, rep, tag)`` so a
replication produces the same data no matter which worker runs it or in what
order.  Deviation coordinates are reported on the regression scale, i.e.
``delta = rho * (h - w)``, which is what the linear moments identify.
"""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import toeplitz

from ._validation import NumericalError, ValidationError
from .model import (NetworkSpec, PanelData, TransformSpec, build_spatial_transform,
                    build_spillover_transform, single_equation_transform)

__all__ = [
    "DgpConfig",
    "SimulatedData",
    "stream",
    "instrument_loading",
    "gen_single_eq_iid",
    "gen_single_eq_dependent",
    "gen_network",
    "simulate",
    "two_stage_least_squares",
]

KINDS = ("single_eq_iid", "single_eq_dependent", "net_yx", "net_yy")
DEFAULT_GAMMA = (1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.1, 0.1)


@dataclass
class DgpConfig:
    """Design of one Monte Carlo cell.

    ``p``, ``q`` and ``m`` are the covariate count, instrument count and
    exogenous-covariate count.  For the single-equation designs ``q = 2p``.
    ``n_targets`` is how many leading deviation coordinates are targets of
    inference, together with ``rho``; ``None`` means all of them.
    ``planted`` latent links (``w = 0``, ``h != 0``) are added to the network
    designs with deviation ``planted_strength``, by default ``10 / sqrt(n)``,
    ten times the standard error scale of a unit-variance error.
    ``noise`` scales the structural error; ``0`` gives exact-fit data.
    """

    dgp_kind: str = "single_eq_iid"
    n: int = 100
    p: int = 100
    q: int = 200
    m: int = 10
    rho: float = 0.7
    rho_z: float = 0.5
    kappa: float = 0.25
    P_misspec: float = 0.2
    tau: float = 1.0
    df: int = 8
    gamma: tuple = None
    lag_trunc: int = 1000
    link_prob: float = 0.5
    h_prob: float = 0.8
    n_targets: int = 50
    planted: int = 0
    planted_strength: float = None
    noise: float = 1.0
    seed: int = 0
    reps: int = 100

    def __post_init__(self):
        if self.dgp_kind not in KINDS:
            raise ValidationError(f"dgp_kind must be one of {KINDS}")
        if not abs(self.rho) < 1:
            raise ValidationError(f"|rho| must be < 1, got {self.rho}")
        if not 0 <= self.P_misspec <= 1:
            raise ValidationError("P_misspec must lie in [0, 1]")
        if self.df <= 4:
            raise ValidationError("df must exceed 4")
        if self.n < 2 or self.p < 1 or self.reps < 1:
            raise ValidationError("n >= 2, p >= 1 and reps >= 1 are required")
        if self.dgp_kind.startswith("single") and self.q != 2 * self.p:
            raise ValidationError(f"single-equation designs need q = 2p, got p={self.p}, q={self.q}")
        if not self.noise >= 0:
            raise ValidationError("noise must be non-negative")
        if self.planted < 0:
            raise ValidationError("planted must be non-negative")
        if self.planted and self.planted_strength is None:
            self.planted_strength = 10.0 / np.sqrt(self.n)
        if self.gamma is None:
            g = np.zeros(self.m)
            k = min(self.m, len(DEFAULT_GAMMA))
            g[:k] = DEFAULT_GAMMA[:k]
            self.gamma = tuple(float(v) for v in g)
        elif len(self.gamma) != self.m:
            raise ValidationError(f"gamma has length {len(self.gamma)}, expected m={self.m}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gamma"] = list(self.gamma)
        return d


@dataclass
class SimulatedData:
    data: PanelData
    spec: TransformSpec
    theta0: np.ndarray
    network: NetworkSpec = None
    extra: dict = field(default_factory=dict)

    @property
    def target_truth(self) -> np.ndarray:
        return self.theta0[self.spec.theta1]


def stream(seed: int, rep: int, tag: str) -> np.random.Generator:
    """Counter-based generator for ``(seed, rep, tag)``."""
    key = np.random.SeedSequence([int(seed), int(rep), zlib.crc32(tag.encode())])
    return np.random.Generator(np.random.Philox(key))


def instrument_loading(q: int, rho_z: float = 0.5) -> np.ndarray:
    """``(2 + 2 rho_z^{q/2})^{-1/2} (iota_2 kron I_{q/2})``, shape ``q x q/2``."""
    if q % 2:
        raise ValidationError(f"q must be even, got {q}")
    return np.kron(np.ones((2, 1)), np.eye(q // 2)) / np.sqrt(2 + 2 * rho_z ** (q // 2))


def _endogenous_block(Z, rho_z_pi, kappa, u1, rng):
    """``X = pi' Z + sqrt(kappa) u1 iota + sqrt(1-kappa) u3`` for ``Z`` of width ``2k``."""
    n, q = Z.shape
    k = q // 2
    v = np.sqrt(kappa) * u1[:, None] + np.sqrt(1 - kappa) * rng.standard_normal((n, k))
    return Z @ rho_z_pi + v


def _anchor_first(w, h):
    nz = np.flatnonzero(w)
    if nz.size == 0:
        # keep the design estimable: the first coordinate becomes a correct link
        w[0] = h[0] = 1.0
        return 0
    a = int(nz[0])
    h[a] = w[a]
    return a


def _single_equation(cfg: DgpConfig, Z: np.ndarray, rep: int, tag: str) -> SimulatedData:
    n, p = cfg.n, cfg.p
    rng_e = stream(cfg.seed, rep, tag + ":errors")
    rng_h = stream(cfg.seed, rep, tag + ":links")
    u1 = rng_e.standard_normal(n)
    u2 = rng_e.standard_normal(n)
    eps = cfg.noise * (np.sqrt(cfg.kappa) * u1 + np.sqrt(1 - cfg.kappa) * u2)
    X = _endogenous_block(Z, instrument_loading(cfg.q, cfg.rho_z), cfg.kappa, u1, rng_e)
    h = (rng_h.random(p) < cfg.h_prob).astype(float)
    flip = rng_h.random(p) < cfg.P_misspec
    w = np.where(flip, 1.0 - h, h)
    anchor = _anchor_first(w, h)
    y = cfg.rho * X @ h + eps
    spec = single_equation_transform(w, anchor)
    delta = cfg.rho * (h - w)
    keep = [k for k in range(p) if k != anchor]
    theta0 = np.r_[cfg.rho, delta[keep]]
    n_t = p if cfg.n_targets is None else min(cfg.n_targets, p)
    targets = [0] + [1 + i for i, k in enumerate(keep) if k < n_t]
    spec = spec.with_theta1(targets)
    data = PanelData(y, [X], [Z])
    return SimulatedData(data, spec, theta0,
                         extra={"w": w, "h": h, "eps": eps, "anchor": anchor})


def gen_single_eq_iid(cfg: DgpConfig, rep: int = 0) -> SimulatedData:
    """Single equation ``Y = rho h'X + eps`` with iid Gaussian instruments."""
    if cfg.q % 2:
        raise ValidationError(f"q must be even, got {cfg.q}")
    rng = stream(cfg.seed, rep, "single:instruments")
    Sigma = toeplitz(cfg.rho_z ** np.arange(cfg.q))
    L = np.linalg.cholesky(Sigma)
    Z = rng.standard_normal((cfg.n, cfg.q)) @ L.T
    return _single_equation(cfg, Z, rep, "single")


def _innovations(rng, shape, df):
    """``xi = e_t (0.8 e_{t-1}^2 + 0.2)^{1/2}`` with standardised t(df) ``e``; unit variance."""
    T, q = shape
    e = rng.standard_t(df, size=(T + 1, q)) / np.sqrt(df / (df - 2))
    return e[1:] * np.sqrt(0.8 * e[:-1] ** 2 + 0.2)


def dependent_instruments(n: int, q: int, tau: float, df: int, lag_trunc: int,
                          rng: np.random.Generator) -> np.ndarray:
    """``Z_t = sum_{l=0}^{L} (l+1)^{-tau-1} M_l xi_{t-l}`` with Ginibre ``M_l``.

    The first ``L`` innovations only feed the lags of ``t = 1``, which is the
    burn-in.
    """
    if lag_trunc < 1:
        raise ValidationError("lag_trunc must be >= 1")
    xi = _innovations(rng, (n + lag_trunc, q), df)
    Z = np.zeros((n, q))
    chunk = 50
    for start in range(0, lag_trunc + 1, chunk):
        lags = np.arange(start, min(start + chunk, lag_trunc + 1))
        M = rng.standard_normal((lags.size, q, q))
        M *= ((lags + 1.0) ** (-tau - 1))[:, None, None]
        for i, l in enumerate(lags):
            # rows t = 0..n-1 of Z use xi at position t + L - l
            Z += xi[lag_trunc - l: lag_trunc - l + n] @ M[i].T
    return Z


def gen_single_eq_dependent(cfg: DgpConfig, rep: int = 0) -> SimulatedData:
    """Single equation with instruments from a heavy-tailed linear process."""
    rng = stream(cfg.seed, rep, "dependent:instruments")
    Z = dependent_instruments(cfg.n, cfg.q, cfg.tau, cfg.df, cfg.lag_trunc, rng)
    return _single_equation(cfg, Z, rep, "dependent")


def _links(p, cfg, rng):
    """Actual links ``H`` (Bernoulli, zero diagonal) and the observed ``W`` with dropped links."""
    H = (rng.random((p, p)) < cfg.link_prob).astype(float)
    np.fill_diagonal(H, 0.0)
    drop = (rng.random((p, p)) < cfg.P_misspec) & (H != 0)
    W = np.where(drop, 0.0, H)
    # every row keeps at least one observed link so anchors exist
    for j in range(p):
        if not W[j].any():
            k = (j + 1) % p
            H[j, k] = W[j, k] = 1.0
    return H, W


def _plant(H, W, cfg, rng):
    """Add ``cfg.planted`` latent links with deviation ``planted_strength``."""
    if not cfg.planted:
        return H, []
    if cfg.rho == 0:
        raise ValidationError("planted links need rho != 0")
    free = np.argwhere((H == 0) & (W == 0) & ~np.eye(H.shape[0], dtype=bool))
    if free.shape[0] < cfg.planted:
        raise ValidationError(f"only {free.shape[0]} free pairs for {cfg.planted} planted links")
    pick = free[np.sort(rng.choice(free.shape[0], cfg.planted, replace=False))]
    H = H.copy()
    for j, k in pick:
        H[j, k] = cfg.planted_strength / cfg.rho
    return H, [(int(j), int(k)) for j, k in pick]


def gen_network(cfg: DgpConfig, rep: int = 0, kind: str = None) -> SimulatedData:
    """Multi-equation designs.

    ``net_yx``: ``Y_j = rho h_j'D + gamma'X_j + eps_j`` with common
    endogenous regressors ``D`` (``p``) instrumented by ``2p`` Gaussian
    instruments.  ``net_yy``: ``Y_j = rho h_j'Y + gamma'X_j + eps_j`` solved
    as ``Y = (I - rho H)^{-1}(Gamma X + eps)``.  ``H`` and ``W`` are divided
    by the actual row degree so ``H`` is row-stochastic and ``H - W`` stays
    sparse.  Equation ``j`` of ``net_yy`` is instrumented by ``Z_j`` and by
    ``iota'X_k`` for ``k != j``.
    """
    kind = kind or cfg.dgp_kind
    if kind not in ("net_yx", "net_yy"):
        raise ValidationError(f"unknown network design {kind!r}")
    n, p, m = cfg.n, cfg.p, cfg.m
    if p < 2:
        raise ValidationError("network designs need p >= 2")
    gamma = np.asarray(cfg.gamma, dtype=float)
    rng_l = stream(cfg.seed, rep, kind + ":links")
    rng_z = stream(cfg.seed, rep, kind + ":instruments")
    rng_e = stream(cfg.seed, rep, kind + ":errors")
    Sigma_m = np.linalg.cholesky(toeplitz(cfg.rho_z ** np.arange(2 * m)))
    pi_m = instrument_loading(2 * m, cfg.rho_z)
    u1 = rng_e.standard_normal((n, p))
    eps = cfg.noise * (np.sqrt(cfg.kappa) * u1
                       + np.sqrt(1 - cfg.kappa) * rng_e.standard_normal((n, p)))
    Zx = [rng_z.standard_normal((n, 2 * m)) @ Sigma_m.T for _ in range(p)]
    X = [_endogenous_block(Zx[j], pi_m, cfg.kappa, u1[:, j], rng_e) for j in range(p)]
    GX = np.column_stack([X[j] @ gamma for j in range(p)])

    if kind == "net_yy":
        for _ in range(100):
            H, W = _links(p, cfg, rng_l)
            deg = H.sum(axis=1, keepdims=True)
            H, W = H / deg, W / deg
            H, planted = _plant(H, W, cfg, rng_l)
            if np.max(np.abs(np.linalg.eigvals(cfg.rho * H))) < 1:
                break
        else:
            raise NumericalError("I - rho H stayed singular after 100 link draws")
        Y = np.linalg.solve(np.eye(p) - cfg.rho * H, (GX + eps).T).T
        net = NetworkSpec(W)
        spec = build_spatial_transform(net, n_exog=m, exclude_self=True)
        sums = np.column_stack([X[k].sum(axis=1) for k in range(p)])
        z = [np.hstack([Zx[j], np.delete(sums, j, axis=1)]) for j in range(p)]
        xs = [np.hstack([Y, X[j]]) for j in range(p)]
    else:
        H, W = _links(p, cfg, rng_l)
        Sigma_p = np.linalg.cholesky(toeplitz(cfg.rho_z ** np.arange(2 * p)))
        Zd = rng_z.standard_normal((n, 2 * p)) @ Sigma_p.T
        common = u1.sum(axis=1) / np.sqrt(p)
        D = _endogenous_block(Zd, instrument_loading(2 * p, cfg.rho_z), cfg.kappa, common, rng_e)
        net = NetworkSpec(W)
        # the spillover transform drops one deviation per row; those links
        # are kept correct in the design
        spec0 = build_spillover_transform(net, n_exog=m)
        dix = np.asarray(spec0.meta["delta_index"])
        for j in range(p):
            miss = np.flatnonzero(dix[j] < 0)
            H[j, miss] = W[j, miss]
        H, planted = _plant(H, W, cfg, rng_l)
        Y = cfg.rho * D @ H.T + GX + eps
        spec = spec0
        z = [np.hstack([Zd, Zx[j]]) for j in range(p)]
        xs = [np.hstack([D, X[j]]) for j in range(p)]

    delta = cfg.rho * (H - W)
    theta0 = np.zeros(spec.K)
    dix = np.asarray(spec.meta["delta_index"])
    for j in range(p):
        for k in range(p):
            if dix[j, k] >= 0:
                theta0[dix[j, k]] = delta[j, k]
    rho_i = spec.meta["rho_index"]
    theta0[rho_i] = cfg.rho
    g0 = spec.meta["gamma_start"]
    theta0[g0:g0 + m] = gamma
    # every coordinate is a target so rho and gamma are debiased as well
    spec = spec.with_theta1(np.arange(spec.K))
    data = PanelData(Y, xs, z)
    return SimulatedData(data, spec, theta0, net,
                         extra={"H": H, "W": W, "eps": eps, "GX": GX, "kind": kind,
                                "planted": planted})


def simulate(cfg: DgpConfig, rep: int = 0) -> SimulatedData:
    if cfg.dgp_kind == "single_eq_iid":
        return gen_single_eq_iid(cfg, rep)
    if cfg.dgp_kind == "single_eq_dependent":
        return gen_single_eq_dependent(cfg, rep)
    return gen_network(cfg, rep)


def two_stage_least_squares(y, x, z) -> np.ndarray:
    """``(X'P_z X)^{-1} X'P_z y`` with ``P_z`` the projection on the instrument span."""
    y = np.asarray(y, dtype=float).ravel()
    x = np.asarray(x, dtype=float).reshape(y.size, -1)
    z = np.asarray(z, dtype=float).reshape(y.size, -1)
    if z.shape[1] < x.shape[1]:
        raise ValidationError(f"{z.shape[1]} instruments for {x.shape[1]} regressors")
    coef, *_ = np.linalg.lstsq(z, x, rcond=None)
    xhat = z @ coef
    beta, *_ = np.linalg.lstsq(xhat.T @ x, xhat.T @ y, rcond=None)
    return beta
