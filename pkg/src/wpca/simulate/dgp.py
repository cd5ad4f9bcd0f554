"""Data-generating processes for factor-model simulations."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..alignment import GroundTruth
from ..exceptions import ParameterError, ValidationError

# lambda_k = LOADING_SCALE * sqrt(N), calibrated once so that PCA's mean
# Frobenius error of Uhat at N=100, T=250 under equicorrelated noise
# (rho=0.6) is close to 0.584, then frozen.
LOADING_SCALE = 1.1

PSD_TOL = 1e-10


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def random_orthogonal(r: int, rng) -> np.ndarray:
    """Haar-distributed ``r x r`` orthogonal matrix (QR with positive R diagonal)."""
    Q, R = np.linalg.qr(_rng(rng).standard_normal((r, r)))
    return Q * np.sign(np.diag(R))


def gen_var_factors(T: int, r: int, a: float = 0.9, seed=None, return_A: bool = False):
    """Stationary VAR(1) factors ``f_t = A f_{t-1} + e_t``.

    ``A = O1 (a I) O2^T`` for independent Haar rotations and
    ``e_t ~ N(0, I - A A^T)``, so every ``f_t ~ N(0, I)``.  ``f_1`` is
    drawn from the stationary law.
    """
    if not 0 <= a < 1:
        raise ParameterError(f"VAR coefficient scale must lie in [0, 1), got {a}")
    if T < 1 or r < 1:
        raise ParameterError("T and r must be positive")
    rng = _rng(seed)
    A = random_orthogonal(r, rng) @ (a * np.eye(r)) @ random_orthogonal(r, rng).T
    C = np.linalg.cholesky(np.eye(r) - A @ A.T)
    shocks = rng.standard_normal((T, r))
    F = np.empty((T, r))
    F[0] = shocks[0]
    innov = shocks[1:] @ C.T
    for t in range(1, T):
        F[t] = A @ F[t - 1] + innov[t - 1]
    return (F, A) if return_A else F


def gen_smooth_factors(T: int, r: int, basis: str = "cosine") -> np.ndarray:
    """Smooth deterministic factors ``F[t, k] = g_k(t / T)``, ``t = 1..T``.

    ``cosine`` uses ``g_k(u) = sqrt(2) cos(k pi u)`` for ``k = 1..r``;
    ``constant`` starts the same orthonormal family at ``g_0 = 1``.
    """
    if r < 1 or T < 1:
        raise ParameterError("T and r must be positive")
    u = np.arange(1, T + 1) / T
    if basis == "cosine":
        ks = np.arange(1, r + 1)
    elif basis == "constant":
        ks = np.arange(r)
    else:
        raise ParameterError(f"unknown basis {basis!r}")
    F = np.sqrt(2.0) * np.cos(np.pi * np.outer(u, ks))
    F[:, ks == 0] = 1.0
    return F


def gen_loadings(N: int, r: int, lambdas, seed=None) -> np.ndarray:
    """Loadings with ``L^T L = diag(lambdas)^2``.

    Orthonormalizes an ``N x r`` Gaussian draw and scales column ``k`` by
    ``lambdas[k]``.
    """
    lam = np.asarray(lambdas, dtype=float).reshape(-1)
    if lam.size != r:
        raise ParameterError(f"expected {r} loading scales, got {lam.size}")
    if r > N:
        raise ParameterError(f"r={r} exceeds N={N}")
    if np.any(lam <= 0) or np.any(np.diff(lam) > 0):
        raise ParameterError("loading scales must be positive and non-increasing")
    Q, R = np.linalg.qr(_rng(seed).standard_normal((N, r)))
    return Q * np.sign(np.diag(R)) * lam


@dataclass(frozen=True)
class NoiseSpec:
    """Noise covariance ``SigmaC (x) SigmaT``.

    ``sigmaC_kind``:
      - ``diag_uniform``: ``diag(w)``, ``w_i ~ Unif[lo, hi]``
      - ``equicorr``: ``diag(w) + rho_off (J - I)``
      - ``identity``: ``I_N``
      - ``zero``: no noise
    ``sigmaT_kind`` is ``identity`` or ``ar1`` (``phi^|t - s|``).
    """

    sigmaC_kind: str = "diag_uniform"
    lo: float = 1.0
    hi: float = 20.0
    rho_off: float = 0.0
    sigmaT_kind: str = "identity"
    phi: float = 0.0

    def __post_init__(self):
        if self.sigmaC_kind not in ("diag_uniform", "equicorr", "identity", "zero"):
            raise ParameterError(f"unknown sigmaC_kind {self.sigmaC_kind!r}")
        if self.sigmaT_kind not in ("identity", "ar1"):
            raise ParameterError(f"unknown sigmaT_kind {self.sigmaT_kind!r}")
        if self.lo > self.hi:
            raise ParameterError("lo must not exceed hi")
        if self.rho_off < 0:
            raise ParameterError("rho_off must be nonnegative")
        if not -1 < self.phi < 1:
            raise ParameterError("phi must lie in (-1, 1)")


def noise_covariances(N: int, T: int, spec: NoiseSpec, seed=None) -> tuple[np.ndarray, np.ndarray]:
    rng = _rng(seed)
    kind = spec.sigmaC_kind
    if kind in ("identity", "zero"):
        SigmaC = np.eye(N) if kind == "identity" else np.zeros((N, N))
    else:
        w = rng.uniform(spec.lo, spec.hi, N)
        SigmaC = np.diag(w)
        if kind == "equicorr":
            SigmaC = SigmaC + spec.rho_off * (np.ones((N, N)) - np.eye(N))
    if spec.sigmaT_kind == "identity":
        SigmaT = np.eye(T)
    else:
        idx = np.arange(T)
        SigmaT = spec.phi ** np.abs(idx[:, None] - idx[None, :])
    return SigmaC, SigmaT


def psd_sqrt(S: np.ndarray, name: str = "covariance") -> np.ndarray:
    """Symmetric square root; rejects matrices with negative eigenvalues."""
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    scale = max(1.0, float(np.max(np.abs(vals)))) if vals.size else 1.0
    if vals.size and vals[0] < -PSD_TOL * scale:
        raise ValidationError(f"{name} is not positive semidefinite (min eigenvalue {vals[0]:.3g})")
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T


def _is_identity(S):
    return np.array_equal(S, np.eye(S.shape[0]))


def gen_noise_from_cov(SigmaC: np.ndarray, SigmaT: np.ndarray | int, seed=None) -> np.ndarray:
    """``E = SigmaC^{1/2} G SigmaT^{1/2}`` with ``G`` standard Gaussian.

    An integer ``SigmaT`` means the identity of that size.
    """
    N = SigmaC.shape[0]
    T = SigmaT if isinstance(SigmaT, (int, np.integer)) else SigmaT.shape[0]
    G = _rng(seed).standard_normal((N, T))
    E = G if _is_identity(SigmaC) else psd_sqrt(SigmaC, "SigmaC") @ G
    if not isinstance(SigmaT, (int, np.integer)) and not _is_identity(SigmaT):
        E = E @ psd_sqrt(SigmaT, "SigmaT")
    return E


def gen_noise(N: int, T: int, spec: NoiseSpec, seed=None, return_cov: bool = False):
    rng = _rng(seed)
    SigmaC, SigmaT = noise_covariances(N, T, spec, rng)
    E = gen_noise_from_cov(SigmaC, T if spec.sigmaT_kind == "identity" else SigmaT, rng)
    return (E, SigmaC, SigmaT) if return_cov else E


@dataclass(frozen=True)
class DgpConfig:
    """One simulation cell.

    ``factor_kind`` is ``var`` (coefficient scale ``a``) or ``smooth``
    (``basis``).  ``lambdas=None`` means ``loading_scale * sqrt(N)`` for
    every factor.
    """

    N: int
    T: int
    r: int = 3
    factor_kind: str = "var"
    a: float = 0.9
    basis: str = "cosine"
    lambdas: tuple | None = None
    loading_scale: float = LOADING_SCALE
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    label: str = ""

    def __post_init__(self):
        if self.N < 1 or self.T < 1 or self.r < 1:
            raise ParameterError("N, T, r must be positive")
        if self.r > min(self.N, self.T):
            raise ParameterError("r must not exceed min(N, T)")
        if self.factor_kind not in ("var", "smooth"):
            raise ParameterError(f"unknown factor_kind {self.factor_kind!r}")
        if self.factor_kind == "var" and not 0 <= self.a < 1:
            raise ParameterError("VAR coefficient scale must lie in [0, 1)")

    def lambda_values(self) -> np.ndarray:
        if self.lambdas is not None:
            return np.asarray(self.lambdas, dtype=float)
        return np.full(self.r, self.loading_scale * np.sqrt(self.N))

    def with_dims(self, N: int, T: int) -> "DgpConfig":
        return replace(self, N=N, T=T)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["lambdas"] = None if self.lambdas is None else list(self.lambdas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DgpConfig":
        d = dict(d)
        if "noise" in d and isinstance(d["noise"], dict):
            d["noise"] = NoiseSpec(**d["noise"])
        if d.get("lambdas") is not None:
            d["lambdas"] = tuple(d["lambdas"])
        return cls(**d)


def equicorr_setting(N: int, T: int, rho_off: float = 0.6, **kw) -> DgpConfig:
    """Heteroskedastic diagonal plus constant off-diagonal noise covariance."""
    return DgpConfig(N, T, noise=NoiseSpec("equicorr", 1.0, 20.0, rho_off), label=f"equicorr{rho_off:g}", **kw)


def diagonal_setting(N: int, T: int, **kw) -> DgpConfig:
    return DgpConfig(N, T, noise=NoiseSpec("diag_uniform", 1.0, 20.0), label="diagonal", **kw)


def simulate_panel(cfg: DgpConfig, seed=None) -> tuple[np.ndarray, GroundTruth]:
    """Draw ``X = L F^T + E`` for one replicate.

    Factors, loadings and noise use independent child streams of ``seed``
    so changing one component's draw count never shifts the others.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_f, s_l, s_e = (np.random.default_rng(c) for c in ss.spawn(3))
    if cfg.factor_kind == "var":
        F = gen_var_factors(cfg.T, cfg.r, cfg.a, s_f)
    else:
        F = gen_smooth_factors(cfg.T, cfg.r, cfg.basis)
    L = gen_loadings(cfg.N, cfg.r, cfg.lambda_values(), s_l)
    E, SigmaC, SigmaT = gen_noise(cfg.N, cfg.T, cfg.noise, s_e, return_cov=True)
    if cfg.noise.sigmaC_kind == "zero":
        E = np.zeros((cfg.N, cfg.T))
    truth = GroundTruth.from_factors(L, F, SigmaC, SigmaT)
    return L @ F.T + E, truth
