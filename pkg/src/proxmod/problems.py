"""Measurement-model problem instances and their losses.

Three problem families are supported, all finite-sum nonsmooth objectives
built from per-sample measurement residuals:

* robust phase retrieval:       f(x) = (1/n) sum_i |<a_i, x>^2 - b_i|
* blind deconvolution:          f(x; y) = (1/n) sum_i |<u_i, x><v_i, y> - b_i|
* least absolute deviations:    f(x) = (1/n) sum_i |<a_i, x> - b_i|

For blind deconvolution the decision variable is the concatenation
``w = (x; y)`` of length ``2 * dim``.

Instances are immutable after generation (arrays are marked read-only), so
they are safe to share read-only across worker threads and processes.

Text serialization format (one instance per file)::

    proxmod-instance v1
    kind <phase_retrieval|blind_deconv|least_abs_dev>
    n <int>
    d <int>
    seed <int or ->
    f_hat <float or ->
    truth <whitespace-separated floats or the single token ->
    <n sample rows>

Sample rows are whitespace-separated reals: ``a_1 ... a_d b`` for phase
retrieval / least absolute deviations, and ``u_1 ... u_d v_1 ... v_d b``
for blind deconvolution. Images are read as 16 lines of 16
whitespace-separated reals (one image row per line); pixel intensities are
passed through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .rng import rng_for

# |loss_eval(truth) - f_hat| must stay below this for every stored instance.
F_HAT_CONSISTENCY_TOL = 1e-12


class ProblemKind(str, Enum):
    PHASE_RETRIEVAL = "phase_retrieval"
    BLIND_DECONV = "blind_deconv"
    LEAST_ABS_DEV = "least_abs_dev"


@dataclass(frozen=True)
class Sample:
    """A single measurement: (a, b) for phase retrieval and least absolute
    deviations, (u, v, b) for blind deconvolution."""

    b: float
    a: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None


@dataclass(frozen=True)
class GenSpec:
    """Parameters for synthetic data generation.

    ``kappa`` conditions the measurement ensemble (larger is harder),
    ``p_fail`` is the expected fraction of corrupted measurements and
    ``noise_std`` the standard deviation of the corruption noise.
    """

    n: int
    d: int
    kappa: float = 1.0
    p_fail: float = 0.0
    noise_std: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError(f"need n, d >= 1, got n={self.n}, d={self.d}")
        if self.kappa < 1.0:
            raise ValueError(f"condition number must be >= 1, got {self.kappa}")
        if not 0.0 <= self.p_fail <= 1.0:
            raise ValueError(f"p_fail must lie in [0, 1], got {self.p_fail}")


@dataclass(frozen=True)
class ProblemInstance:
    """A finite dataset of measurements plus the objective it induces.

    ``A`` holds the measurement vectors for phase retrieval / least absolute
    deviations; ``U`` and ``V`` hold the two measurement ensembles for blind
    deconvolution. ``truth`` (when known) is the signal the measurements were
    generated from, in decision-variable coordinates, and ``f_hat`` the
    objective value at ``truth``.
    """

    kind: ProblemKind
    dim: int
    b: np.ndarray
    A: Optional[np.ndarray] = None
    U: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None
    truth: Optional[np.ndarray] = None
    f_hat: Optional[float] = None
    seed: Optional[int] = None

    def __post_init__(self):
        n = self.b.shape[0]
        if n < 1:
            raise ValueError("instance needs at least one sample")
        if self.kind == ProblemKind.BLIND_DECONV:
            if self.U is None or self.V is None:
                raise ValueError("blind deconvolution needs U and V")
            if self.U.shape != (n, self.dim) or self.V.shape != (n, self.dim):
                raise ValueError("U/V shapes inconsistent with (n, d)")
        else:
            if self.A is None:
                raise ValueError(f"{self.kind.value} needs a measurement matrix A")
            if self.A.shape != (n, self.dim):
                raise ValueError("A shape inconsistent with (n, d)")
        for arr in (self.b, self.A, self.U, self.V, self.truth):
            if arr is not None:
                arr.flags.writeable = False
        if self.truth is not None:
            if self.truth.shape != (self.decision_dim,):
                raise ValueError("truth has wrong dimension")
            if self.f_hat is None:
                object.__setattr__(self, "f_hat", loss_eval(self, self.truth))
            elif abs(loss_eval(self, self.truth) - self.f_hat) > F_HAT_CONSISTENCY_TOL:
                raise ValueError("stored f_hat inconsistent with loss at truth")

    @property
    def n(self) -> int:
        return self.b.shape[0]

    @property
    def decision_dim(self) -> int:
        """Dimension of the decision variable (2d for blind deconvolution)."""
        if self.kind == ProblemKind.BLIND_DECONV:
            return 2 * self.dim
        return self.dim

    def sample(self, i: int) -> Sample:
        if not 0 <= i < self.n:
            raise IndexError(f"sample index {i} out of range [0, {self.n})")
        if self.kind == ProblemKind.BLIND_DECONV:
            return Sample(b=float(self.b[i]), u=self.U[i], v=self.V[i])
        return Sample(b=float(self.b[i]), a=self.A[i])

    @property
    def samples(self) -> list:
        return [self.sample(i) for i in range(self.n)]


def _conditioned_gaussian(n: int, d: int, kappa: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian ensemble scaled by a diagonal with entries evenly spaced in
    [1/kappa, 1] (ascending)."""
    Q = rng.standard_normal((n, d))
    diag = np.linspace(1.0 / kappa, 1.0, d)
    return Q * diag


def _corrupt(values: np.ndarray, p_fail: float, noise_std: float,
             rng: np.random.Generator) -> np.ndarray:
    mask = rng.random(values.shape[0]) < p_fail
    noise = rng.normal(0.0, noise_std, values.shape[0])
    return values + mask * noise


def gen_synthetic_phase_retrieval(spec: GenSpec):
    """Synthetic robust phase retrieval: unit-sphere truth, conditioned
    Gaussian measurements, sparse Gaussian corruption of b.

    Returns ``(instance, truth)``.
    """
    data_rng = rng_for(spec.seed, "data")
    corrupt_rng = rng_for(spec.seed, "corruption")
    x_star = data_rng.standard_normal(spec.d)
    x_star /= np.linalg.norm(x_star)
    A = _conditioned_gaussian(spec.n, spec.d, spec.kappa, data_rng)
    b = _corrupt((A @ x_star) ** 2, spec.p_fail, spec.noise_std, corrupt_rng)
    inst = ProblemInstance(kind=ProblemKind.PHASE_RETRIEVAL, dim=spec.d, b=b, A=A,
                           truth=x_star, seed=spec.seed)
    return inst, x_star


def gen_synthetic_blind_deconv(spec: GenSpec):
    """Synthetic blind deconvolution: both measurement ensembles generated
    as in phase retrieval, bilinear measurements of a shared unit-sphere
    signal, sparse Gaussian corruption.

    Returns ``(instance, truth)`` with ``truth = (x*; x*)`` of length 2d.
    """
    data_rng = rng_for(spec.seed, "data")
    corrupt_rng = rng_for(spec.seed, "corruption")
    x_star = data_rng.standard_normal(spec.d)
    x_star /= np.linalg.norm(x_star)
    U = _conditioned_gaussian(spec.n, spec.d, spec.kappa, data_rng)
    V = _conditioned_gaussian(spec.n, spec.d, spec.kappa, data_rng)
    b = _corrupt((U @ x_star) * (V @ x_star), spec.p_fail, spec.noise_std, corrupt_rng)
    truth = np.concatenate([x_star, x_star])
    inst = ProblemInstance(kind=ProblemKind.BLIND_DECONV, dim=spec.d, b=b, U=U, V=V,
                           truth=truth, seed=spec.seed)
    return inst, truth


def gen_least_abs_dev(spec: GenSpec):
    """Synthetic least-absolute-deviation regression (convex): linear
    measurements of a unit-sphere signal with sparse Gaussian corruption.

    Returns ``(instance, truth)``.
    """
    data_rng = rng_for(spec.seed, "data")
    corrupt_rng = rng_for(spec.seed, "corruption")
    x_star = data_rng.standard_normal(spec.d)
    x_star /= np.linalg.norm(x_star)
    A = _conditioned_gaussian(spec.n, spec.d, spec.kappa, data_rng)
    b = _corrupt(A @ x_star, spec.p_fail, spec.noise_std, corrupt_rng)
    inst = ProblemInstance(kind=ProblemKind.LEAST_ABS_DEV, dim=spec.d, b=b, A=A,
                           truth=x_star, seed=spec.seed)
    return inst, x_star


def hadamard_matrix(block_dim: int) -> np.ndarray:
    """Normalized Hadamard matrix of a power-of-two dimension, built by the
    Sylvester doubling recursion. Entries are +-1/sqrt(block_dim), so
    H = H^T = H^{-1} and every row has unit Euclidean norm."""
    if block_dim < 1 or block_dim & (block_dim - 1):
        raise ValueError(f"block dimension must be a power of two, got {block_dim}")
    H = np.ones((1, 1))
    while H.shape[0] < block_dim:
        H = np.block([[H, H], [H, -H]])
    return H / np.sqrt(block_dim)


def gen_hadamard_measurements(k: int, seed: int, block_dim: int = 256) -> np.ndarray:
    """Stacked sign-modulated Hadamard blocks: A = [H S_1; ...; H S_k] with
    S_j diagonal +-1 (uniform). Shape (k * block_dim, block_dim)."""
    if k < 1:
        raise ValueError(f"need at least one sign block, got k={k}")
    rng = rng_for(seed, "hadamard-signs")
    H = hadamard_matrix(block_dim)
    blocks = []
    for _ in range(k):
        signs = rng.integers(0, 2, block_dim) * 2 - 1
        blocks.append(H * signs)
    return np.vstack(blocks)


def gen_zipcode_instance(image: np.ndarray, p_fail: float, seed: int,
                         k: int = 3) -> ProblemInstance:
    """Phase-retrieval instance from a 16x16 image under sign-modulated
    Hadamard measurements. b = (A x*)^2 with an independent Bernoulli(p_fail)
    subset of entries zeroed; the vectorized image (row-major) is the truth."""
    image = np.asarray(image, dtype=float)
    if image.shape != (16, 16):
        raise ValueError(f"expected a 16x16 image, got shape {image.shape}")
    x_star = image.reshape(-1).copy()
    A = gen_hadamard_measurements(k, seed, block_dim=256)
    b = (A @ x_star) ** 2
    zero_rng = rng_for(seed, "corruption")
    b[zero_rng.random(b.shape[0]) < p_fail] = 0.0
    return ProblemInstance(kind=ProblemKind.PHASE_RETRIEVAL, dim=256, b=b, A=A,
                           truth=x_star, seed=seed)


def residuals(instance: ProblemInstance, x: np.ndarray) -> np.ndarray:
    """Per-sample measurement residuals r_i(x); the loss is mean |r_i|."""
    x = np.asarray(x, dtype=float)
    if x.shape != (instance.decision_dim,):
        raise ValueError(
            f"point has dimension {x.shape}, expected ({instance.decision_dim},)")
    if instance.kind == ProblemKind.PHASE_RETRIEVAL:
        return (instance.A @ x) ** 2 - instance.b
    if instance.kind == ProblemKind.LEAST_ABS_DEV:
        return instance.A @ x - instance.b
    xh, yh = x[:instance.dim], x[instance.dim:]
    return (instance.U @ xh) * (instance.V @ yh) - instance.b


def loss_eval(instance: ProblemInstance, x: np.ndarray) -> float:
    """Full empirical objective: mean of per-sample losses."""
    return float(np.abs(residuals(instance, x)).mean())


def sample_loss(instance: ProblemInstance, i: int, x: np.ndarray) -> float:
    s = instance.sample(i)  # validates the index
    if instance.kind == ProblemKind.PHASE_RETRIEVAL:
        return abs(float(s.a @ x) ** 2 - s.b)
    if instance.kind == ProblemKind.LEAST_ABS_DEV:
        return abs(float(s.a @ x) - s.b)
    xh, yh = x[:instance.dim], x[instance.dim:]
    return abs(float(s.u @ xh) * float(s.v @ yh) - s.b)


def sample_subgradient(instance: ProblemInstance, i: int, x: np.ndarray) -> np.ndarray:
    """A subgradient of the i-th sample loss at x, resolving sign(0) to 0."""
    s = instance.sample(i)
    if instance.kind == ProblemKind.PHASE_RETRIEVAL:
        t = float(s.a @ x)
        return 2.0 * t * np.sign(t * t - s.b) * s.a
    if instance.kind == ProblemKind.LEAST_ABS_DEV:
        return np.sign(float(s.a @ x) - s.b) * s.a
    xh, yh = x[:instance.dim], x[instance.dim:]
    p, q = float(s.u @ xh), float(s.v @ yh)
    return np.sign(p * q - s.b) * np.concatenate([q * s.u, p * s.v])


# --- serialization -----------------------------------------------------------

_MAGIC = "proxmod-instance v1"


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in np.atleast_1d(values))


def save_instance(instance: ProblemInstance, path) -> None:
    """Write an instance in the documented column-based text format."""
    lines = [_MAGIC,
             f"kind {instance.kind.value}",
             f"n {instance.n}",
             f"d {instance.dim}",
             f"seed {instance.seed if instance.seed is not None else '-'}",
             f"f_hat {repr(float(instance.f_hat)) if instance.f_hat is not None else '-'}",
             f"truth {_fmt(instance.truth) if instance.truth is not None else '-'}"]
    for i in range(instance.n):
        if instance.kind == ProblemKind.BLIND_DECONV:
            row = np.concatenate([instance.U[i], instance.V[i], [instance.b[i]]])
        else:
            row = np.concatenate([instance.A[i], [instance.b[i]]])
        lines.append(_fmt(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_instance(path) -> ProblemInstance:
    """Read an instance written by :func:`save_instance`."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != _MAGIC:
        raise ValueError(f"{path}: not a proxmod instance file")

    header = {}
    for ln in lines[1:7]:
        key, _, rest = ln.partition(" ")
        header[key] = rest.strip()
    kind = ProblemKind(header["kind"])
    n, d = int(header["n"]), int(header["d"])
    seed = None if header["seed"] == "-" else int(header["seed"])
    f_hat = None if header["f_hat"] == "-" else float(header["f_hat"])
    truth = None if header["truth"] == "-" else np.array(header["truth"].split(), dtype=float)

    rows = lines[7:]
    if len(rows) != n:
        raise ValueError(f"{path}: expected {n} sample rows, found {len(rows)}")
    table = np.array([np.array(r.split(), dtype=float) for r in rows])
    if kind == ProblemKind.BLIND_DECONV:
        if table.shape[1] != 2 * d + 1:
            raise ValueError(f"{path}: blind-deconvolution rows need 2d+1 columns")
        return ProblemInstance(kind=kind, dim=d, b=table[:, -1].copy(),
                               U=table[:, :d].copy(), V=table[:, d:2 * d].copy(),
                               truth=truth, f_hat=f_hat, seed=seed)
    if table.shape[1] != d + 1:
        raise ValueError(f"{path}: sample rows need d+1 columns")
    return ProblemInstance(kind=kind, dim=d, b=table[:, -1].copy(),
                           A=table[:, :d].copy(), truth=truth, f_hat=f_hat, seed=seed)


def load_image(path) -> np.ndarray:
    """Read a 16x16 image as 16 lines of 16 whitespace-separated reals."""
    img = np.loadtxt(path)
    if img.shape != (16, 16):
        raise ValueError(f"{path}: expected 16 lines of 16 values, got {img.shape}")
    return img


def save_matrix(path, M: np.ndarray) -> None:
    np.savetxt(path, M, fmt="%.17g")
