"""Sampled functions on uniform grids and weighted norms on the phase plane.

Grids are cell-aligned: an axis with half-extent ``R`` and spacing ``h``
has the ``n = 2R/h`` nodes ``-R, -R+h, ..., R-h``. Integrals are Riemann
sums, which for smooth rapidly decaying integrands converge spectrally.

The Fourier transform follows ``u^(xi) = int u(x) exp(-i <x, xi>) dx``
with no ``2 pi`` normalization.
"""

import json
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import logsumexp

from tfnuclear.errors import ConfigError, DomainError, GridMismatch
from tfnuclear.lattice import CoefficientArray, LatticeSpec
from tfnuclear.serialize import write_csv
from tfnuclear.weights import eval_weight

DEFAULT_R = 12.0
DEFAULT_H = 2.0 ** -6
ADEQUACY = 1e-10
_MAGIC = b"TFSF0001"
_LOG_MAX = np.log(np.finfo(float).max)


class NormOverflow(RuntimeWarning):
    """A weighted norm exceeded the float range and was reported as +inf."""


class TruncationWarning(RuntimeWarning):
    """A sampled function does not decay at the edge of its grid."""


def _node_count(R, h):
    n = 2.0 * R / h
    if not (R > 0 and h > 0) or abs(n - round(n)) > 1e-9 * n:
        raise ConfigError(f"2R/h must be a positive integer (R={R}, h={h})")
    n = int(round(n))
    if n % 2:
        raise ConfigError("grid must have an even number of nodes per axis")
    return n


def axis_nodes(R, h):
    return -R + h * np.arange(_node_count(R, h))


def _shell_ratio(values, ndim_groups):
    mag = np.abs(values)
    top = mag.max() if mag.size else 0.0
    if top == 0:
        return 0.0
    edge = 0.0
    for ax in range(values.ndim):
        for i in (0, values.shape[ax] - 1):
            edge = max(edge, np.take(mag, i, axis=ax).max())
    return float(edge / top)


@dataclass
class SampledFunction:
    """Complex samples of a function on ``[-R, R)^d`` with spacing ``h``."""

    d: int
    h: float
    R: float
    values: np.ndarray
    flags: tuple = ()

    def __post_init__(self):
        n = _node_count(self.R, self.h)
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (n,) * self.d:
            raise ConfigError(f"values shape {self.values.shape} != {(n,) * self.d}")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def cell(self):
        return self.h ** self.d

    def axis(self):
        return axis_nodes(self.R, self.h)

    def coords(self):
        """Sparse (broadcastable) coordinate arrays, one per axis."""
        x = self.axis()
        return np.meshgrid(*([x] * self.d), indexing="ij", sparse=True)

    @classmethod
    def from_callable(cls, fn, d=1, R=DEFAULT_R, h=DEFAULT_H):
        x = axis_nodes(R, h)
        if d == 1:
            vals = fn(x)
        else:
            vals = fn(*np.meshgrid(*([x] * d), indexing="ij", sparse=True))
        n = x.size
        return cls(d, h, R, np.broadcast_to(vals, (n,) * d).astype(complex))

    @classmethod
    def zeros_like(cls, other):
        return cls(other.d, other.h, other.R, np.zeros_like(other.values))

    def like(self, values, flags=()):
        return SampledFunction(self.d, self.h, self.R, values, tuple(flags))

    def same_grid(self, other):
        return (self.d == other.d and self.h == other.h and self.R == other.R)

    def check_grid(self, other):
        if not self.same_grid(other):
            raise GridMismatch(
                f"grids differ: (d={self.d}, h={self.h}, R={self.R}) vs "
                f"(d={other.d}, h={other.h}, R={other.R})")

    def inner(self, other):
        """``<f, g> = int f conj(g)``."""
        self.check_grid(other)
        return complex(np.vdot(other.values, self.values) * self.cell)

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.cell))

    def boundary_ratio(self):
        return _shell_ratio(self.values, self.d)

    @property
    def adequate(self):
        return self.boundary_ratio() < ADEQUACY

    def __add__(self, other):
        self.check_grid(other)
        return self.like(self.values + other.values)

    def __sub__(self, other):
        self.check_grid(other)
        return self.like(self.values - other.values)

    def __mul__(self, scalar):
        return self.like(self.values * scalar)

    __rmul__ = __mul__

    def save(self, path):
        """Binary container: magic, JSON header length, header, row-major payload."""
        header = json.dumps({"d": self.d, "h": self.h, "R": self.R,
                             "dtype": "complex128", "n": self.n}).encode()
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(np.ascontiguousarray(self.values, dtype="<c16").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            if fh.read(len(_MAGIC)) != _MAGIC:
                raise ConfigError(f"{path}: not a sampled-function container")
            (hlen,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(hlen))
            payload = np.frombuffer(fh.read(), dtype="<c16")
        d, n = header["d"], header["n"]
        return cls(d, header["h"], header["R"], payload.reshape((n,) * d).copy())

    def to_csv(self, path, axis=0, index=None):
        """Write a 1-d slice along ``axis`` (other axes at ``index``, default centre)."""
        if self.d == 1:
            line = self.values
        else:
            index = self.n // 2 if index is None else index
            sl = [index] * self.d
            sl[axis] = slice(None)
            line = self.values[tuple(sl)]
        write_csv(path, ["x", "re", "im", "abs"],
                  ((x, v.real, v.imag, abs(v)) for x, v in zip(self.axis(), line)))


def fourier_transform(f):
    """Riemann-sum Fourier transform onto the dual grid.

    The dual grid has spacing ``pi / R`` and the same node count, covering
    ``[-pi/h, pi/h)``. Computed per axis as a DFT with the phase factors
    that account for both grid offsets.
    """
    flags = list(f.flags)
    if not f.adequate:
        flags.append("inadequate-truncation")
        warnings.warn("input does not decay at the grid edge", TruncationWarning,
                      stacklevel=2)
    n = f.n
    x0 = -f.R
    dxi = np.pi / f.R
    xi0 = -np.pi / f.h
    j = np.arange(n)
    pre = np.exp(-1j * j * f.h * xi0)
    post = f.h * np.exp(-1j * x0 * xi0) * np.exp(-1j * x0 * dxi * j)
    out = f.values
    for ax in range(f.d):
        shape = [1] * f.d
        shape[ax] = n
        out = np.fft.fft(out * pre.reshape(shape), axis=ax) * post.reshape(shape)
    return SampledFunction(f.d, dxi, np.pi / f.h, out, tuple(flags))


@dataclass
class PhasePlaneFunction:
    """Samples on the product of an ``x`` grid and a ``xi`` grid (each ``d``-dim).

    ``values`` has shape ``(nx,)*d + (nxi,)*d``.
    """

    d: int
    hx: float
    Rx: float
    hxi: float
    Rxi: float
    values: np.ndarray
    flags: tuple = ()

    def __post_init__(self):
        nx, nxi = _node_count(self.Rx, self.hx), _node_count(self.Rxi, self.hxi)
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (nx,) * self.d + (nxi,) * self.d:
            raise ConfigError("phase-plane values do not match the grids")

    @classmethod
    def from_callable(cls, fn, d=1, R=DEFAULT_R, h=DEFAULT_H, Rxi=None, hxi=None):
        """``fn(x_1..x_d, xi_1..xi_d)`` evaluated on sparse coordinate arrays."""
        Rxi = R if Rxi is None else Rxi
        hxi = h if hxi is None else hxi
        axes = [axis_nodes(R, h)] * d + [axis_nodes(Rxi, hxi)] * d
        coords = np.meshgrid(*axes, indexing="ij", sparse=True)
        shape = tuple(a.size for a in axes)
        vals = np.broadcast_to(fn(*coords), shape).astype(complex)
        return cls(d, h, R, hxi, Rxi, vals)

    def like(self, values, flags=()):
        return PhasePlaneFunction(self.d, self.hx, self.Rx, self.hxi, self.Rxi,
                                  values, tuple(flags))

    def same_grid(self, other):
        return ((self.d, self.hx, self.Rx, self.hxi, self.Rxi)
                == (other.d, other.hx, other.Rx, other.hxi, other.Rxi))

    def axes(self):
        return ([axis_nodes(self.Rx, self.hx)] * self.d
                + [axis_nodes(self.Rxi, self.hxi)] * self.d)

    def radius(self):
        """``|z|`` at every node, Euclidean on ``R^{2d}``."""
        coords = np.meshgrid(*self.axes(), indexing="ij", sparse=True)
        return np.sqrt(sum(c ** 2 for c in coords))

    @property
    def cells(self):
        return self.hx ** self.d, self.hxi ** self.d

    def boundary_ratio(self):
        return _shell_ratio(self.values, 2 * self.d)

    @property
    def adequate(self):
        return self.boundary_ratio() < ADEQUACY


@dataclass
class MixedNormSpec:
    """``L^{p,q}`` exponents with weight ``m(z) = exp(lam * w(|z|))``."""

    p: float = 2.0
    q: float = 2.0
    lam: float = 0.0
    weight: object = None

    def __post_init__(self):
        for e in (self.p, self.q):
            if not e >= 1:
                raise ConfigError("mixed-norm exponents must lie in [1, inf]")
        if self.lam != 0 and self.weight is None:
            raise ConfigError("a non-zero lambda needs a weight function")

    def with_lam(self, lam, p=None, q=None):
        return MixedNormSpec(self.p if p is None else p, self.q if q is None else q,
                             lam, self.weight)

    def log_weight(self, radius):
        if self.lam == 0:
            return np.zeros_like(radius, dtype=float)
        return self.lam * eval_weight(self.weight, radius)


def _log_abs(values):
    with np.errstate(divide="ignore"):
        return np.log(np.abs(values))


def _log_lpq(logv, d, p, q, cell_inner=1.0, cell_outer=1.0):
    """Log of the iterated ``(p, q)`` norm; inner over the first ``d`` axes."""
    inner_axes = tuple(range(d))
    if np.isinf(p):
        inner = np.max(logv, axis=inner_axes)
    else:
        inner = (logsumexp(p * logv, axis=inner_axes) + np.log(cell_inner)) / p
    if np.isinf(q):
        return float(np.max(inner))
    return float((logsumexp(q * inner) + np.log(cell_outer)) / q)


def _exp_guard(logval, what):
    if logval > _LOG_MAX:
        warnings.warn(f"{what} overflows (log value {logval:.6g})", NormOverflow,
                      stacklevel=3)
        return np.inf
    return float(np.exp(logval))


def log_mixed_norm(F, spec):
    """Natural log of ``||F||_{L^{p,q}_m}`` (``-inf`` for the zero function)."""
    logv = _log_abs(F.values) + spec.log_weight(F.radius())
    cx, cxi = F.cells
    return _log_lpq(logv, F.d, spec.p, spec.q, cx, cxi)


def mixed_norm(F, spec):
    """Riemann-sum ``L^{p,q}`` norm: inner ``p`` over ``x``, outer ``q`` over ``xi``.

    Returns ``inf`` (with a :class:`NormOverflow` warning) when the value
    exceeds the float range.
    """
    return _exp_guard(log_mixed_norm(F, spec), "mixed norm")


def _cube_partition(R, h):
    m = 1.0 / h
    if abs(m - round(m)) > 1e-9 or abs(R - round(R)) > 1e-9:
        raise DomainError("amalgam norms need 1/h and R to be integers")
    return int(round(2 * R)), int(round(m))


def cube_maxima(F):
    """``a_kn = max |F|`` over each half-open unit cube ``(k, n) + [0, 1)^{2d}``.

    Returns the array of maxima and the integer cube corners per axis.
    """
    cx, mx = _cube_partition(F.Rx, F.hx)
    cxi, mxi = _cube_partition(F.Rxi, F.hxi)
    d = F.d
    shape = []
    for _ in range(d):
        shape += [cx, mx]
    for _ in range(d):
        shape += [cxi, mxi]
    a = np.abs(F.values).reshape(shape).max(axis=tuple(range(1, 4 * d, 2)))
    corners = ([np.arange(cx) - int(round(F.Rx))] * d
               + [np.arange(cxi) - int(round(F.Rxi))] * d)
    return a, corners


def log_sequence_norm(a, points, spec):
    """Log of the weighted ``l^{p,q}`` norm of ``a`` (inner over the first half of axes).

    ``points`` lists one coordinate array per axis giving the physical
    position used in the weight.
    """
    coords = np.meshgrid(*points, indexing="ij", sparse=True)
    radius = np.sqrt(sum(np.asarray(c, dtype=float) ** 2 for c in coords))
    logv = _log_abs(a) + spec.log_weight(radius)
    return _log_lpq(logv, a.ndim // 2, spec.p, spec.q)


def log_amalgam_norm(F, spec):
    a, corners = cube_maxima(F)
    return log_sequence_norm(a, corners, spec)


def amalgam_norm(F, spec):
    """Weighted ``l^{p,q}`` norm of the unit-cube maxima of ``|F|``."""
    return _exp_guard(log_amalgam_norm(F, spec), "amalgam norm")


def convolve(F, G):
    """Linear convolution ``F * G`` via zero-padded FFT, cropped to the input grid."""
    if not F.same_grid(G):
        raise GridMismatch("convolution needs identical phase-plane grids")
    flags = []
    if not (F.adequate and G.adequate):
        flags.append("inadequate-truncation")
    full = fftconvolve(F.values, G.values, mode="full")
    cx, cxi = F.cells
    sl = tuple(slice(n // 2, n // 2 + n) for n in F.values.shape)
    return F.like(full[sl] * cx * cxi, flags)


def young_exponents(lam, L):
    """Weight exponents ``(mu, nu)`` on the right of the weighted Young bound."""
    if lam >= 0:
        return lam * L, lam * L
    return lam / L, abs(lam)


@dataclass
class InequalityReport:
    """Both sides of an empirical inequality and the implied constant."""

    lhs: float
    rhs: float
    constant: float
    passed: bool
    grid: dict
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"lhs": self.lhs, "rhs": self.rhs, "constant": self.constant,
                "pass": self.passed, "grid": self.grid, "details": self.details}


def _report(log_lhs, log_rhs, grid, details):
    const = log_lhs - log_rhs
    finite = np.isfinite(const) or (log_lhs == -np.inf and np.isfinite(log_rhs))
    constant = float(np.exp(const)) if np.isfinite(const) else (
        0.0 if log_lhs == -np.inf else np.inf)
    if np.isfinite(const) and const > _LOG_MAX:
        constant, finite = np.inf, False
    with np.errstate(over="ignore"):
        lhs, rhs = float(np.exp(log_lhs)), float(np.exp(log_rhs))
    details = dict(details, log_lhs=log_lhs, log_rhs=log_rhs)
    return InequalityReport(lhs, rhs, constant, bool(finite), grid, details)


def _require_L(weight):
    if weight is None or weight.L is None:
        raise ConfigError("inequality verifiers need a weight with a certified L")
    return weight.L


def verify_young(F, G, spec):
    """Empirical constant in ``||F*G||_{p,q,lam} <= C ||F||_{p,q,mu} ||G||_{1,nu}``."""
    lam = spec.lam
    L = _require_L(spec.weight) if lam != 0 else (spec.weight.L if spec.weight else 1.0)
    mu, nu = young_exponents(lam, L or 1.0)
    conv = convolve(F, G)
    log_lhs = log_mixed_norm(conv, spec)
    log_f = log_mixed_norm(F, spec.with_lam(mu))
    log_g = log_mixed_norm(G, spec.with_lam(nu, 1, 1))
    return _report(log_lhs, log_f + log_g, {"h": F.hx, "R": F.Rx},
                   {"mu": mu, "nu": nu, "lam": lam, "p": spec.p, "q": spec.q})


def verify_amalgam_conv(F, G, lam, weight):
    """Empirical constant in ``||F*G||_{W(L^inf_lam)} <= C ||F||_{inf,lam L} ||G||_{1,lam L^2}``.

    ``lam = 0`` gives the unweighted reference value used for continuity checks.
    """
    if lam < 0:
        raise DomainError("the amalgam convolution bound is stated for lam >= 0")
    L = _require_L(weight)
    base = MixedNormSpec(np.inf, np.inf, 0.0, weight)
    conv = convolve(F, G)
    log_lhs = log_amalgam_norm(conv, base.with_lam(lam))
    log_f = log_mixed_norm(F, base.with_lam(lam * L))
    log_g = log_mixed_norm(G, base.with_lam(lam * L * L, 1, 1))
    return _report(log_lhs, log_f + log_g, {"h": F.hx, "R": F.Rx},
                   {"lam": lam, "L": L})


def _lattice_offsets(R, h, step, count):
    m = step / h
    aligned = abs(m - round(m)) < 1e-9 * max(1.0, m)
    kmax = int(np.floor((R - h) / step + 1e-9))
    if count is None:
        count = kmax
    elif count > kmax:
        raise DomainError(f"lattice radius {count} exceeds the grid extent ({kmax})")
    k = np.arange(-count, count + 1)
    idx = np.rint((k * step + R) / h).astype(int)
    return count, idx, aligned


def restrict_to_lattice(F, alpha, beta, K=None, N=None):
    """Samples ``F(alpha k, beta n)`` on the largest symmetric lattice box in the grid.

    Lattice points that are not grid nodes are taken at the nearest node and
    the result carries a ``"nearest-node"`` flag in ``lattice_flags``.
    """
    K, ix, ok_x = _lattice_offsets(F.Rx, F.hx, alpha, K)
    N, ixi, ok_xi = _lattice_offsets(F.Rxi, F.hxi, beta, N)
    sel = np.ix_(*([ix] * F.d + [ixi] * F.d))
    lat = LatticeSpec(alpha, beta, F.d, K, N)
    out = CoefficientArray(F.values[sel], lat)
    out.lattice_flags = () if (ok_x and ok_xi) else ("nearest-node",)
    return out


def log_lattice_norm(c, spec):
    lat = c.lattice
    pts = ([lat.k_range() * lat.alpha0] * lat.d + [lat.n_range() * lat.beta0] * lat.d)
    return log_sequence_norm(c.values, pts, spec)


def verify_sampling(F, alpha, beta, spec):
    """Empirical constant in ``||F|_lattice||_{l^{p,q}_lam} <= C ||F||_{W(L^{p,q}_{lam L})}``."""
    if spec.lam < 0:
        raise DomainError("the sampling bound is stated for lam >= 0")
    L = _require_L(spec.weight) if spec.lam else 1.0
    c = restrict_to_lattice(F, alpha, beta)
    log_lhs = log_lattice_norm(c, spec)
    log_rhs = log_amalgam_norm(F, spec.with_lam(spec.lam * L))
    return _report(log_lhs, log_rhs, {"h": F.hx, "R": F.Rx},
                   {"alpha": alpha, "beta": beta, "lam": spec.lam,
                    "flags": list(getattr(c, "lattice_flags", ()))})


def weighted_lp_norm(u, lam, weight, p=np.inf):
    """``||exp(lam w(|x|)) u||_{L^p}`` of a sampled function."""
    x = np.sqrt(sum(c ** 2 for c in u.coords()))
    logv = _log_abs(u.values) + (lam * eval_weight(weight, x) if lam else 0.0)
    if np.isinf(p):
        return _exp_guard(float(np.max(logv)), "weighted norm")
    return _exp_guard(float((logsumexp(p * logv) + np.log(u.cell)) / p), "weighted norm")
