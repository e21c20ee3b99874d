"""Lattice parameters and coefficient arrays indexed by lattices or multi-indices."""

from dataclasses import dataclass

import numpy as np

from tfnuclear.errors import ConfigError
from tfnuclear.serialize import write_csv

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class LatticeSpec:
    """The truncated lattice ``alpha0 Z^d x beta0 Z^d`` with ``|k| <= K``, ``|n| <= N``."""

    alpha0: float = 1.0
    beta0: float = 1.0
    d: int = 1
    K: int = 16
    N: int = 16

    def __post_init__(self):
        if not (self.alpha0 > 0 and self.beta0 > 0):
            raise ConfigError("lattice constants alpha0, beta0 must be positive")
        if self.d < 1 or self.K < 0 or self.N < 0:
            raise ConfigError("lattice needs d >= 1 and K, N >= 0")

    @property
    def frame_guarantee(self):
        # Gaussian windows generate frames iff alpha0 * beta0 < 2 pi under
        # the exp(-i x xi) transform convention. The relative margin keeps
        # sqrt(2 pi) ** 2 on the critical side despite rounding.
        return self.alpha0 * self.beta0 < TWO_PI * (1 - 1e-12)

    @property
    def shape(self):
        return (2 * self.K + 1,) * self.d + (2 * self.N + 1,) * self.d

    def k_range(self):
        return np.arange(-self.K, self.K + 1)

    def n_range(self):
        return np.arange(-self.N, self.N + 1)

    def with_truncation(self, K, N):
        return LatticeSpec(self.alpha0, self.beta0, self.d, K, N)

    def to_dict(self):
        return {"alpha0": self.alpha0, "beta0": self.beta0, "d": self.d,
                "K": self.K, "N": self.N, "frame_guarantee": self.frame_guarantee}


@dataclass
class CoefficientArray:
    """Complex coefficients on a truncated lattice or a multi-index box.

    Lattice arrays have shape ``(2K+1,)*d + (2N+1,)*d`` with index ``(k, n)``
    stored at offset ``(k+K, n+N)``. Multi-index arrays (``lattice is None``)
    have shape ``(G+1,)*d`` for ``gamma`` in ``{0..G}^d``.
    """

    values: np.ndarray
    lattice: LatticeSpec | None = None
    d: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.lattice is not None:
            self.d = self.lattice.d
            if self.values.shape != self.lattice.shape:
                raise ConfigError(
                    f"coefficient shape {self.values.shape} does not match lattice "
                    f"{self.lattice.shape}")
        elif self.values.ndim != self.d:
            raise ConfigError("multi-index coefficient array must have d axes")

    @property
    def is_lattice(self):
        return self.lattice is not None

    def indices(self):
        """Integer index vectors, shape ``(size, D)`` in C order."""
        if self.is_lattice:
            ranges = ([self.lattice.k_range()] * self.d
                      + [self.lattice.n_range()] * self.d)
        else:
            ranges = [np.arange(s) for s in self.values.shape]
        grids = np.meshgrid(*ranges, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def points(self):
        """Physical positions ``sigma = (alpha0 k, beta0 n)`` (or ``gamma`` itself)."""
        idx = self.indices().astype(float)
        if self.is_lattice:
            idx[:, :self.d] *= self.lattice.alpha0
            idx[:, self.d:] *= self.lattice.beta0
        return idx

    def norms(self):
        """``|sigma|`` (Euclidean) for lattices, ``|gamma| = sum gamma_j`` otherwise."""
        if self.is_lattice:
            return np.linalg.norm(self.points(), axis=1).reshape(self.values.shape)
        return self.indices().sum(axis=1).reshape(self.values.shape).astype(float)

    def radii(self):
        """Sup-norm shell radius of each entry's integer index."""
        return np.abs(self.indices()).max(axis=1).reshape(self.values.shape)

    def max_radius(self):
        return int(self.radii().max())

    def boundary_ratio(self):
        """Largest magnitude on the outermost shell over the global maximum."""
        mag = np.abs(self.values)
        top = mag.max()
        if top == 0:
            return 0.0
        r = self.radii()
        return float(mag[r == r.max()].max() / top)

    @property
    def adequate(self):
        return self.boundary_ratio() < 1e-8

    def truncate(self, K, N=None):
        """Sub-box ``|k| <= K``, ``|n| <= N`` (or ``gamma <= K`` for multi-indices)."""
        if not self.is_lattice:
            return CoefficientArray(self.values[(slice(0, K + 1),) * self.d], None, self.d)
        N = K if N is None else N
        lat = self.lattice
        sl = ((slice(lat.K - K, lat.K + K + 1),) * self.d
              + (slice(lat.N - N, lat.N + N + 1),) * self.d)
        return CoefficientArray(self.values[sl], lat.with_truncation(K, N))

    @classmethod
    def unit(cls, lattice, index):
        """Canonical basis vector ``e_eta`` at integer index ``(k..., n...)``."""
        vals = np.zeros(lattice.shape, dtype=complex)
        off = [i + lattice.K for i in index[:lattice.d]] + [
            i + lattice.N for i in index[lattice.d:]]
        vals[tuple(off)] = 1.0
        return cls(vals, lattice)

    def to_csv(self, path, weight=None):
        idx = self.indices()
        vals = self.values.ravel()
        omega = (weight(self.norms().ravel()) if weight is not None
                 else np.full(vals.size, np.nan))
        d = self.d

        def lab(v):
            return " ".join(str(int(x)) for x in v)

        if self.is_lattice:
            header = ["k", "n", "re", "im", "abs", "omega_sigma"]
            rows = ((lab(i[:d]), lab(i[d:]), c.real, c.imag, abs(c), o)
                    for i, c, o in zip(idx, vals, omega))
        else:
            header = ["gamma", "re", "im", "abs", "omega_sigma"]
            rows = ((lab(i), c.real, c.imag, abs(c), o)
                    for i, c, o in zip(idx, vals, omega))
        write_csv(path, header, rows)
