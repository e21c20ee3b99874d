"""Köthe matrices on lattices and multi-index sets, and a summability test.

Entries ``a(sigma, k)`` are generated in the log domain from ``|sigma|``:
the Euclidean norm of ``(alpha0 k, beta0 n)`` on a lattice, or
``|gamma| = gamma_1 + ... + gamma_d`` on multi-indices.

Infinite sums are judged from dyadic sup-norm shells. The verdict is
``"convergent"`` when the last three shell ratios are at most ``0.9``,
``"divergent"`` when the last shells do not decrease, and
``"inconclusive"`` otherwise.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from tfnuclear.errors import ConditionFailure, ConfigError
from tfnuclear.lattice import CoefficientArray, LatticeSpec
from tfnuclear.weights import certify_gamma, eval_weight

DEFAULT_RADII = (2, 4, 8, 16, 32, 64, 128)
R_MAX = 0.9
CONFIRM = 3
C0_DECAY = 10.0
_LOG_MAX = np.log(np.finfo(float).max)


@dataclass
class KoetheMatrix:
    """A positive matrix ``a(sigma, k)`` given by ``log_entry(|sigma|, k)``."""

    name: str
    log_entry: object
    lattice: LatticeSpec | None = None
    d: int = 1

    def __post_init__(self):
        if self.lattice is not None:
            self.d = self.lattice.d

    @property
    def index_set(self):
        return "lattice" if self.lattice is not None else "multi_index"

    @property
    def dim(self):
        """Number of integer coordinates of an index."""
        return 2 * self.d if self.lattice is not None else self.d

    def log_a(self, radius, k):
        return np.asarray(self.log_entry(np.asarray(radius, dtype=float), k), dtype=float)

    def entry(self, radius, k):
        with np.errstate(over="ignore"):
            return np.exp(self.log_a(radius, k))

    def box(self, radius):
        """Index norms and sup-norm radii for all indices with sup-norm ``<= radius``."""
        if self.lattice is not None:
            lat = self.lattice
            r = np.arange(-radius, radius + 1)
            grids = np.meshgrid(*([r] * self.dim), indexing="ij", sparse=True)
            sup = np.zeros((2 * radius + 1,) * self.dim, dtype=int)
            sq = np.zeros(sup.shape)
            for i, g in enumerate(grids):
                sup = np.maximum(sup, np.abs(g))
                step = lat.alpha0 if i < self.d else lat.beta0
                sq = sq + (step * g) ** 2
            return np.sqrt(sq).ravel(), sup.ravel()
        r = np.arange(0, radius + 1)
        grids = np.meshgrid(*([r] * self.dim), indexing="ij", sparse=True)
        total = sum(grids)
        sup = np.zeros((radius + 1,) * self.dim, dtype=int)
        for g in grids:
            sup = np.maximum(sup, g)
        return (total + np.zeros(sup.shape)).ravel().astype(float), sup.ravel()

    def compatible(self, c):
        if self.lattice is None:
            return c.lattice is None and c.d == self.d
        lat = c.lattice
        return (lat is not None and lat.d == self.d
                and np.isclose(lat.alpha0, self.lattice.alpha0)
                and np.isclose(lat.beta0, self.lattice.beta0))

    def spot_check(self, n=1000, seed=0, radius=64, k_max=20):
        """Positivity and monotonicity in ``k`` on random ``(sigma, k)``."""
        rng = np.random.default_rng(seed)
        norms, _ = self.box(min(radius, 8 if self.dim > 2 else radius))
        r = norms[rng.integers(0, norms.size, n)]
        k = rng.integers(1, k_max, n)
        la = np.array([self.log_a(ri, ki) for ri, ki in zip(r, k)])
        lb = np.array([self.log_a(ri, ki + 1) for ri, ki in zip(r, k)])
        return bool(np.all(np.isfinite(la)) and np.all(lb >= la - 1e-12 * np.abs(la)))


def koethe_from_weight(w, lattice):
    """``a(sigma, k) = exp(k w(|sigma|))``."""
    return KoetheMatrix(f"weight:{w.family}", lambda r, k: k * eval_weight(w, r), lattice)


def constant_matrix(lattice=None, d=1):
    """``a(sigma, k) = e^k``."""
    return KoetheMatrix("constant", lambda r, k: k + 0.0 * r, lattice, d)


def polynomial_matrix(lattice=None, d=1):
    """``a(sigma, k) = (1 + |sigma|)^k``."""
    return KoetheMatrix("polynomial", lambda r, k: k * np.log1p(r), lattice, d)


def oscillatory_matrix(lattice=None, d=1):
    """``a(sigma, k) = exp(k g(|sigma|))`` with ``g`` switching on and off between dyadic shells.

    ``g(r) = log(1+r) (1 + cos(pi log2(1+r)))`` makes consecutive dyadic
    shells alternate between tiny and large contributions, so the shell
    heuristic can reach neither geometric decay nor monotone growth.
    """
    def g(r, k):
        lr = np.log1p(r)
        return k * lr * (1 + np.cos(np.pi * np.log2(1 + r)))
    return KoetheMatrix("oscillatory", g, lattice, d)


MATRICES = {"constant": constant_matrix, "polynomial": polynomial_matrix,
            "oscillatory": oscillatory_matrix}


def named_matrix(name, lattice=None, d=1, weight=None):
    if name == "weight":
        if weight is None or lattice is None:
            raise ConfigError("the weight matrix needs a weight and a lattice")
        return koethe_from_weight(weight, lattice)
    if name not in MATRICES:
        raise ConfigError(f"unknown matrix {name!r}; choose from "
                          f"{sorted(MATRICES) + ['weight']}")
    return MATRICES[name](lattice, d)


def _exp(v):
    return np.inf if v > _LOG_MAX else float(np.exp(v))


def lambda_norm(c, A, k, p=1):
    """``(sum |c_sigma|^p a(sigma,k)^p)^(1/p)`` for ``p = 1``, or the sup for ``p = inf``."""
    if not A.compatible(c):
        raise ConfigError("coefficient array and matrix use different index sets")
    with np.errstate(divide="ignore"):
        logc = np.log(np.abs(c.values))
    if not np.any(np.isfinite(logc)):
        return 0.0
    v = np.where(np.isneginf(logc), -np.inf, logc + A.log_a(c.norms(), k))
    if np.isinf(p):
        return _exp(float(v.max()))
    if p == 1:
        return _exp(float(logsumexp(v)))
    return _exp(float(logsumexp(p * v) / p))


@dataclass
class GPResult:
    k: int
    m: int
    radii: list
    shell_log_sums: list
    partial_sums: list
    ratios: list
    verdict: str
    tail: float

    def to_dict(self):
        shells = [{"radius": r, "sum": float(np.exp(s)), "ratio": q}
                  for r, s, q in zip(self.radii, self.shell_log_sums,
                                     [None] + self.ratios)]
        return {"k": self.k, "m": self.m, "shells": shells,
                "partial_sums": self.partial_sums, "verdict": self.verdict,
                "tail": self.tail}


@dataclass
class GPReport:
    k: int
    m_found: int | None
    results: list = field(default_factory=list)

    @property
    def verdict(self):
        if self.m_found is not None:
            return "convergent"
        if self.results and all(r.verdict == "divergent" for r in self.results):
            return "divergent"
        return "inconclusive"

    def result(self, m):
        for r in self.results:
            if r.m == m:
                return r
        raise KeyError(m)

    @property
    def partial_sums(self):
        chosen = self.result(self.m_found) if self.m_found is not None else self.results[-1]
        return list(zip(chosen.radii, chosen.partial_sums))

    def to_dict(self):
        return {"k": self.k, "m_found": self.m_found, "verdict": self.verdict,
                "results": [r.to_dict() for r in self.results]}


def _shell_classify(log_shells):
    ratios = np.exp(np.diff(log_shells))
    last = ratios[-CONFIRM:]
    if last.size == CONFIRM and np.all(last <= R_MAX):
        q = float(last.max())
        return ratios, "convergent", float(np.exp(log_shells[-1]) / (1 - q))
    if last.size == CONFIRM and np.all(last >= 1.0):
        return ratios, "divergent", np.inf
    return ratios, "inconclusive", np.nan


def shell_log_sums(A, k, m, radii=DEFAULT_RADII):
    """Log of the sum of ``a(sigma,k)/a(sigma,m)`` over each sup-norm shell."""
    radii = list(radii)
    norms, sup = A.box(radii[-1])
    terms = A.log_a(norms, k) - A.log_a(norms, m)
    edges = [-1] + radii
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (sup > lo) & (sup <= hi)
        out.append(float(logsumexp(terms[sel])))
    return np.array(out)


def gp_test(A, k, m_candidates, radii=DEFAULT_RADII):
    """Shell test of ``sum_sigma a(sigma,k) / a(sigma,m) < inf`` for each candidate ``m``.

    Shells are ``{r_{i-1} < |index|_inf <= r_i}``. ``tail`` is the geometric
    extrapolation ``last shell / (1 - ratio)`` using the largest of the
    confirming ratios.
    """
    radii = list(radii)
    if len(radii) < CONFIRM or np.any(np.diff(radii) <= 0):
        raise ConfigError("radii must be increasing with at least three values")
    report = GPReport(int(k), None)
    for m in m_candidates:
        logs = shell_log_sums(A, k, m, radii)
        ratios, verdict, tail = _shell_classify(logs)
        partial = np.exp(np.logaddexp.accumulate(logs))
        res = GPResult(int(k), int(m), radii, logs.tolist(), partial.tolist(),
                       ratios.tolist(), verdict, tail)
        report.results.append(res)
        if verdict == "convergent" and report.m_found is None:
            report.m_found = int(m)
    return report


def comparison_partial_sums(A, a, b, k, m, radii=DEFAULT_RADII):
    """Partial sums of ``exp(-(m-k) a) (1 + |sigma|)^(-b (m-k))`` over the same boxes."""
    radii = list(radii)
    norms, sup = A.box(radii[-1])
    terms = -(m - k) * a - b * (m - k) * np.log1p(norms)
    return [float(np.exp(logsumexp(terms[sup <= r]))) for r in radii]


def c0_membership(c, A, k_ladder):
    """Per ``k``: does ``|c_sigma| a(sigma,k)`` drop tenfold from the half-radius shell to the edge?"""
    if not A.compatible(c):
        raise ConfigError("coefficient array and matrix use different index sets")
    radii = c.radii()
    R = int(radii.max())
    outer, inner = radii == R, radii == R // 2
    with np.errstate(divide="ignore"):
        logc = np.log(np.abs(c.values))
    norms = c.norms()
    rows = []
    for k in k_ladder:
        v = np.where(np.isneginf(logc), -np.inf, logc + A.log_a(norms, k))
        lo, li = float(v[outer].max()), float(v[inner].max())
        ok = lo == -np.inf or lo <= li - np.log(C0_DECAY)
        rows.append({"k": int(k), "log_outer": lo, "log_half": li,
                     "verdict": "pass" if ok else "fail"})
    return rows


def nuclearity_verdict_weight(w, lattice, ks=(1, 2, 3), radii=DEFAULT_RADII):
    """Shell test over ``exp(k w(|sigma|))`` at ``m = k + ceil(2d/b) + 1`` for each ``k``.

    Every ``m`` from ``k + 1`` up to that bound is tried so the smallest
    convergent ``m`` is reported as well.
    """
    try:
        a, b = certify_gamma(w)
    except ConditionFailure as exc:
        return {"status": "inapplicable", "nuclear": None,
                "reason": str(exc), "reports": []}
    A = koethe_from_weight(w, lattice)
    gap = int(np.ceil(2 * lattice.d / b)) + 1
    reports = []
    for k in ks:
        m = k + gap
        rep = gp_test(A, k, range(k + 1, m + 1), radii)
        reports.append({"k": k, "m_bound": m, "m_found": rep.m_found,
                        "verdict_at_bound": rep.result(m).verdict, "report": rep})
    nuclear = all(r["verdict_at_bound"] == "convergent" for r in reports)
    return {"status": "ok", "nuclear": nuclear, "a": a, "b": b, "reports": reports}
