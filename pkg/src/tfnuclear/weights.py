"""Weight functions, their structural constants, and Young conjugates.

A weight function is a continuous increasing ``w: [0, inf) -> [0, inf)``
that is quasi-subadditive (``w(2t) <= L (w(t) + 1)``), sublinear
(``w(t) = o(t)``), at least logarithmic (``w(t) >= a + b log(1 + t)``),
and such that ``phi(t) = w(exp(t))`` is convex.

Every certificate computed here is relative to the grid it was computed
on. Limits cannot be decided from finite data, so the asymptotic checks
return one of three verdicts: ``"pass"``, ``"fail"`` or ``"inconclusive"``.
"""

from dataclasses import dataclass, field

import numpy as np

from tfnuclear.errors import ConditionFailure, ConfigError, DomainError
from tfnuclear.serialize import array_hash, write_csv

DEFAULT_CAP = 1e6
NODES_PER_DECADE = 512
TAIL_EPS = 1e-2

FAMILIES = ("log_power", "gevrey_root", "custom")


@dataclass
class WeightFunction:
    """A weight ``w`` with its structural constants.

    Use the classmethods :meth:`log_power`, :meth:`gevrey_root`,
    :meth:`custom` and :meth:`from_callable` rather than the raw
    constructor. ``L``, ``a`` and ``b`` start as ``None`` and are filled in
    by :func:`certify_alpha` and :func:`certify_gamma`.
    """

    family: str
    params: dict
    domain_cap: float = DEFAULT_CAP
    L: float | None = None
    a: float | None = None
    b: float | None = None
    certificates: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown weight family {self.family!r}")
        if not self.domain_cap > 0:
            raise ConfigError("domain_cap must be positive")
        if self.family == "log_power" and not self.params.get("beta", 0) > 0:
            raise ConfigError("log_power needs beta > 0")
        if self.family == "gevrey_root" and not self.params.get("s", 0) > 1:
            raise ConfigError("gevrey_root needs s > 1")
        if self.family == "custom":
            t = np.asarray(self.params["t"], dtype=float)
            w = np.asarray(self.params["w"], dtype=float)
            if t.ndim != 1 or t.shape != w.shape or t.size < 2:
                raise ConfigError("custom weight needs matching 1-d sample arrays")
            if np.any(np.diff(t) <= 0):
                raise ConfigError("custom weight abscissae must be strictly increasing")
            if np.any(np.diff(w) < 0):
                raise ConfigError("custom weight samples must be non-decreasing")
            if t[0] > 0 or w[0] < 0:
                raise ConfigError("custom weight must start at t=0 with w(0) >= 0")
            self.params = {"t": t, "w": w}
            self.domain_cap = min(self.domain_cap, float(t[-1]))

    @classmethod
    def log_power(cls, beta=1.0, domain_cap=DEFAULT_CAP):
        """``w(t) = log(1 + t) ** beta``."""
        return cls("log_power", {"beta": float(beta)}, domain_cap)

    @classmethod
    def gevrey_root(cls, s=2.0, domain_cap=DEFAULT_CAP):
        """``w(t) = t ** (1 / s)`` with ``s > 1``."""
        return cls("gevrey_root", {"s": float(s)}, domain_cap)

    @classmethod
    def custom(cls, samples, domain_cap=np.inf):
        """Piecewise-linear interpolant of monotone ``(t, w)`` samples."""
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != 2 or samples.shape[1] != 2:
            raise ConfigError("custom samples must be a list of [t, w] pairs")
        return cls("custom", {"t": samples[:, 0], "w": samples[:, 1]},
                   min(domain_cap, samples[-1, 0]))

    @classmethod
    def from_callable(cls, fn, domain_cap=DEFAULT_CAP, per_decade=NODES_PER_DECADE):
        """Tabulate ``fn`` on the default log grid and wrap it as a custom weight."""
        t = log_grid(domain_cap, per_decade)
        return cls.custom(np.column_stack([t, fn(t)]), domain_cap)

    @classmethod
    def from_json(cls, doc):
        if not isinstance(doc, dict) or "family" not in doc:
            raise ConfigError("weight definition needs a 'family' key")
        cap = float(doc.get("domain_cap", DEFAULT_CAP))
        fam = doc["family"]
        try:
            if fam == "log_power":
                return cls.log_power(doc["beta"], cap)
            if fam == "gevrey_root":
                return cls.gevrey_root(doc["s"], cap)
            if fam == "custom":
                return cls.custom(doc["samples"], doc.get("domain_cap", np.inf))
        except KeyError as exc:
            raise ConfigError(f"weight definition missing {exc}") from None
        raise ConfigError(f"unknown weight family {fam!r}")

    def to_dict(self):
        out = {"family": self.family, "domain_cap": self.domain_cap}
        if self.family == "custom":
            out["samples"] = np.column_stack([self.params["t"], self.params["w"]])
        else:
            out.update(self.params)
        out.update({"L": self.L, "a": self.a, "b": self.b,
                    "certificates": self.certificates})
        return out

    def __call__(self, t):
        return eval_weight(self, t)


def eval_weight(w, t):
    """Evaluate ``w`` at ``t`` (scalar or array); vector callers pass ``|z|``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise DomainError("weight evaluated at negative t")
    if np.any(t > w.domain_cap * (1 + 1e-12)):
        raise DomainError(f"weight evaluated beyond domain cap {w.domain_cap:g}")
    if w.family == "log_power":
        out = np.log1p(t) ** w.params["beta"]
    elif w.family == "gevrey_root":
        out = t ** (1.0 / w.params["s"])
    else:
        out = np.interp(t, w.params["t"], w.params["w"])
    return out if out.ndim else float(out)


def eval_weight_norm(w, z, axis=-1):
    """``w(|z|)`` with the Euclidean norm taken along ``axis``."""
    return eval_weight(w, np.linalg.norm(np.asarray(z, dtype=float), axis=axis))


def log_grid(cap=DEFAULT_CAP, per_decade=NODES_PER_DECADE, t_min=1e-3):
    """``0`` followed by ``per_decade`` log-spaced nodes per decade up to ``cap``."""
    decades = np.log10(cap / t_min)
    n = int(np.ceil(decades * per_decade)) + 1
    return np.concatenate([[0.0], np.geomspace(t_min, cap, n)])


def _grid_for(w, t_grid):
    if t_grid is None:
        t_grid = log_grid(w.domain_cap)
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise DomainError("t_grid must be strictly increasing")
    return t_grid


def certify_alpha(w, t_grid=None, L_cap=1e6):
    """Smallest ``L >= 1`` with ``w(2t) <= L (w(t) + 1)`` on the grid.

    The value is the exact grid supremum of ``w(2t) / (w(t) + 1)``, which is
    what a bisection over ``[1, L_cap]`` converges to. It is stored in
    ``w.L`` together with the grid hash.
    """
    t = _grid_for(w, t_grid)
    t = t[2 * t <= w.domain_cap]
    ratio = eval_weight(w, 2 * t) / (eval_weight(w, t) + 1.0)
    L = max(1.0, float(np.max(ratio)))
    report = {"L": L, "t_worst": float(t[np.argmax(ratio)]), "nodes": int(t.size),
              "grid_hash": array_hash(t)}
    if not np.isfinite(L) or L > L_cap:
        raise ConditionFailure(f"no L below {L_cap:g} satisfies the doubling bound", report)
    w.L = L
    w.certificates["alpha"] = report
    return L


def _decade_slopes(w, t_max, n_decades=4):
    """Secant slopes of ``w`` against ``log(1 + t)`` over the last decades."""
    slopes, mids = [], []
    for j in range(n_decades):
        t2 = t_max / 10.0 ** j
        t1 = t2 / 10.0
        u1, u2 = np.log1p(t1), np.log1p(t2)
        slopes.append((eval_weight(w, t2) - eval_weight(w, t1)) / (u2 - u1))
        mids.append(0.5 * (u1 + u2))
    return np.array(slopes[::-1]), np.array(mids[::-1])


def certify_gamma(w, t_grid=None, collapse_ratio=0.25):
    """Largest ``b`` (and matching ``a``) with ``w(t) >= a + b log(1 + t)``.

    On a finite grid any ``b`` admits some ``a``, so feasibility is taken to
    mean that ``w(t) - b log(1 + t)`` is non-decreasing over the last decade
    of the grid, which makes the grid minimum a credible global lower
    bound. The largest such ``b`` is the minimum local slope of ``w``
    against ``log(1 + t)`` in that decade.

    The decade secant slopes are also extrapolated with ``b_inf + c / u``.
    If the extrapolated limit is below ``collapse_ratio`` times the current
    slope, the slopes are heading to zero as the grid extends and the
    condition fails.
    """
    t = _grid_for(w, t_grid)
    t = t[t > 0]
    u = np.log1p(t)
    wt = eval_weight(w, t)
    tail = t >= t[-1] / 10.0
    local = np.diff(wt[tail]) / np.diff(u[tail])
    b_tail = float(np.min(local))
    slopes, mids = _decade_slopes(w, t[-1])
    design = np.column_stack([np.ones_like(mids), 1.0 / mids])
    b_inf = float(np.linalg.lstsq(design, slopes, rcond=None)[0][0])
    report = {"b_tail": b_tail, "b_extrapolated": b_inf,
              "decade_slopes": slopes, "grid_hash": array_hash(t)}
    if b_tail <= 0 or b_inf <= collapse_ratio * b_tail:
        raise ConditionFailure("only b <= 0 is feasible as the grid extends", report)
    b = min(b_tail, b_inf)
    # full grid including t = 0 for the lower bound
    t_all = _grid_for(w, t_grid)
    a = float(np.min(eval_weight(w, t_all) - b * np.log1p(t_all)))
    report.update({"a": a, "b": b})
    w.a, w.b = a, b
    w.certificates["gamma"] = report
    return a, b


def gamma_offset(w, b, t_grid=None):
    """For a fixed ``b``: the best ``a`` and whether the tail trend supports it."""
    t = _grid_for(w, t_grid)
    g = eval_weight(w, t) - b * np.log1p(t)
    tail = t >= t[-1] / 10.0
    trend_ok = bool(np.all(np.diff(g[tail]) >= -1e-12 * (1 + np.abs(g[tail][1:]))))
    return float(np.min(g)), trend_ok


def _tail_verdict(t, ratio, eps):
    tail = t >= t[-1] / 10.0
    r = ratio[tail]
    last = float(r[-1])
    monotone = bool(np.all(np.diff(r) <= 1e-12 * np.abs(r[:-1])))
    decreasing = last < (1 - 1e-2) * float(r[0])
    if last < eps and monotone:
        verdict = "pass"
    elif not decreasing:
        verdict = "fail"
    else:
        verdict = "inconclusive"
    return verdict, last, monotone


@dataclass(frozen=True)
class TailReport:
    verdict: str
    tail_ratio: float
    monotone_tail: bool
    t: np.ndarray
    ratio: np.ndarray

    def to_dict(self, points=64):
        idx = np.unique(np.linspace(0, self.t.size - 1, points).astype(int))
        return {"verdict": self.verdict, "tail_ratio": self.tail_ratio,
                "monotone_tail": self.monotone_tail,
                "trace": {"t": self.t[idx], "ratio": self.ratio[idx]}}


def check_little_o(w, t_grid=None, eps=TAIL_EPS):
    """Verdict on ``w(t) = o(t)`` from ``w(t) / t`` over the last grid decade."""
    t = _grid_for(w, t_grid)
    t = t[t > 0]
    ratio = eval_weight(w, t) / t
    verdict, last, mono = _tail_verdict(t, ratio, eps)
    return TailReport(verdict, last, mono, t, ratio)


def compare_weights(w1, w2, t_grid=None, eps=TAIL_EPS):
    """Verdict on ``w1(t) = o(w2(t))``; nodes where ``w2 < 1e-12`` are skipped."""
    t = _grid_for(w1, t_grid)
    t = t[t <= min(w1.domain_cap, w2.domain_cap)]
    v2 = eval_weight(w2, t)
    keep = v2 >= 1e-12
    t, v2 = t[keep], v2[keep]
    ratio = eval_weight(w1, t) / v2
    verdict, last, mono = _tail_verdict(t, ratio, eps)
    return TailReport(verdict, last, mono, t, ratio)


def phi(w, t):
    """``phi(t) = w(exp(t))`` for ``t >= 0``."""
    t = np.asarray(t, dtype=float)
    return eval_weight(w, np.minimum(np.exp(t), w.domain_cap))


@dataclass(frozen=True)
class YoungConjugateTable:
    """Tabulated ``phi*(s) = sup_{t >= 0} (t s - phi(t))``."""

    s_grid: np.ndarray
    values: np.ndarray
    argmax_t: np.ndarray
    cap_limited: np.ndarray
    t_max: float

    def to_csv(self, path):
        write_csv(path, ["s", "phi_star", "argmax_t"],
                  zip(self.s_grid, self.values, self.argmax_t))

    def convexity_defect(self):
        """Most negative normalized second difference (0 if convex)."""
        s, v = self.s_grid, self.values
        slopes = np.diff(v) / np.diff(s)
        return float(min(0.0, np.min(np.diff(slopes)))) if slopes.size > 1 else 0.0


def young_conjugate(w, s_grid, n_coarse=4096, passes=3, points_per_pass=21):
    """Young conjugate of ``phi(t) = w(exp(t))`` on ``s_grid``.

    The supremum is taken over a coarse log-spaced ``t`` grid on
    ``[0, log(domain_cap)]`` and then refined around the maximizer; each
    pass makes the local spacing 10 times finer. Entries whose maximizer
    sits on the upper end of the ``t`` range are flagged cap-limited.
    """
    s = np.asarray(s_grid, dtype=float)
    if s.ndim != 1 or np.any(np.diff(s) <= 0) or s[0] < 0:
        raise DomainError("s_grid must be increasing and non-negative")
    t_max = float(np.log(w.domain_cap))
    t = np.concatenate([[0.0], np.geomspace(t_max * 1e-6, t_max, n_coarse)])
    ph = phi(w, t)
    obj = s[:, None] * t[None, :] - ph[None, :]
    idx = np.argmax(obj, axis=1)
    cap_limited = idx == t.size - 1
    lo = t[np.maximum(idx - 1, 0)]
    hi = t[np.minimum(idx + 1, t.size - 1)]
    best_t = t[idx]
    best = obj[np.arange(s.size), idx]
    frac = np.linspace(0.0, 1.0, points_per_pass)
    for _ in range(passes):
        tt = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
        vals = s[:, None] * tt - phi(w, tt)
        j = np.argmax(vals, axis=1)
        cand = vals[np.arange(s.size), j]
        better = cand > best
        best = np.where(better, cand, best)
        best_t = np.where(better, tt[np.arange(s.size), j], best_t)
        step = (hi - lo) / (points_per_pass - 1)
        lo = np.maximum(best_t - step, 0.0)
        hi = np.minimum(best_t + step, t_max)
    return YoungConjugateTable(s, best, best_t, cap_limited, t_max)


def biconjugate(table, t_values):
    """``(phi*)*(t) = max_s (t s - phi*(s))`` over the tabulated ``s`` grid."""
    t = np.asarray(t_values, dtype=float)
    return np.max(t[:, None] * table.s_grid[None, :] - table.values[None, :], axis=1)


def biconjugate_error(w, table, interior=0.8, n=400):
    """Relative biconjugation error on the interior of the tabulated slope range.

    Only ``t`` whose supporting slope lies inside the table can be
    recovered, so the test range is the central ``interior`` fraction of
    ``[min argmax_t, max argmax_t]`` over non-cap-limited entries.
    """
    ok = ~table.cap_limited
    lo, hi = table.argmax_t[ok].min(), table.argmax_t[ok].max()
    margin = 0.5 * (1 - interior) * (hi - lo)
    t = np.linspace(lo + margin, hi - margin, n)
    exact = phi(w, t)
    err = np.abs(biconjugate(table, t) - exact) / (1 + np.abs(exact))
    return float(np.max(err)), t
