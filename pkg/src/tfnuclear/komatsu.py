"""Weight sequences, their associated functions, and condition checkers.

Sequences are stored as ``log M_p``. The associated function
``M(t) = sup_p log(t^p M_0 / M_p)`` is evaluated on a grid in ``u = log t``
so that very large ``t`` stay representable.

Also hosts the orthonormal Hermite functions and the maps between
functions and Hermite coefficient arrays.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from tfnuclear.errors import ConditionFailure, ConfigError, DomainError
from tfnuclear.grid import SampledFunction
from tfnuclear.lattice import CoefficientArray
from tfnuclear.serialize import write_csv

P_MAX = 10_000
HERMITE_BUDGET = 60
DIVERGENCE_GROWTH = 0.10
DEFAULT_H = tuple(2.0 ** j for j in range(1, 11))
DEFAULT_C = (1.0, 0.5, 0.25, 0.125)


@dataclass
class MpSequence:
    """A weight sequence ``M_p`` given by ``log M_p`` for ``0 <= p <= P_max``."""

    name: str
    family: str
    params: dict
    P_max: int = P_MAX
    _table: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.family == "factorial_power":
            if not self.params.get("s", 0) > 0:
                raise ConfigError("factorial_power needs s > 0")
        elif self.family == "exp_poly":
            if not (self.params.get("c", 0) > 0 and self.params.get("r", 0) > 0):
                raise ConfigError("exp_poly needs c > 0 and r > 0")
        elif self.family == "custom":
            logm = np.asarray(self.params["logM"], dtype=float)
            if logm.ndim != 1 or logm.size < 3 or not np.all(np.isfinite(logm)):
                raise ConfigError("custom sequence needs at least 3 finite log M_p values")
            self.params = {"logM": logm}
            self.P_max = logm.size - 1
        else:
            raise ConfigError(f"unknown sequence family {self.family!r}")
        self._table = self.log_M(np.arange(self.P_max + 1))

    @classmethod
    def factorial_power(cls, s=2.0, P_max=P_MAX):
        return cls(f"(p!)^{s:g}", "factorial_power", {"s": float(s)}, P_max)

    @classmethod
    def exp_poly(cls, c=1.0, r=2.0, P_max=P_MAX):
        return cls(f"exp({c:g} p^{r:g})", "exp_poly", {"c": float(c), "r": float(r)}, P_max)

    @classmethod
    def custom(cls, logM, name="custom"):
        return cls(name, "custom", {"logM": logM})

    @classmethod
    def from_json(cls, doc):
        if not isinstance(doc, dict) or "family" not in doc:
            raise ConfigError("sequence definition needs a 'family' field")
        fam = doc["family"]
        P = int(doc.get("P_max", P_MAX))
        if fam == "factorial_power":
            return cls.factorial_power(doc.get("s", 1.0), P)
        if fam == "exp_poly":
            return cls.exp_poly(doc.get("c", 1.0), doc.get("r", 2.0), P)
        if fam == "custom":
            if "logM" in doc:
                return cls.custom(doc["logM"], doc.get("name", "custom"))
            if "M" in doc:
                return cls.custom(np.log(np.asarray(doc["M"], dtype=float)),
                                  doc.get("name", "custom"))
        raise ConfigError(f"cannot build a sequence from {doc!r}")

    def to_dict(self):
        d = {"name": self.name, "family": self.family, "P_max": self.P_max}
        if self.family == "custom":
            d["logM"] = self.params["logM"]
        else:
            d.update(self.params)
        return d

    def log_M(self, p):
        p = np.asarray(p)
        if np.any(p < 0) or np.any(p > self.P_max):
            raise DomainError(f"index outside 0..{self.P_max}")
        if self._table is not None:
            return self._table[p]
        if self.family == "factorial_power":
            return self.params["s"] * gammaln(p + 1.0)
        if self.family == "exp_poly":
            return self.params["c"] * np.power(p.astype(float), self.params["r"])
        return self.params["logM"][p]

    @property
    def table(self):
        return self._table

    def growth_ok(self):
        """``log M_p / p`` strictly increasing over ``p`` in ``[P_max/10, P_max]``."""
        lo = max(1, self.P_max // 10)
        p = np.arange(lo, self.P_max + 1)
        q = self._table[p] / p
        return bool(p.size >= 2 and np.all(np.diff(q) > 0))


def _sup_over_p(Mp, u, include_p0, chunk=256):
    """``max_p (p u + log M_0 - log M_p)`` with argmax, brute force in blocks."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    lo = 0 if include_p0 else 1
    p = np.arange(lo, Mp.P_max + 1)
    offs = Mp.table[0] - Mp.table[lo:]
    vals = np.empty(u.size)
    arg = np.empty(u.size, dtype=int)
    for i in range(0, u.size, chunk):
        blk = np.outer(u[i:i + chunk], p) + offs
        j = np.argmax(blk, axis=1)
        arg[i:i + chunk] = p[j]
        vals[i:i + chunk] = blk[np.arange(j.size), j]
    return vals, arg


def default_u_grid(Mp, n_lin=600, n_geo=600):
    """Grid in ``u = log t`` reaching the ratio ``log(M_{P/2+1} / M_{P/2})``."""
    half = Mp.P_max // 2
    u_max = float(Mp.table[half + 1] - Mp.table[half])
    u_lo = -2.0
    if u_max <= 50:
        return np.linspace(u_lo, u_max, n_lin + n_geo)
    return np.unique(np.concatenate([np.linspace(u_lo, 50.0, n_lin),
                                     np.geomspace(50.0, u_max, n_geo)]))


@dataclass
class AssociatedFunction:
    """``M(t)`` tabulated on ``u = log t`` with the maximizing index per node."""

    parent: MpSequence
    u_grid: np.ndarray
    values: np.ndarray
    argmax_p: np.ndarray
    cap_limited: np.ndarray
    include_p0: bool = False

    @property
    def t_grid(self):
        with np.errstate(over="ignore"):
            return np.exp(self.u_grid)

    def at_log(self, u):
        """Exact ``M`` at arbitrary ``log t`` (same brute force as the table)."""
        return _sup_over_p(self.parent, u, self.include_p0)

    def __call__(self, t):
        """``M(t)`` for ``t >= 0``; ``M(0)`` is ``0`` with ``p = 0`` admitted."""
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, -np.inf if not self.include_p0 else 0.0)
        pos = t > 0
        if np.any(pos):
            out[pos] = self.at_log(np.log(t[pos]))[0]
        return out

    def to_dict(self):
        return {"parent": self.parent.to_dict(), "nodes": int(self.u_grid.size),
                "cap_limited": int(self.cap_limited.sum()),
                "include_p0": self.include_p0}

    def to_csv(self, path):
        write_csv(path, ["log_t", "M", "argmax_p", "cap_limited"],
                  zip(self.u_grid, self.values, self.argmax_p,
                      self.cap_limited.astype(int)))


def associated_function(Mp, u_grid=None, include_p0=False, max_cap_fraction=0.05):
    """Brute-force ``M(t)`` on a ``log t`` grid.

    ``include_p0`` admits ``p = 0`` in the supremum, which pins ``M(t) >= 0``;
    the default keeps ``p >= 1``. Raises :class:`DomainError` when more than
    ``max_cap_fraction`` of the nodes attain their maximum at ``P_max``.
    """
    u = default_u_grid(Mp) if u_grid is None else np.asarray(u_grid, dtype=float)
    vals, arg = _sup_over_p(Mp, u, include_p0)
    cap = arg >= Mp.P_max
    if cap.mean() > max_cap_fraction:
        raise DomainError(f"{cap.mean():.1%} of nodes are cap-limited; increase P_max "
                          "or shorten the grid")
    return AssociatedFunction(Mp, u, vals, arg, cap, include_p0)


@dataclass
class ConditionReport:
    condition: str
    holds: object
    witness: dict = field(default_factory=dict)
    evidence: dict = field(default_factory=dict)

    def to_dict(self):
        return {"condition": self.condition, "holds": self.holds,
                "witness": self.witness, "evidence": self.evidence}


def _default_P(Mp, P):
    P = Mp.P_max - 1 if P is None else int(P)
    if not 1 <= P <= Mp.P_max - 1:
        raise DomainError(f"P must lie in 1..{Mp.P_max - 1}")
    return P


def check_M1(Mp, P=None, slack=1e-12):
    """Log-convexity ``2 log M_p <= log M_{p-1} + log M_{p+1}`` for ``1 <= p <= P``."""
    P = _default_P(Mp, P)
    lm = Mp.table[:P + 2]
    p = np.arange(1, P + 1)
    gap = 2 * lm[p] - lm[p - 1] - lm[p + 1]
    tol = slack * np.maximum(1.0, np.abs(lm[p]))
    bad = p[gap > tol]
    return ConditionReport("M1", bool(bad.size == 0),
                           {"P": P} if bad.size == 0 else {},
                           {"first_violation": int(bad[0]) if bad.size else None,
                            "max_gap": float(gap.max())})


def check_M2prime(Mp, P=None, delta=0.1):
    """``M_{p+1} <= A H^p M_p`` via the growth of ``r_p = log(M_{p+1}/M_p)``.

    Fails when ``r_p / p`` increases over the whole last decade; holds with
    ``H = exp(beta + delta)`` and ``A = exp(max_p (r_p - (beta + delta) p))``
    when the residual tail is non-increasing, ``beta`` being the
    least-squares slope of ``r_p`` on ``[P/2, P]``.
    """
    P = _default_P(Mp, P)
    p = np.arange(0, P + 1)
    r = Mp.table[p + 1] - Mp.table[p]
    dec = p[max(1, P // 10):]
    growth = r[dec] / dec
    superlinear = bool(np.all(np.diff(growth) > 0))
    fit_p = p[P // 2:]
    beta, alpha = np.polyfit(fit_p, r[fit_p], 1)
    resid = r - (beta + delta) * p
    tail = resid[dec]
    evidence = {"beta": float(beta), "alpha": float(alpha),
                "ratio_growth_tail": [float(growth[0]), float(growth[-1])],
                "superlinear": superlinear}
    if superlinear:
        return ConditionReport("M2prime", False, {}, evidence)
    if np.all(np.diff(tail) <= 1e-12 * np.maximum(1.0, np.abs(tail[1:]))):
        witness = {"H": float(np.exp(beta + delta)), "A": float(np.exp(resid.max()))}
        return ConditionReport("M2prime", True, witness, evidence)
    return ConditionReport("M2prime", "inconclusive", {}, evidence)


def _b_required(table, P, C, H):
    s = np.arange(0, P + 1)[:, None]
    p = np.arange(0, P + 1)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        slog = np.where(s > 0, 0.5 * s * np.log(np.maximum(s, 1)), 0.0)
    vals = slog + table[p] - table[s + p] - s * np.log(C) - (s + p) * np.log(H)
    return float(vals.max())


def check_12L(Mp, P=512, H_candidates=DEFAULT_H, C_ladder=DEFAULT_C, rel_tol=0.01):
    """``s^{s/2} M_p <= B C^s H^{s+p} M_{s+p}`` on the box ``s, p <= P``.

    An ``H`` passes when, for every ``C`` in the ladder, the required ``B``
    at truncation ``P`` agrees with the value at ``P/2`` to ``rel_tol``.
    """
    if not Mp.growth_ok():
        raise ConditionFailure("sequence fails the M_p^(1/p) -> infinity proxy",
                               {"condition": "Cond12", "precondition": "growth"})
    P = min(int(P), Mp.P_max // 2)
    trace = {}
    for H in H_candidates:
        rows, ok = [], True
        for C in C_ladder:
            full = _b_required(Mp.table, P, C, H)
            half = _b_required(Mp.table, P // 2, C, H)
            stable = abs(full - half) <= rel_tol * max(1.0, abs(full))
            rows.append({"C": C, "log_B_P": full, "log_B_half": half, "stable": stable})
            ok &= stable
        trace[str(H)] = rows
        if ok:
            B = max(r["log_B_P"] for r in rows)
            return ConditionReport("Cond12", True, {"H": float(H), "log_B": B, "P": P},
                                   {"trace": trace})
    return ConditionReport("Cond12", "inconclusive", {}, {"trace": trace})


def cond43_residuals(M_t, M_Ht, u, H):
    """``M(t) + log t - M(Ht) - H`` from tabulated ``M(t)``, ``M(Ht)`` and ``u = log t``."""
    return np.asarray(M_t) + np.asarray(u) - np.asarray(M_Ht) - H


def check_43(M, H_candidates=DEFAULT_H, slack=1e-9):
    """``M(t) + log t <= M(Ht) + H`` on the grid of ``M`` for each candidate ``H``.

    ``M(Ht)`` is evaluated exactly from the parent sequence. Nodes whose
    maximizing index sits at ``P_max`` (at ``t`` or ``Ht``) are excluded.
    """
    u = M.u_grid
    trace = {}
    for H in H_candidates:
        shifted, arg = M.at_log(u + np.log(H))
        keep = ~M.cap_limited & (arg < M.parent.P_max)
        res = cond43_residuals(M.values, shifted, u, H)[keep]
        worst = float(res.max()) if res.size else np.nan
        trace[str(H)] = {"max_residual": worst, "excluded": int((~keep).sum()),
                         "argmax_t": float(u[keep][np.argmax(res)]) if res.size else None}
        if res.size and worst <= slack:
            return ConditionReport("Cond43", True, {"H": float(H)}, {"trace": trace})
    if all(np.isnan(v["max_residual"]) for v in trace.values()):
        return ConditionReport("Cond43", "inconclusive", {}, {"trace": trace})
    return ConditionReport("Cond43", False, {}, {"trace": trace})


def nuclearity_verdict(Mp, P=None, H_candidates=DEFAULT_H):
    """Nuclearity decided by (M2)' and cross-checked against condition (4.3).

    ``status`` is one of ``"ok"``, ``"inapplicable"`` (a precondition
    failed), ``"inconclusive"`` or ``"inconsistent"`` (the two checkers
    disagree).
    """
    reports = {"M1": check_M1(Mp, P)}
    if reports["M1"].holds is not True:
        return {"status": "inapplicable", "nuclear": None, "reason": "M1",
                "reports": reports}
    if not Mp.growth_ok():
        return {"status": "inapplicable", "nuclear": None, "reason": "growth",
                "reports": reports}
    reports["Cond12"] = check_12L(Mp)
    if reports["Cond12"].holds is not True:
        return {"status": "inapplicable", "nuclear": None, "reason": "Cond12",
                "reports": reports}
    reports["M2prime"] = check_M2prime(Mp, P)
    reports["Cond43"] = check_43(associated_function(Mp), H_candidates)
    m2, c43 = reports["M2prime"].holds, reports["Cond43"].holds
    if m2 == "inconclusive" or c43 == "inconclusive":
        status = "inconclusive"
    elif m2 != c43:
        status = "inconsistent"
    else:
        status = "ok"
    return {"status": status, "nuclear": m2 if status == "ok" else None,
            "reason": None, "reports": reports}


def hermite_table(n_max, x):
    """Orthonormal Hermite functions ``H_0..H_{n_max}`` at ``x``, shape ``(n_max+1, len(x))``."""
    if n_max > HERMITE_BUDGET:
        raise DomainError(f"Hermite index {n_max} exceeds the budget {HERMITE_BUDGET}")
    x = np.asarray(x, dtype=float)
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = np.pi ** -0.25 * np.exp(-x * x / 2)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, n_max):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def hermite_function(gamma, grid):
    """``H_gamma`` sampled on the grid of ``grid`` (a :class:`SampledFunction`)."""
    gamma = tuple(np.atleast_1d(gamma).astype(int))
    if len(gamma) != grid.d:
        raise ConfigError("multi-index length must equal the grid dimension")
    if min(gamma) < 0:
        raise DomainError("multi-index entries must be non-negative")
    tab = hermite_table(max(gamma), grid.axis())
    vals = tab[gamma[0]]
    for g in gamma[1:]:
        vals = np.multiply.outer(vals, tab[g])
    return grid.like(vals.astype(complex))


def hermite_coefficients(f, Gamma):
    """``xi_gamma = int f H_gamma`` for ``0 <= gamma_j <= Gamma`` (Riemann sums)."""
    tab = hermite_table(Gamma, f.axis())
    vals = f.values
    for _ in range(f.d):
        vals = np.tensordot(vals, tab, axes=([0], [1]))
    return CoefficientArray(vals * f.cell, None, f.d)


def hermite_synthesis(c, grid):
    """``T(c) = sum_gamma c_gamma H_gamma`` on the grid of ``grid``."""
    G = c.values.shape[0] - 1
    tab = hermite_table(G, grid.axis())
    vals = c.values
    for _ in range(c.d):
        vals = np.tensordot(vals, tab, axes=([0], [0]))
    return grid.like(vals)


def hermite_decay_check(xi, Mp, k_ladder, M=None):
    """Sup of ``|xi_gamma| exp(M(k |gamma|^(1/2)))`` per ``k`` with a divergence flag.

    The sup over the full box is compared with the sup over ``gamma <= Gamma/2``;
    growth above 10 percent flags divergence. ``M`` admits ``p = 0`` so that
    the weights are positive at ``gamma = 0``.
    """
    if M is None:
        M = associated_function(Mp, np.array([0.0]), include_p0=True,
                                max_cap_fraction=1.0)
    G = xi.values.shape[0] - 1
    half = xi.truncate(G // 2)
    rows = []
    for k in k_ladder:
        sups = []
        for arr in (xi, half):
            g = arr.norms()
            with np.errstate(divide="ignore"):
                logc = np.log(np.abs(arr.values))
            w = M(k * np.sqrt(g))
            v = np.where(np.isneginf(logc), -np.inf, logc + w)
            sups.append(float(v.max()))
        div = bool(np.isfinite(sups[0]) and sups[0] > sups[1] + np.log1p(DIVERGENCE_GROWTH))
        rows.append({"k": int(k), "log_sup": sups[0], "log_sup_half": sups[1],
                     "verdict": "divergent" if div else "pass"})
    return rows


def _spectral_derivative(values, h, order, floor=1e-15):
    fhat = np.fft.fft(values)
    fhat[np.abs(fhat) < floor * np.abs(fhat).max()] = 0
    k = 2 * np.pi * np.fft.fftfreq(values.size, d=h)
    return np.fft.ifft((1j * k) ** order * fhat)


def seminorm_SMp(f, Mp, j, order_cap=12):
    """``max_{a+b <= order_cap} j^(a+b) / M_(a+b) ||x^a f^(b)||_2`` (``d = 1``).

    Derivatives are spectral; Fourier modes below ``1e-15`` of the peak are
    dropped so that roundoff is not amplified by ``k^b``. The result is
    ``stabilized`` when the per-order maxima decrease over the last three
    orders and the overall maximum is attained below ``order_cap``.
    """
    if f.d != 1:
        raise ConfigError("seminorm_SMp is implemented for d = 1")
    if order_cap > 12:
        raise DomainError("order_cap above 12 exceeds the differentiation budget")
    x = f.axis()
    derivs = [f.values] + [_spectral_derivative(f.values, f.h, b)
                           for b in range(1, order_cap + 1)]
    per_order = []
    best, best_ab = -np.inf, (0, 0)
    for n in range(order_cap + 1):
        top = -np.inf
        for a in range(n + 1):
            b = n - a
            norm = np.sqrt(np.sum(np.abs(x ** a * derivs[b]) ** 2) * f.h)
            with np.errstate(divide="ignore"):
                val = n * np.log(j) - Mp.table[n] + np.log(norm)
            if val > top:
                top = val
            if val > best:
                best, best_ab = val, (a, b)
        per_order.append(top)
    tail = per_order[-3:]
    stabilized = bool(np.all(np.diff(tail) < 0) and sum(best_ab) < order_cap)
    return {"value": float(np.exp(best)), "argmax": list(best_ab),
            "per_order": [float(np.exp(v)) for v in per_order],
            "stabilized": stabilized}
