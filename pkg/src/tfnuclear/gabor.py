"""Gabor analysis and synthesis on a truncated lattice.

Conventions, with ``Pi(x, xi) f(y) = exp(i <y, xi>) f(y - x)``:

* ``V_phi f(x, xi) = int f(y) conj(phi(y - x)) exp(-i <y, xi>) dy``
* analysis ``c_kn = V_phi f(alpha0 k, beta0 n)``
* synthesis ``D_psi c = sum_kn c_kn Pi(alpha0 k, beta0 n) psi``

Lattice frequencies ``beta0 n`` generally miss the FFT dual grid, so the
frequency sums are evaluated as exact exponential sums against a cached
``(2N+1) x n`` matrix rather than by interpolating an FFT.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from tfnuclear.errors import CGFailure, ConfigError, DomainError, GridMismatch
from tfnuclear.grid import SampledFunction, TruncationWarning, fourier_transform
from tfnuclear.lattice import CoefficientArray, LatticeSpec
from tfnuclear.serialize import array_hash
from tfnuclear.weights import eval_weight

EDGE_TOL = 1e-10
REACH_TOL = 1e-16
DIVERGENCE_GROWTH = 0.10
NOISE_FLOOR = 1e-13


def gaussian_window(d=1, R=12.0, h=2.0 ** -6):
    """``phi0(x) = exp(-|x|^2)`` on the default grid."""
    return SampledFunction.from_callable(
        lambda *xs: np.exp(-sum(x ** 2 for x in xs)), d=d, R=R, h=h)


def _as_vec(v, d):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.size == 1 and d > 1:
        v = np.repeat(v, d)
    if v.shape != (d,):
        raise ConfigError(f"expected a {d}-vector, got shape {v.shape}")
    return v


def _shift_axis(values, s, h, axis):
    """Translate samples by ``s`` along ``axis`` (result(y) = values(y - s)).

    Node-aligned shifts move samples with zero fill. Other shifts apply the
    phase ramp on a twice zero-padded grid, which is exact for band-limited
    data and accurate to roundoff for the smooth windows used here.
    Returns the shifted array and whether the shift was fractional.
    """
    m = s / h
    n = values.shape[axis]
    if abs(m - round(m)) < 1e-9:
        m = int(round(m))
        out = np.zeros_like(values)
        if abs(m) >= n:
            return out, False
        src = [slice(None)] * values.ndim
        dst = [slice(None)] * values.ndim
        if m >= 0:
            src[axis], dst[axis] = slice(0, n - m), slice(m, n)
        else:
            src[axis], dst[axis] = slice(-m, n), slice(0, n + m)
        out[tuple(dst)] = values[tuple(src)]
        return out, False
    pad = [(0, 0)] * values.ndim
    pad[axis] = (n // 2, n // 2)
    big = np.pad(values, pad)
    freq = 2 * np.pi * np.fft.fftfreq(2 * n, d=h)
    shape = [1] * values.ndim
    shape[axis] = 2 * n
    ramp = np.exp(-1j * freq * s).reshape(shape)
    shifted = np.fft.ifft(np.fft.fft(big, axis=axis) * ramp, axis=axis)
    crop = [slice(None)] * values.ndim
    crop[axis] = slice(n // 2, n // 2 + n)
    return shifted[tuple(crop)], True


def _translate(values, x, h):
    frac = False
    for ax, s in enumerate(x):
        if s != 0:
            values, f = _shift_axis(values, s, h, ax)
            frac |= f
    return values, frac


def _modulation(f, xi):
    coords = f.coords()
    phase = sum(c * w for c, w in zip(coords, xi))
    return np.exp(1j * phase)


def time_frequency_shift(f, x, xi):
    """``Pi(x, xi) f``: translate by ``x`` then modulate by ``xi``."""
    x, xi = _as_vec(x, f.d), _as_vec(xi, f.d)
    vals, frac = _translate(f.values, x, f.h)
    flags = list(f.flags)
    if frac:
        flags.append("fractional-shift")
    top = np.abs(f.values).max()
    lost = f.norm() ** 2 - np.sum(np.abs(vals) ** 2) * f.cell
    if top > 0 and lost > EDGE_TOL * f.norm() ** 2:
        flags.append("shift-truncation")
        warnings.warn("shift moves mass past the grid extent", TruncationWarning,
                      stacklevel=2)
    return f.like(vals * _modulation(f, xi), flags)


def _freq_matrix(axis, freqs, sign=-1):
    return np.exp(sign * 1j * np.outer(freqs, axis))


def _check_freqs(f, freqs):
    if np.any(np.abs(freqs) > np.pi / f.h):
        raise DomainError("requested frequency lies outside the dual-grid range")


def stft(f, phi, points):
    """``V_phi f`` at the requested ``(x, xi)`` pairs; returns a complex array."""
    f.check_grid(phi)
    d = f.d
    pts = [(_as_vec(x, d), _as_vec(xi, d)) for x, xi in points]
    _check_freqs(f, np.array([p[1] for p in pts]))
    axis = f.axis()
    out = np.empty(len(pts), dtype=complex)
    cache = {}
    for i, (x, xi) in enumerate(pts):
        key = tuple(x)
        if key not in cache:
            shifted, _ = _translate(phi.values, x, f.h)
            cache[key] = f.values * np.conj(shifted)
        g = cache[key]
        for ax in range(d):
            g = np.tensordot(g, np.exp(-1j * axis * xi[ax]), axes=([0], [0]))
        out[i] = g * f.cell
    return out


@dataclass
class GaborSystem:
    """Lattice, window and (once computed) canonical dual and frame bounds.

    ``lattice`` fixes the coefficient box ``|k| <= K``, ``|n| <= N`` used by
    analysis and synthesis. The frame operator is summed over the larger
    ``frame_box`` (by default the coefficient box widened by the window's
    reach in time and in frequency), so that the dual approximates the dual
    of the whole lattice instead of inverting the weakly covered modes at
    the edge of the coefficient box.
    """

    lattice: LatticeSpec
    window: SampledFunction
    dual: SampledFunction | None = None
    frame_bounds: tuple | None = None
    cg_tol: float = 1e-9
    frame_box: tuple | None = None
    cg_history: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        lat, w = self.lattice, self.window
        if lat.d != w.d:
            raise ConfigError("lattice and window dimensions differ")
        _check_freqs(w, np.array([lat.N * lat.beta0]))
        if not lat.frame_guarantee:
            self.flags.append("no-frame-guarantee")
        if lat.K * lat.alpha0 > w.R or lat.N * lat.beta0 > np.pi / w.h:
            self.flags.append("lattice-exceeds-grid")
        if self.frame_box is None:
            rx, rxi = window_reach(w)
            n_cap = int(np.floor(np.pi / w.h / lat.beta0))
            self.frame_box = (lat.K + int(np.ceil(rx / lat.alpha0)),
                              min(n_cap, lat.N + int(np.ceil(rxi / lat.beta0))))
        self.frame_box = tuple(int(v) for v in self.frame_box)
        if self.frame_box[0] < lat.K or self.frame_box[1] < lat.N:
            raise ConfigError("frame_box must contain the coefficient box")

    @classmethod
    def from_config(cls, cfg, window=None):
        lat = LatticeSpec(float(cfg.get("alpha0", 1.0)), float(cfg.get("beta0", 1.0)),
                          int(cfg.get("d", 1)), int(cfg.get("K", 16)), int(cfg.get("N", 16)))
        if window is None:
            kind = cfg.get("window", "gaussian")
            if kind != "gaussian":
                raise ConfigError(f"unknown window {kind!r}")
            window = gaussian_window(lat.d, float(cfg.get("R", 12.0)),
                                     float(cfg.get("h", 2.0 ** -6)))
        box = cfg.get("frame_box")
        return cls(lat, window, cg_tol=float(cfg.get("cg_tol", 1e-9)),
                   frame_box=tuple(box) if box is not None else None)

    @property
    def grid(self):
        return self.window

    def key(self):
        lat = self.lattice
        return array_hash(self.window.values, extra=repr(
            (lat.alpha0, lat.beta0, lat.d, lat.K, lat.N, self.frame_box,
             self.window.h, self.window.R, self.cg_tol)))

    def frame_system(self):
        """The system on ``frame_box`` that carries the frame operator."""
        if self.frame_box == (self.lattice.K, self.lattice.N):
            return self
        if "frame" not in self._cache:
            lat = self.lattice.with_truncation(*self.frame_box)
            self._cache["frame"] = GaborSystem(lat, self.window, cg_tol=self.cg_tol,
                                               frame_box=self.frame_box)
        return self._cache["frame"]

    def check(self, f):
        if not f.same_grid(self.window):
            raise GridMismatch("function and window live on different grids")

    def freq_matrix(self):
        if "E" not in self._cache:
            lat = self.lattice
            self._cache["E"] = _freq_matrix(self.window.axis(),
                                            lat.n_range() * lat.beta0)
        return self._cache["E"]

    def shifted(self, g):
        """Stack of ``T_{alpha0 k} g`` over all truncated ``k``."""
        key = ("T", array_hash(g.values))
        if key not in self._cache:
            lat = self.lattice
            ks = np.array(np.meshgrid(*([lat.k_range()] * lat.d), indexing="ij"))
            ks = ks.reshape(lat.d, -1).T
            stack = np.empty((len(ks),) + g.values.shape, dtype=complex)
            frac = False
            for i, k in enumerate(ks):
                stack[i], fr = _translate(g.values, k * lat.alpha0, g.h)
                frac |= fr
            if frac and "fractional-shift" not in self.flags:
                self.flags.append("fractional-shift")
            self._cache[key] = stack.reshape((2 * lat.K + 1,) * lat.d + g.values.shape)
        return self._cache[key]


def window_reach(w, tol=REACH_TOL):
    """Half-widths in time and frequency beyond which ``|w|`` and ``|w^|`` stay below ``tol``."""
    def reach(f):
        mag = np.abs(f.values)
        big = mag >= tol * mag.max()
        x = f.axis()
        idx = np.nonzero(big)
        return float(max(np.abs(x[i]).max() for i in idx))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        return reach(w), reach(fourier_transform(w))


def _apply_freq(arr, E, first_axis, d):
    """Contract ``d`` consecutive axes starting at ``first_axis`` with ``E``."""
    for ax in range(d):
        a = first_axis + ax
        arr = np.moveaxis(np.tensordot(arr, E, axes=([a], [1])), -1, a)
    return arr


def analysis(f, sys, window=None):
    """Gabor coefficients ``c_kn = V_phi f(alpha0 k, beta0 n)``."""
    sys.check(f)
    g = sys.window if window is None else window
    lat = sys.lattice
    prod = f.values * np.conj(sys.shifted(g))
    vals = _apply_freq(prod, sys.freq_matrix(), lat.d, lat.d) * f.cell
    return CoefficientArray(vals, lat)


def synthesis(c, psi, sys):
    """``D_psi c = sum_kn c_kn exp(i beta0 n . t) psi(t - alpha0 k)``."""
    sys.check(psi)
    lat = sys.lattice
    if c.lattice is None or c.lattice.shape != lat.shape:
        raise ConfigError("coefficients do not match the system lattice")
    flags = []
    if not c.adequate:
        flags.append("inadequate-coefficients")
        warnings.warn("coefficient truncation is not adequate", TruncationWarning,
                      stacklevel=2)
    Emod = np.conj(sys.freq_matrix()).T
    modulated = _apply_freq(c.values, Emod, lat.d, lat.d)
    out = np.sum(modulated * sys.shifted(psi), axis=tuple(range(lat.d)))
    return psi.like(out, flags)


def frame_operator_apply(f, sys):
    """``S f = D_phi C_phi f`` summed over the frame box."""
    fs = sys.frame_system()
    c = analysis(f, fs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        return synthesis(c, fs.window, fs)


def conjugate_gradient(apply, b, tol=1e-9, maxiter=5000, window=100, x0=None):
    """Conjugate gradient for a positive operator on sampled functions.

    Returns the solution with the smallest residual and the relative
    residual history. Raises :class:`CGFailure` when the best residual has
    not improved for ``window`` iterations, or after ``maxiter`` iterations.
    """
    bnorm = b.norm()
    if bnorm == 0:
        return SampledFunction.zeros_like(b), [0.0]
    x = SampledFunction.zeros_like(b) if x0 is None else x0
    r = b - apply(x) if x0 is not None else b
    p = r
    rr = r.inner(r).real
    history = [np.sqrt(rr) / bnorm]
    best, best_x, best_it = history[0], x, 0
    for it in range(1, maxiter + 1):
        if best <= tol:
            return best_x, history
        if it - best_it > window:
            raise CGFailure(f"CG stagnated at relative residual {best:.3e} "
                            f"(no progress in {window} iterations)", history)
        Ap = apply(p)
        curv = p.inner(Ap).real
        if not curv > 0:
            raise CGFailure("operator is not positive definite on the Krylov space",
                            history)
        step = rr / curv
        x = x + step * p
        r = r - step * Ap
        rr_new = r.inner(r).real
        history.append(np.sqrt(rr_new) / bnorm)
        if history[-1] < best:
            best, best_x, best_it = history[-1], x, it
        p = r + (rr_new / rr) * p
        rr = rr_new
    if best <= tol:
        return best_x, history
    raise CGFailure(f"CG stopped at relative residual {best:.3e} after "
                    f"{maxiter} iterations", history)


def _cg_window(sys):
    # B/A from the smooth trial subspace can be optimistic, so the
    # stagnation window never drops below 100 iterations.
    if sys.frame_bounds is None or not sys.frame_bounds[0] > 0:
        return 100
    A, B = sys.frame_bounds
    return int(max(100, np.ceil(10 * B / A)))


def canonical_dual(sys, cg_tol=None, maxiter=None):
    """Solve ``S psi = phi`` by CG and store the canonical dual in ``sys.dual``."""
    tol = sys.cg_tol if cg_tol is None else cg_tol
    psi, hist = conjugate_gradient(lambda g: frame_operator_apply(g, sys),
                                   sys.window, tol=tol, maxiter=maxiter or 5000,
                                   window=_cg_window(sys))
    sys.dual = psi
    sys.cg_history = hist
    return psi


def dual_residual(sys, psi=None):
    psi = sys.dual if psi is None else psi
    r = frame_operator_apply(psi, sys) - sys.window
    return r.norm() / sys.window.norm()


def cosine_similarity(f, g):
    return abs(f.inner(g)) / (f.norm() * g.norm())


def _trial_set(sys, trials, rng):
    from tfnuclear.komatsu import hermite_function

    lat, w = sys.lattice, sys.window
    reach = min(w.R, lat.K * lat.alpha0, lat.N * lat.beta0) - 4.0
    M = max(0, int(np.floor((reach ** 2 - 1) / 2))) if reach > 1 else 0
    funcs = []
    if lat.d == 1:
        funcs += [hermite_function(j, w) for j in range(M + 1)]
    half = max(reach, 1.0) / 2
    coords = w.coords()
    for _ in range(trials):
        vals = np.zeros(w.values.shape, dtype=complex)
        for _ in range(3):
            c = rng.uniform(-half, half, lat.d)
            xi = rng.uniform(-half, half, lat.d)
            s = rng.uniform(0.5, 2.0)
            amp = complex(rng.normal(), rng.normal())
            r2 = sum((x - ci) ** 2 for x, ci in zip(coords, c))
            vals = vals + amp * np.exp(-r2 / (2 * s * s)
                                       + 1j * sum(x * q for x, q in zip(coords, xi)))
        funcs.append(w.like(vals))
    return funcs


def frame_bounds(sys, trials=10, seed=0, rounds=20, apply=None):
    """Estimate frame bounds by Rayleigh quotients on a smooth trial subspace.

    The trial set (Hermite functions that fit inside the lattice box plus
    ``trials`` seeded random Gaussian mixtures) is orthonormalized, ``S`` is
    compressed onto it, and the extreme Rayleigh quotients are refined by
    ``rounds`` steps of power iteration (upper bound) and inverse iteration
    (lower bound) on the compressed operator.
    """
    if trials < 10:
        raise ConfigError("frame_bounds needs at least 10 random trials")
    apply = (lambda g: frame_operator_apply(g, sys)) if apply is None else apply
    rng = np.random.default_rng(seed)
    funcs = _trial_set(sys, trials, rng)
    scale = np.sqrt(sys.window.cell)
    X = np.stack([f.values.ravel() for f in funcs], axis=1) * scale
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    Q = U[:, s > 1e-8 * s[0]]
    shape = sys.window.values.shape
    SQ = np.stack([apply(sys.window.like(q.reshape(shape) / scale)).values.ravel() * scale
                   for q in Q.T], axis=1)
    H = Q.conj().T @ SQ
    H = (H + H.conj().T) / 2
    quotients = [float(np.real(np.vdot(v, H @ v))) for v in np.eye(H.shape[0])]

    def rq(v):
        return float(np.real(np.vdot(v, H @ v) / np.vdot(v, v)))

    vb = np.eye(H.shape[0])[int(np.argmax(quotients))].astype(complex)
    va = np.eye(H.shape[0])[int(np.argmin(quotients))].astype(complex)
    for _ in range(rounds):
        vb = H @ vb
        vb /= np.linalg.norm(vb)
        va = np.linalg.solve(H, va)
        va /= np.linalg.norm(va)
    B = max(max(quotients), rq(vb))
    A = min(min(quotients), rq(va))
    sys.frame_bounds = (A, B)
    return A, B


def frame_failure_suspected(sys, A, abs_tol=1e-8):
    """Heuristic flag for a system that probably is not a frame.

    Fires when the lower bound estimate is below ``abs_tol`` or when the
    lattice is at or beyond critical density. The trial subspace is smooth,
    so at critical density the estimate stays well above ``abs_tol`` even
    though the true lower bound is zero.
    """
    return bool(A < abs_tol or not sys.lattice.frame_guarantee)


def roundtrip(f, sys):
    """Relative L2 error of ``D_psi0 C_phi0 f`` against ``f``."""
    if sys.dual is None:
        raise ConfigError("roundtrip needs the canonical dual; call canonical_dual first")
    c = analysis(f, sys)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        g = synthesis(c, sys.dual, sys)
    fn = f.norm()
    err = 0.0 if fn == 0 else (g - f).norm() / fn
    return {"rel_error": float(err), "coefficients": c, "reconstruction": g}


@dataclass
class DecayRow:
    lam: float
    log_sup: float
    log_sup_half: float
    divergent: bool

    @property
    def sup(self):
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_sup))

    def to_dict(self):
        return {"lambda": self.lam, "sup": self.sup, "log_sup": self.log_sup,
                "log_sup_half": self.log_sup_half,
                "verdict": "divergent" if self.divergent else "pass"}


def _fit(x, y):
    if x.size < 3 or np.ptp(x) == 0:
        return {"slope": np.nan, "intercept": np.nan, "r2": np.nan, "points": int(x.size)}
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1 - np.sum(resid ** 2) / ss if ss > 0 else np.nan
    return {"slope": float(coef[0]), "intercept": float(coef[1]), "r2": float(r2),
            "points": int(x.size)}


def _log_sup(logc, logw):
    with np.errstate(invalid="ignore"):
        v = logc + logw
    v = np.where(np.isneginf(logc), -np.inf, v)
    return float(np.max(v))


def radial_envelope(c, width=None):
    """Per annulus of ``|sigma|``: radius and log of the largest ``|c_sigma|``."""
    r = c.norms().ravel()
    with np.errstate(divide="ignore"):
        logc = np.log(np.abs(c.values.ravel()))
    if width is None:
        width = max(c.lattice.alpha0, c.lattice.beta0) if c.is_lattice else 1.0
    bins = np.floor(r / width).astype(int)
    radii, env = [], []
    for b in np.unique(bins):
        sel = bins == b
        i = np.argmax(logc[sel])
        radii.append(r[sel][i])
        env.append(logc[sel][i])
    return np.array(radii), np.array(env)


def decay_profile(c, weight, lams, floor=NOISE_FLOOR):
    """Weighted sup norms of a coefficient array and decay-law fits.

    For each ``lam`` the sup of ``|c_sigma| exp(lam w(|sigma|))`` over the full
    box is compared with the sup over the half box; growth above 10 percent
    flags divergence. The fits regress the radial envelope of ``log|c|``
    (largest value per annulus, above ``floor`` times the maximum) against
    ``w(|sigma|)`` and against ``|sigma|^2``; the pointwise ``R^2`` over all
    entries above the floor is reported alongside.
    """
    K = c.lattice.K if c.is_lattice else c.values.shape[0] - 1
    N = c.lattice.N if c.is_lattice else K
    half = c.truncate(K // 2, N // 2)
    with np.errstate(divide="ignore"):
        logc, logc_h = np.log(np.abs(c.values)), np.log(np.abs(half.values))
    wf, wh = eval_weight(weight, c.norms()), eval_weight(weight, half.norms())
    rows = []
    for lam in lams:
        full = _log_sup(logc, lam * wf)
        part = _log_sup(logc_h, lam * wh)
        div = bool(np.isfinite(full) and full > part + np.log1p(DIVERGENCE_GROWTH))
        rows.append(DecayRow(float(lam), full, part, div))

    top = np.max(logc)
    fits = {}
    if np.isfinite(top):
        radii, env = radial_envelope(c)
        keep = env > top + np.log(floor)
        fits["omega"] = _fit(eval_weight(weight, radii[keep]), env[keep])
        fits["gaussian"] = _fit(radii[keep] ** 2, env[keep])
        r = c.norms().ravel()
        lc = logc.ravel()
        sel = lc > top + np.log(floor)
        fits["gaussian_pointwise"] = _fit(r[sel] ** 2, lc[sel])
        fits["omega_pointwise"] = _fit(eval_weight(weight, r[sel]), lc[sel])
    return {"rows": rows, "fits": fits, "adequate": c.adequate,
            "boundary_ratio": c.boundary_ratio()}
