"""Parametric probability kernels f(x | theta).

Each kernel carries a compact parameter box ``[lo, hi]`` and exposes the
pointwise density, a CDF where the family is univariate, a sampler driven by
a caller-owned ``numpy.random.Generator``, and parameter derivatives of the
density up to second order. Analytic derivatives are registered per family;
anything missing falls back to central finite differences.

Special functions come from :mod:`scipy.special`.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special, stats

from .errors import ConfigError, UnsupportedError

LOG_2PI = math.log(2.0 * math.pi)

__all__ = [
    "KernelModel",
    "GaussianLocation",
    "GaussianLocationScale",
    "Gamma",
    "Bernoulli",
    "SkewNormal",
    "make_kernel",
    "fd_step",
]


def fd_step(theta):
    return 1e-5 * (1.0 + abs(theta))


def _as_theta(theta, q):
    t = np.atleast_1d(np.asarray(theta, dtype=float))
    if t.shape != (q,):
        raise ValueError(f"expected parameter of length {q}, got shape {t.shape}")
    return t


class KernelModel:
    """Base class. Subclasses set ``family``, ``param_dim``, ``x_dim`` and the box."""

    family = "abstract"
    param_names = ()
    x_dim = 1
    discrete = False

    def __init__(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != (self.param_dim,) or hi.shape != (self.param_dim,):
            raise ConfigError(
                f"{self.family}: box must have {self.param_dim} coordinates"
            )
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ConfigError(f"{self.family}: parameter box must be bounded")
        if np.any(lo >= hi):
            raise ConfigError(f"{self.family}: need lo < hi coordinatewise")
        self.lo = lo
        self.hi = hi

    # -- parameter handling ------------------------------------------------

    @property
    def param_dim(self):
        return len(self.param_names)

    def check_param(self, theta, interior=False):
        t = _as_theta(theta, self.param_dim)
        if interior:
            ok = np.all(t > self.lo) and np.all(t < self.hi)
        else:
            ok = np.all(t >= self.lo) and np.all(t <= self.hi)
        if not ok:
            where = "interior of" if interior else "inside"
            raise ValueError(
                f"{self.family}: theta={t.tolist()} not {where} box "
                f"[{self.lo.tolist()}, {self.hi.tolist()}]"
            )
        return t

    def clip(self, theta):
        return np.clip(theta, self.lo, self.hi)

    # -- densities ---------------------------------------------------------

    def _logpdf(self, x, t):
        raise NotImplementedError

    def logpdf(self, x, theta):
        t = self.check_param(theta)
        return self._logpdf(np.asarray(x, dtype=float), t)

    def density(self, x, theta):
        return np.exp(self.logpdf(x, theta))

    def cdf(self, x, theta):
        raise UnsupportedError(f"{self.family}: no CDF")

    def sample(self, theta, rng, count):
        raise NotImplementedError

    def support_interval(self, theta):
        """Interval carrying all but a negligible amount of mass (1-D kernels)."""
        raise UnsupportedError(f"{self.family}: no 1-D support interval")

    # -- derivatives -------------------------------------------------------

    def _analytic_derivative(self, x, t, alpha):
        return None

    def param_derivative(self, x, theta, alpha, method="auto"):
        """``d^alpha f(x | theta)`` for a multi-index ``alpha`` with ``|alpha| <= 2``.

        ``method`` is ``auto`` (analytic when registered), ``analytic`` or ``fd``.
        """
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.param_dim or min(alpha) < 0:
            raise ValueError(f"bad multi-index {alpha} for {self.family}")
        if sum(alpha) > 2:
            raise ValueError("derivative order must be <= 2")
        t = self.check_param(theta, interior=True)
        x = np.asarray(x, dtype=float)
        if sum(alpha) == 0:
            return np.exp(self._logpdf(x, t))
        if method in ("auto", "analytic"):
            out = self._analytic_derivative(x, t, alpha)
            if out is not None:
                return out
            if method == "analytic":
                raise UnsupportedError(f"{self.family}: no analytic derivative {alpha}")
        return self._fd_derivative(x, t, alpha)

    def _fd_derivative(self, x, t, alpha):
        f = lambda th: np.exp(self._logpdf(x, th))  # noqa: E731
        idx = [i for i, a in enumerate(alpha) for _ in range(a)]
        if len(idx) == 1:
            i = idx[0]
            e = np.zeros_like(t)
            e[i] = fd_step(t[i])
            return (f(t + e) - f(t - e)) / (2 * e[i])
        i, j = idx
        if i == j:
            e = np.zeros_like(t)
            e[i] = h = fd_step(t[i]) * 10  # second differences need a wider step
            return (f(t + e) - 2 * f(t) + f(t - e)) / (h * h)
        ei = np.zeros_like(t)
        ej = np.zeros_like(t)
        ei[i] = hi = fd_step(t[i]) * 10
        ej[j] = hj = fd_step(t[j]) * 10
        return (f(t + ei + ej) - f(t + ei - ej) - f(t - ei + ej) + f(t - ei - ej)) / (
            4 * hi * hj
        )

    # -- EM hooks ----------------------------------------------------------

    def weighted_mle(self, x, w, theta):
        """Maximise ``sum_s w_s sum_j log f(x_sj | theta)`` over theta.

        ``x`` has shape (m, N[, d]) and ``w`` shape (m,).
        """
        raise UnsupportedError(f"{self.family}: no closed-form component update")

    def seed_params(self, x):
        """Map sequences (m, N[, d]) to rough per-sequence parameter guesses."""
        raise UnsupportedError(f"{self.family}: no EM seeding rule")

    def to_dict(self):
        return {"family": self.family, "lo": self.lo.tolist(), "hi": self.hi.tolist()}

    def __repr__(self):
        return f"{type(self).__name__}(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


class GaussianLocation(KernelModel):
    """N(theta, cov) with known covariance; theta in R^d.

    ``cov`` may be a scalar, a vector of variances (diagonal) or a full matrix.
    """

    family = "gaussian-location"

    def __init__(self, cov=1.0, lo=None, hi=None):
        cov = np.asarray(cov, dtype=float)
        cov = np.diag(cov) if cov.ndim == 1 else np.atleast_2d(cov)
        if cov.shape[0] != cov.shape[1]:
            raise ConfigError("covariance must be square")
        if not np.allclose(cov, cov.T) or np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ConfigError("covariance must be symmetric positive definite")
        self.cov = cov
        self.d = cov.shape[0]
        self.param_names = tuple(f"theta{i}" for i in range(self.d))
        self.x_dim = self.d
        self.prec = np.linalg.inv(cov)
        self.chol = np.linalg.cholesky(cov)
        self._logdet = float(np.linalg.slogdet(cov)[1])
        self.diagonal = bool(np.allclose(cov, np.diag(np.diag(cov))))
        self.sd = np.sqrt(np.diag(cov))
        lo = np.full(self.d, -10.0) if lo is None else lo
        hi = np.full(self.d, 10.0) if hi is None else hi
        super().__init__(lo, hi)

    def _logpdf(self, x, t):
        if self.d == 1:
            z = (x - t[0]) / self.sd[0]
            return -0.5 * z * z - 0.5 * LOG_2PI - math.log(self.sd[0])
        r = x - t
        m = np.einsum("...i,ij,...j->...", r, self.prec, r)
        return -0.5 * m - 0.5 * self.d * LOG_2PI - 0.5 * self._logdet

    def cdf(self, x, theta):
        t = self.check_param(theta)
        x = np.asarray(x, dtype=float)
        if self.d == 1:
            return special.ndtr((x - t[0]) / self.sd[0])
        if not self.diagonal:
            raise UnsupportedError("rectangle CDF needs a diagonal covariance")
        return np.prod(special.ndtr((x - t) / self.sd), axis=-1)

    def sample(self, theta, rng, count):
        t = self.check_param(theta)
        z = rng.standard_normal((count, self.d))
        out = t + z @ self.chol.T
        return out[:, 0] if self.d == 1 else out

    def support_interval(self, theta):
        t = np.atleast_1d(theta)
        return float(t[0] - 10 * self.sd[0]), float(t[0] + 10 * self.sd[0])

    def _analytic_derivative(self, x, t, alpha):
        f = np.exp(self._logpdf(x, t))
        if self.d == 1:
            u = ((x - t[0]) * self.prec[0, 0])[..., None]
        else:
            u = (x - t) @ self.prec  # prec symmetric
        idx = [i for i, a in enumerate(alpha) for _ in range(a)]
        if len(idx) == 1:
            return f * u[..., idx[0]]
        i, j = idx
        return f * (u[..., i] * u[..., j] - self.prec[i, j])

    def hellinger2(self, a, b):
        """Squared Hellinger distance between N(a, cov) and N(b, cov)."""
        d = np.atleast_1d(a) - np.atleast_1d(b)
        return float(-np.expm1(-0.125 * d @ self.prec @ d))

    def weighted_mle(self, x, w, theta):
        x = np.asarray(x, dtype=float)
        if self.d == 1:
            seq_sum = x.sum(axis=1)
            n_per = x.shape[1]
            tot = w.sum() * n_per
            return self.clip(np.array([w @ seq_sum / tot]))
        seq_sum = x.sum(axis=1)
        tot = w.sum() * x.shape[1]
        return self.clip(w @ seq_sum / tot)

    def seed_params(self, x):
        x = np.asarray(x, dtype=float)
        means = x.mean(axis=1)
        return self.clip(means[:, None] if self.d == 1 else means)

    def to_dict(self):
        d = super().to_dict()
        d["cov"] = self.cov.tolist()
        return d


class GaussianLocationScale(KernelModel):
    """Univariate N(mu, v) with theta = (mu, v), v the variance."""

    family = "gaussian-location-scale"
    param_names = ("mu", "v")

    def __init__(self, lo=(-10.0, 0.05), hi=(10.0, 10.0)):
        super().__init__(lo, hi)
        if self.lo[1] <= 0:
            raise ConfigError("variance lower bound must be positive")

    def _logpdf(self, x, t):
        mu, v = t
        return -0.5 * (x - mu) ** 2 / v - 0.5 * LOG_2PI - 0.5 * math.log(v)

    def cdf(self, x, theta):
        mu, v = self.check_param(theta)
        return special.ndtr((np.asarray(x, dtype=float) - mu) / math.sqrt(v))

    def sample(self, theta, rng, count):
        mu, v = self.check_param(theta)
        return mu + math.sqrt(v) * rng.standard_normal(count)

    def support_interval(self, theta):
        mu, v = theta
        s = math.sqrt(v)
        return float(mu - 10 * s), float(mu + 10 * s)

    def _analytic_derivative(self, x, t, alpha):
        mu, v = t
        f = np.exp(self._logpdf(x, t))
        z = x - mu
        dmu = z / v
        dv = z * z / (2 * v * v) - 1 / (2 * v)
        if alpha == (1, 0):
            return f * dmu
        if alpha == (0, 1):
            return f * dv
        if alpha == (2, 0):
            return f * (dmu * dmu - 1 / v)
        if alpha == (0, 2):
            return f * (dv * dv - z * z / v**3 + 1 / (2 * v * v))
        if alpha == (1, 1):
            return f * (dmu * dv - z / (v * v))
        return None

    def weighted_mle(self, x, w, theta):
        x = np.asarray(x, dtype=float)
        n_per = x.shape[1]
        tot = w.sum() * n_per
        mu = w @ x.sum(axis=1) / tot
        v = w @ ((x - mu) ** 2).sum(axis=1) / tot
        return self.clip(np.array([mu, v]))

    def seed_params(self, x):
        x = np.asarray(x, dtype=float)
        v = np.var(x)
        v = float(np.clip(v / 4.0, self.lo[1], self.hi[1]))
        return self.clip(np.column_stack([x.mean(axis=1), np.full(x.shape[0], v)]))


class Gamma(KernelModel):
    """Gamma(shape alpha, rate beta): f = beta^a x^(a-1) e^(-beta x) / Gamma(a)."""

    family = "gamma"
    param_names = ("alpha", "beta")

    def __init__(self, lo=(0.2, 0.05), hi=(20.0, 20.0)):
        super().__init__(lo, hi)
        if np.any(self.lo <= 0):
            raise ConfigError("gamma parameters must be positive")

    def _logpdf(self, x, t):
        a, b = t
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            xp = np.where(x > 0, x, 1.0)
            lp = a * math.log(b) - special.gammaln(a) + (a - 1) * np.log(xp) - b * xp
        return np.where(x > 0, lp, -np.inf)

    def cdf(self, x, theta):
        a, b = self.check_param(theta)
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, special.gammainc(a, b * np.maximum(x, 0.0)), 0.0)

    def quantile(self, p, theta):
        a, b = theta
        return float(special.gammaincinv(a, p) / b)

    def sample(self, theta, rng, count):
        a, b = self.check_param(theta)
        return rng.gamma(shape=a, scale=1.0 / b, size=count)

    def support_interval(self, theta):
        return 0.0, self.quantile(1 - 1e-12, theta)

    def _analytic_derivative(self, x, t, alpha):
        a, b = t
        f = np.exp(self._logpdf(x, t))
        with np.errstate(divide="ignore", invalid="ignore"):
            la = np.where(x > 0, math.log(b) - special.digamma(a) + np.log(np.where(x > 0, x, 1.0)), 0.0)
        lb = a / b - x
        if alpha == (1, 0):
            return f * la
        if alpha == (0, 1):
            return f * lb
        if alpha == (2, 0):
            return f * (la * la - special.polygamma(1, a))
        if alpha == (0, 2):
            return f * (lb * lb - a / (b * b))
        if alpha == (1, 1):
            return f * (la * lb + 1 / b)
        return None

    def weighted_mle(self, x, w, theta):
        x = np.asarray(x, dtype=float)
        n_per = x.shape[1]
        tot = w.sum() * n_per
        mean = w @ x.sum(axis=1) / tot
        mean_log = w @ np.log(x).sum(axis=1) / tot
        s = math.log(mean) - mean_log
        a = float(theta[0])
        if s <= 1e-12:
            a = float(self.hi[0])
        else:
            # Newton on log(a) - digamma(a) = s, started from the usual closed-form guess
            a = (3 - s + math.sqrt((s - 3) ** 2 + 24 * s)) / (12 * s)
            for _ in range(50):
                g = math.log(a) - special.digamma(a) - s
                dg = 1 / a - special.polygamma(1, a)
                step = g / dg
                a_new = a - step
                if a_new <= 0:
                    a_new = a / 2
                if abs(a_new - a) < 1e-12 * a:
                    a = a_new
                    break
                a = a_new
        a = float(np.clip(a, self.lo[0], self.hi[0]))
        b = a / mean
        return self.clip(np.array([a, b]))

    def seed_params(self, x):
        x = np.asarray(x, dtype=float)
        mean_all = x.mean()
        var_all = x.var()
        a = float(np.clip(mean_all**2 / max(var_all, 1e-12), self.lo[0], self.hi[0]))
        m = x.mean(axis=1)
        return self.clip(np.column_stack([np.full(len(m), a), a / m]))


class Bernoulli(KernelModel):
    """Bernoulli(theta) on {0, 1}; density w.r.t. counting measure."""

    family = "bernoulli"
    param_names = ("theta",)
    discrete = True

    def __init__(self, lo=(0.0,), hi=(1.0,)):
        super().__init__(lo, hi)
        if self.lo[0] < 0 or self.hi[0] > 1:
            raise ConfigError("bernoulli box must lie in [0, 1]")

    def _logpdf(self, x, t):
        p = t[0]
        x = np.asarray(x, dtype=float)
        return special.xlogy(x, p) + special.xlog1py(1 - x, -p)

    def density(self, x, theta):
        p = self.check_param(theta)[0]
        x = np.asarray(x, dtype=float)
        return np.where(x == 1, p, np.where(x == 0, 1 - p, 0.0))

    def cdf(self, x, theta):
        p = self.check_param(theta)[0]
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, np.where(x < 1, 1 - p, 1.0))

    def sample(self, theta, rng, count):
        p = self.check_param(theta)[0]
        return (rng.random(count) < p).astype(float)

    def _analytic_derivative(self, x, t, alpha):
        if alpha == (1,):
            return np.where(x == 1, 1.0, np.where(x == 0, -1.0, 0.0))
        return np.zeros(np.shape(x))

    def weighted_mle(self, x, w, theta):
        x = np.asarray(x, dtype=float)
        return self.clip(np.array([w @ x.mean(axis=1) / w.sum()]))

    def seed_params(self, x):
        return self.clip(np.asarray(x, dtype=float).mean(axis=1)[:, None])


class SkewNormal(KernelModel):
    """Skew-normal with location mu, scale (variance) v and skewness m.

    ``f = 2 / sqrt(v) * phi(z) * Phi(m z)`` with ``z = (x - mu) / sqrt(v)``.
    Density and derivatives only; used for identifiability checks.
    """

    family = "skew-normal"
    param_names = ("mu", "v", "m")

    def __init__(self, lo=(-10.0, 0.05, -10.0), hi=(10.0, 10.0, 10.0)):
        super().__init__(lo, hi)
        if self.lo[1] <= 0:
            raise ConfigError("variance lower bound must be positive")

    def _logpdf(self, x, t):
        mu, v, m = t
        z = (np.asarray(x, dtype=float) - mu) / math.sqrt(v)
        return math.log(2.0) - 0.5 * math.log(v) - 0.5 * z * z - 0.5 * LOG_2PI + special.log_ndtr(m * z)

    def sample(self, theta, rng, count):
        mu, v, m = self.check_param(theta)
        delta = m / math.sqrt(1 + m * m)
        u0 = np.abs(rng.standard_normal(count))
        u1 = rng.standard_normal(count)
        return mu + math.sqrt(v) * (delta * u0 + math.sqrt(1 - delta * delta) * u1)

    def cdf(self, x, theta):
        mu, v, m = self.check_param(theta)
        return stats.skewnorm.cdf(np.asarray(x, dtype=float), m, loc=mu, scale=math.sqrt(v))

    def support_interval(self, theta):
        mu, v, _ = theta
        s = math.sqrt(v)
        return float(mu - 10 * s), float(mu + 10 * s)


_FAMILIES = {
    "gaussian-location": GaussianLocation,
    "gaussian-location-scale": GaussianLocationScale,
    "gamma": Gamma,
    "bernoulli": Bernoulli,
    "skew-normal": SkewNormal,
}


def make_kernel(spec):
    """Build a kernel from a dict such as ``{"family": "gamma", "lo": [...], "hi": [...]}``."""
    if isinstance(spec, KernelModel):
        return spec
    if isinstance(spec, str):
        spec = {"family": spec}
    spec = dict(spec)
    family = spec.pop("family", None)
    if family not in _FAMILIES:
        raise ConfigError(f"unknown kernel family {family!r}; choose from {sorted(_FAMILIES)}")
    try:
        return _FAMILIES[family](**spec)
    except TypeError as exc:
        raise ConfigError(f"bad kernel options for {family}: {exc}") from exc
