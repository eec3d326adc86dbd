"""Elementary scalar inequalities behind the stability arguments, as executable checks.

The unnamed constants c, c_eps of these inequalities are not known in
closed form; the values stored here were found by brute-force maximisation
over the stated parameter ranges and are regression baselines.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class PowerPair:
    m_sharp: float
    m_flat: float
    M: float
    lambda_gap: float

    def __post_init__(self):
        if not (self.m_sharp >= 1.0 >= self.m_flat > 0):
            raise ValueError("need m_sharp >= 1 >= m_flat > 0")
        if self.M < 1:
            raise ValueError("need M >= 1")
        if not self.lambda_gap > 0:
            raise ValueError("need a positive gap")

    @classmethod
    def from_exponent(cls, m: float, M: float, lambda_gap: float) -> "PowerPair":
        return cls(max(m, 1.0), min(m, 1.0), M, lambda_gap)


def power_gap_lower_bound(pp: PowerPair) -> float:
    """Lower bound for t^m_flat - s^m_flat whenever 0 <= s < t <= M and t^m_sharp - s^m_sharp >= gap."""
    ratio = pp.m_flat / pp.m_sharp
    lam = pp.lambda_gap
    return ratio * pp.M ** (pp.m_flat - pp.m_sharp) * min(lam, lam**ratio)


def power_gap_holds(s, t, pp: PowerPair) -> np.ndarray:
    """Vectorised check of the gap lemma on admissible (s, t)."""
    s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
    return t**pp.m_flat - s**pp.m_flat >= power_gap_lower_bound(pp) * (1 - 1e-12)


def power_difference_ratio(t, alpha, beta, epsilon: float):
    """|t^a - t^b| / ((1 + t^(a+eps) + t^(b+eps)) |a - b|); the a = b limit is t^a |log t| / (...)."""
    t, alpha, beta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t, alpha, beta)))
    lt = np.log(t)
    d = alpha - beta
    same = np.abs(d) < 1e-12
    safe = np.where(same, 1.0, d)
    num = np.where(same, t**alpha * np.abs(lt), np.abs(t**beta * np.expm1(d * lt)) / np.abs(safe))
    return num / (1.0 + t ** (alpha + epsilon) + t ** (beta + epsilon))


@lru_cache(maxsize=32)
def power_difference_constant(epsilon: float, t_min: float = 1e-6, t_max: float = 1e6,
                              exponent_bound: float = 5.0) -> float:
    """Smallest c_eps with |t^a - t^b| <= c_eps (1 + t^(a+eps) + t^(b+eps)) |a - b| on the box.

    Dense grid search followed by local polishing of the best candidates.
    """
    t = np.geomspace(t_min, t_max, 1201)[:, None, None]
    a = np.linspace(-exponent_bound, exponent_bound, 121)
    R = power_difference_ratio(t, a[None, :, None], a[None, None, :], epsilon)
    best = float(R.max())
    flat = np.argsort(R, axis=None)[-5:]
    lo = np.array([np.log(t_min), -exponent_bound, -exponent_bound])
    hi = np.array([np.log(t_max), exponent_bound, exponent_bound])
    for idx in flat:
        i, j, k = np.unravel_index(idx, R.shape)
        x0 = np.array([np.log(t.ravel()[i]), a[j], a[k]])
        f = lambda x: -float(power_difference_ratio(np.exp(x[0]), x[1], x[2], epsilon))
        res = optimize.minimize(f, x0, bounds=list(zip(lo, hi)), method="L-BFGS-B")
        best = max(best, -res.fun)
    return best


# c_eps for eps = 0.1 on t in [1e-6, 1e6], |alpha|, |beta| <= 5. The supremum sits at
# t = 1e-6 with alpha = beta -> -5, where it approaches |log t| t^-eps / 2 = 27.50027.
C_EPS_0_1 = 27.5003


def power_difference_bound(t, alpha, beta, epsilon: float, c_eps: float | None = None):
    """Right-hand side c_eps (1 + t^(a+eps) + t^(b+eps)) |a - b|."""
    if c_eps is None:
        c_eps = C_EPS_0_1 if epsilon == 0.1 else power_difference_constant(epsilon)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    return c_eps * (1.0 + t ** (alpha + epsilon) + t ** (beta + epsilon)) * np.abs(alpha - beta)


def monotonicity_constant(m: float, a, b):
    """(a^m - b^m)(a - b) / |a - b|^(1+m); +inf where a == b.

    For m >= 1 the infimum over a, b >= 0 is 1 (attained at b = 0).
    """
    out = monotonicity_constant_array(m, a, b)
    return out if out.ndim else float(out)


MONOTONICITY_C = 1.0


def powers_converge(values, exponents, limit_value: float, limit_exponent: float,
                    atol: float = 1e-10, shrink: float = 0.9) -> bool:
    """Tail test for values_i ** exponents_i -> limit_value ** limit_exponent.

    The sequence counts as convergent when the largest error in its last
    quarter is below ``atol`` or at most ``shrink`` times the largest error
    in the quarter before.
    """
    values = np.asarray(values, dtype=float)
    exponents = np.asarray(exponents, dtype=float)
    if values.shape != exponents.shape:
        raise LengthMismatch(f"{values.shape} values vs {exponents.shape} exponents")
    if values.size < 2:
        raise LengthMismatch("need at least two terms")
    with np.errstate(divide="ignore"):
        powered = np.where(values == 0, 0.0, np.abs(values) ** exponents)
    target = 0.0 if limit_value == 0 else limit_value**limit_exponent
    err = np.abs(powered - target)
    q = max(values.size // 4, 1)
    tail = err[-q:].max()
    before = err[-2 * q:-q].max()
    return bool(tail <= atol or tail <= shrink * before)


@dataclass(frozen=True)
class FuzzOutcome:
    name: str
    samples: int
    violations: int
    worst_ratio: float  # max of lhs / allowed over the samples; <= 1 means no violation


def _fuzz_power_gap(rng, k):
    ms = rng.uniform(1.0, 4.0, k)
    mf = rng.uniform(0.05, 1.0, k)
    M = rng.uniform(1.0, 10.0, k)
    top = M**ms
    lam = top * rng.uniform(1e-6, 1.0, k)
    s = (rng.uniform(0, 1, k) * (top - lam)) ** (1 / ms)
    lam_actual = lam + rng.uniform(0, 1, k) * (top - s**ms - lam)
    t = np.minimum((s**ms + lam_actual) ** (1 / ms), M)
    ratio = mf / ms
    bound = ratio * M ** (mf - ms) * np.minimum(lam, lam**ratio)
    return bound / (t**mf - s**mf)


def _fuzz_monotonicity(rng, k):
    m = rng.uniform(1.0, 5.0, k)
    a = rng.uniform(0, 10, k)
    b = np.where(rng.uniform(size=k) < 0.1, 0.0, rng.uniform(0, 10, k))
    return MONOTONICITY_C / monotonicity_constant_array(m, a, b)


def monotonicity_constant_array(m, a, b):
    """:func:`monotonicity_constant` with an array of exponents."""
    m, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (m, a, b)))
    if np.any(m < 1):
        raise ValueError("the monotonicity constant is only tracked for m >= 1")
    d = np.abs(a - b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (a**m - b**m) * (a - b) / d ** (1.0 + m)
    return np.where(d == 0, np.inf, out)


def _fuzz_power_difference(rng, k, epsilon=0.1):
    t = np.exp(rng.uniform(np.log(1e-6), np.log(1e6), k))
    alpha = rng.uniform(-5, 5, k)
    beta = rng.uniform(-5, 5, k)
    return power_difference_ratio(t, alpha, beta, epsilon) / C_EPS_0_1


def fuzz_lemmas(samples: int = 100_000, seed: int = 0) -> list[FuzzOutcome]:
    """Random admissible tuples for the three scalar lemmas; counts violations."""
    rng = np.random.default_rng(seed)
    out = []
    for name, fn in (("power_gap", _fuzz_power_gap), ("monotonicity", _fuzz_monotonicity),
                     ("power_difference", _fuzz_power_difference)):
        r = fn(rng, samples)
        out.append(FuzzOutcome(name, samples, int(np.sum(r > 1 + 1e-12)), float(np.max(r))))
    return out
