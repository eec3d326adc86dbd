"""Exponents of the equation u_t = Δ(u^m) and the constants derived from them.

Two different quantities are traditionally both called "lambda" for this
equation; here they get distinct names:

* ``barenblatt_lambda = n / (n(m-1) + 2)``, the time exponent of the
  self-similar source solution,
* ``smoothing_lambda = n(m-1) + 2``, the exponent in the L1-Linf smoothing
  effect and the local sup bound.

They satisfy ``barenblatt_lambda * smoothing_lambda == n``.
"""

from __future__ import annotations

from dataclasses import dataclass


class SubcriticalExponent(ValueError):
    """Raised for m <= m_c = (n-2)_+/n, where local boundedness fails."""


def critical_exponent(n: int) -> float:
    """m_c = (n-2)_+ / n."""
    return max(n - 2, 0) / n


@dataclass(frozen=True)
class Exponent:
    m: float
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"dimension must be an integer >= 1, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", float(self.m))
        mc = critical_exponent(self.n)
        if not self.m > mc:
            raise SubcriticalExponent(
                f"m = {self.m} is not above the critical exponent m_c = {mc} for n = {self.n}"
            )

    @property
    def m_c(self) -> float:
        return critical_exponent(self.n)

    @property
    def is_pme(self) -> bool:
        return self.m > 1.0

    @property
    def is_fde(self) -> bool:
        return self.m < 1.0


@dataclass(frozen=True)
class DerivedConstants:
    m_c: float
    barenblatt_lambda: float
    barenblatt_k: float | None  # only defined for m < 1
    smoothing_lambda: float
    kappa_sobolev: float
    kappa_stability: float
    m_sharp: float
    m_flat: float

    @property
    def sobolev_kappa(self) -> float:
        """The smaller of the two kappa candidates; used for convergence-exponent checks."""
        return min(self.kappa_sobolev, self.kappa_stability)


def make_exponent(m: float, n: int) -> Exponent:
    return Exponent(m, n)


def derive_constants(e: Exponent) -> DerivedConstants:
    m, n = e.m, e.n
    smoothing = n * (m - 1.0) + 2.0
    lam = n / smoothing
    k = lam * (1.0 - m) / (2.0 * m * n) if m < 1.0 else None
    return DerivedConstants(
        m_c=e.m_c,
        barenblatt_lambda=lam,
        barenblatt_k=k,
        smoothing_lambda=smoothing,
        kappa_sobolev=1.0 + 1.0 / n + 1.0 / (m * n),
        kappa_stability=1.0 + 1.0 / m + 1.0 / (m * n),
        m_sharp=max(m, 1.0),
        m_flat=min(m, 1.0),
    )
