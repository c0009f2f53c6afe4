"""Dodge probabilities, optimal stuffing counts, and per-pair risk.

The central quantity is the chance that a batch of ``f`` credential
stuffing attempts at a peer misses every monitor deployed there.  With a
pool of ``N`` candidate accounts and ``m`` monitors placed uniformly at
random, that probability is the binomial ratio

    C(N - f, m) / C(N, m)

where under ``psi`` the pool is the user intersection ``n'`` and
``m = min(n', k)``, while under ``psica`` the pool is the monitoring
site's own user count and ``m = min(|U_s|, k)``.

The attacker's expected gain ``f * dodge(f)`` is unimodal in ``f``; its
maximum sits at ``floor((N - m) / (m + 1))`` or the ceiling of the same
quantity, which makes worst-case risk an O(1) evaluation.  Three
evaluation regimes keep that O(1) promise at every scale:

* pools up to ``INT_EXACT_MAX``: integer-exact binomials, correctly
  rounded to float on output;
* pools up to ``STIRLING_MIN``: log-factorial accumulation via
  ``math.lgamma``;
* larger pools: Stirling's approximation with Robbins-style error
  bounds (:func:`stirling_binom_ratio`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .ecosystem import PSI, PSICA, PRIVACY_LEVELS, Ecosystem

# Pool-size thresholds for the three evaluation regimes.  Tests rely on
# integer-exact arithmetic below INT_EXACT_MAX; the Stirling path keeps
# evaluation O(1) above STIRLING_MIN.
INT_EXACT_MAX = 1000
STIRLING_MIN = 10_000

EXACT = "exact"
STIRLING = "stirling"


@dataclass(frozen=True)
class RiskQuery:
    """Inputs of one dodge-probability evaluation.

    ``local_users`` is the monitoring site's own user count (the psica
    pool), ``intersection`` the shared-user count ``n'``, ``allocation``
    the slot count ``k`` and ``attempts`` the stuffing count ``f``.
    """

    privacy: str
    local_users: int
    intersection: int
    allocation: float
    attempts: int

    def __post_init__(self):
        if self.privacy not in PRIVACY_LEVELS:
            raise ValueError(f"unknown privacy level {self.privacy!r}")
        if not 0 <= self.intersection <= self.local_users:
            raise ValueError("need 0 <= intersection <= local_users")
        if self.allocation < 0:
            raise ValueError("allocation must be non-negative")
        if not 0 <= self.attempts <= self.intersection:
            raise ValueError("attempts must lie in [0, intersection]")

    @property
    def pool(self) -> int:
        return self.intersection if self.privacy == PSI else self.local_users


@dataclass(frozen=True)
class RiskResult:
    """Worst-case attacker gain for one peer allocation."""

    optimal_attempts: int
    risk: float
    norm_risk: float
    method: str


def log_factorial(g: int) -> float:
    return math.lgamma(g + 1)


def _stirling_log_factorial(g: int) -> float:
    # g ln g - g + 0.5 ln(2 pi g), plus the first series correction term.
    return g * math.log(g) - g + 0.5 * math.log(2.0 * math.pi * g) + 1.0 / (12.0 * g)


def stirling_binom_ratio(n: int, f: int, m: int) -> tuple[float, float, float]:
    """Approximate C(n-f, m)/C(n, m) with rigorous enclosing bounds.

    Returns ``(approx, lower, upper)``.  The bounds come from bracketing
    each log-factorial error with its Robbins envelope
    ``1/(12g+1) < eps_g < 1/(12g)`` around the plain Stirling value; the
    true ratio always lies in ``[lower, upper]``, and so does ``approx``,
    which additionally carries the ``1/(12g)`` series correction for a
    far tighter point estimate.

    All of ``n-f``, ``n-m``, ``n-f-m`` and ``n`` must be at least 1;
    degenerate zero-factorial arguments belong to the exact path.
    """
    a, b, c, d = n - f, n - m, n - f - m, n
    if min(a, b, c, d) < 1:
        raise ValueError("stirling path requires all factorial arguments >= 1")
    approx = math.exp(
        _stirling_log_factorial(a)
        + _stirling_log_factorial(b)
        - _stirling_log_factorial(c)
        - _stirling_log_factorial(d)
    )
    # Anchor the Robbins bracket at the uncorrected Stirling value.
    anchor = approx * math.exp(
        -1.0 / (12.0 * a) - 1.0 / (12.0 * b) + 1.0 / (12.0 * c) + 1.0 / (12.0 * d)
    )
    e_lower = (
        1.0 / (12.0 * a + 1.0)
        + 1.0 / (12.0 * b + 1.0)
        - 1.0 / (12.0 * c)
        - 1.0 / (12.0 * d)
    )
    e_upper = (
        1.0 / (12.0 * a)
        + 1.0 / (12.0 * b)
        - 1.0 / (12.0 * c + 1.0)
        - 1.0 / (12.0 * d + 1.0)
    )
    return approx, anchor * math.exp(e_lower), anchor * math.exp(e_upper)


def dodge_fraction(pool: int, m: int, f: int) -> Fraction:
    """Exact dodge probability C(pool-f, m)/C(pool, m) as a rational.

    Only available in the integer-exact regime; larger pools must use the
    float paths.
    """
    if pool > INT_EXACT_MAX:
        raise ValueError(f"pool {pool} above integer-exact limit {INT_EXACT_MAX}")
    if f == 0 or m == 0:
        return Fraction(1)
    if pool - f < m:
        return Fraction(0)
    return Fraction(math.comb(pool - f, m), math.comb(pool, m))


def _ratio_float(pool: int, m: int, f: int) -> float:
    if f == 0 or m == 0:
        return 1.0
    if pool - f < m:
        return 0.0
    if pool <= INT_EXACT_MAX:
        return float(dodge_fraction(pool, m, f))
    if pool <= STIRLING_MIN:
        return math.exp(
            log_factorial(pool - f)
            + log_factorial(pool - m)
            - log_factorial(pool - f - m)
            - log_factorial(pool)
        )
    return stirling_binom_ratio(pool, f, m)[0]


def dodge_value(pool: int, m: int, f: int) -> float:
    """Float dodge probability routed through the regime thresholds."""
    return _ratio_float(pool, m, f)


def dodge_probability(query: RiskQuery) -> float:
    """Chance that ``attempts`` stuffing attempts miss every monitor.

    ``f = 0`` is defined as probability 1 at either privacy level, even
    when the allocation exceeds the pool.
    """
    pool = query.pool
    m = min(pool, math.floor(query.allocation))
    return _ratio_float(pool, m, query.attempts)


def method_for_pool(pool: int) -> str:
    return STIRLING if pool > STIRLING_MIN else EXACT


def bounded_optimal_attempts(pool: int, m: int, limit: int) -> int:
    """Argmax of ``f * dodge(f)`` over ``0 <= f <= limit``, ties to smaller f.

    The gain is unimodal with peak near ``(pool - m) / (m + 1)``, so only
    the clamped floor/ceil candidates need evaluation.
    """
    if limit <= 0:
        return 0
    if m == 0:
        return limit
    base, step = pool - m, m + 1
    lo = base // step
    hi = lo + (1 if base % step else 0)
    candidates = sorted({min(max(lo, 0), limit), min(max(hi, 0), limit)})
    if len(candidates) == 1:
        return candidates[0]
    if pool <= INT_EXACT_MAX:
        weights = [(f, f * math.comb(pool - f, m)) for f in candidates]
        best_f, best_w = weights[0]
        for f, w in weights[1:]:
            if w > best_w:
                best_f, best_w = f, w
        return best_f
    best_f, best_v = candidates[0], candidates[0] * _ratio_float(pool, m, candidates[0])
    for f in candidates[1:]:
        v = f * _ratio_float(pool, m, f)
        if v > best_v:
            best_f, best_v = f, v
    return best_f


def optimal_stuffing(
    privacy: str, local_users: int, intersection: int, allocation: float
) -> tuple[int, float]:
    """Worst-case stuffing count and expected gain for one allocation.

    Evaluates the expected gain ``f * dodge(f)`` at the two closed-form
    candidates ``floor/ceil((N - m) / (m + 1))`` clamped to
    ``[0, intersection]`` and returns the argmax and its value; exact
    ties go to the smaller ``f``.  A zero allocation forfeits the whole
    intersection: every dodge probability is 1, so the gain is ``n'``.
    """
    if privacy not in PRIVACY_LEVELS:
        raise ValueError(f"unknown privacy level {privacy!r}")
    n1 = intersection
    if not 0 <= n1 <= local_users:
        raise ValueError("need 0 <= intersection <= local_users")
    if allocation < 0:
        raise ValueError("allocation must be non-negative")
    if n1 == 0:
        return 0, 0.0
    pool = n1 if privacy == PSI else local_users
    m = min(pool, math.floor(allocation))
    if m == 0:
        return n1, float(n1)
    # Shared denominator C(pool, m) cancels inside the argmax, so the
    # comparison stays integer-exact in the small-pool regime.
    f_star = bounded_optimal_attempts(pool, m, n1)
    if pool <= INT_EXACT_MAX:
        return f_star, float(f_star * dodge_fraction(pool, m, f_star))
    return f_star, f_star * _ratio_float(pool, m, f_star)


def pair_risk(eco: Ecosystem, s, s2, allocation: float) -> RiskResult:
    """Risk site ``s`` incurs from holding ``allocation`` slots at ``s2``.

    Real-valued allocations (smoothed averages) are floored inside the
    monitor count, which is conservative for the receiver.  Pairs with no
    shared users carry zero risk and zero normalized risk.
    """
    if s == s2:
        raise ValueError("pair risk is defined between distinct sites")
    n1 = eco.shared_count(s, s2)
    local = eco.site_size(s)
    f_star, gain = optimal_stuffing(eco.privacy, local, n1, allocation)
    norm = gain / n1 if n1 else 0.0
    pool = n1 if eco.privacy == PSI else local
    return RiskResult(f_star, gain, norm, method_for_pool(pool))


def per_bid_risk(eco: Ecosystem, s, allocations: dict) -> tuple[float, float]:
    """Sum of per-pair risks over all peers at their latest allocations.

    Peers missing from ``allocations`` count as allocating zero slots.
    The normalized sum intentionally double counts users shared with
    several peers; each peer is blamed individually.
    """
    risk_sum = 0.0
    norm_sum = 0.0
    for s2 in eco.peers(s):
        res = pair_risk(eco, s, s2, allocations.get(s2, 0))
        risk_sum += res.risk
        norm_sum += res.norm_risk
    return risk_sum, norm_sum
