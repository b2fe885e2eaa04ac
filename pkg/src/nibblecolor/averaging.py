"""Averages of finite multisets under removal and addition of large points."""

from __future__ import annotations


class DomainError(ValueError):
    pass


def removal_average_bound(mu: float, alpha: float, q: float) -> float:
    """Upper bound on the mean after removing a fraction ``alpha`` of points,
    each at least ``q * mu``, from a nonnegative multiset of mean ``mu``.

    The bound is ``mu (1 - q alpha) / (1 - alpha)``; it can only be met when
    ``alpha <= 1/q`` because the remaining mean is nonnegative.
    """
    if not 0.0 <= alpha < 1.0:
        raise DomainError(f"alpha={alpha} outside [0, 1)")
    if not q > 1.0:
        raise DomainError(f"q={q} must exceed 1")
    if alpha * q > 1.0 + 1e-12:
        raise DomainError(f"alpha={alpha} > 1/q={1.0 / q}")
    return max(0.0, mu * (1.0 - q * alpha) / (1.0 - alpha))


def addition_average(mu: float, alpha: float, q: float) -> float:
    """Exact mean after adding ``alpha * n`` points of value ``q * mu``."""
    if alpha < 0 or q < 0:
        raise DomainError("alpha and q must be nonnegative")
    return mu * (1.0 + q * alpha) / (1.0 + alpha)


def error_compose(a: float, e: float) -> float:
    """Return ``e'`` with ``(1 - a)(1 + e') == 1 - a(1 + e)``.

    >>> error_compose(0.5, 0.1)
    -0.1
    """
    if not 0.0 < a < 1.0:
        raise DomainError(f"a={a} outside (0, 1)")
    return -a * e / (1.0 - a)
