"""Theoretical decay exponents of the last-iterate errors in ``T``."""

from __future__ import annotations

from .errors import InvalidArgumentError

REGIMES = ("pred", "est", "misspec")
MODES = ("online", "finite")


def _need(cond, msg):
    if not cond:
        raise InvalidArgumentError(msg)


def theoretical_exponent(regime: str, r: float, s: float | None, theta: float,
                         mode: str = "finite", beta: float | None = None) -> float:
    """Exponent ``p`` in ``E err = O(T^p)`` (log factors dropped).

    Parameters
    ----------
    regime : {"pred", "est", "misspec"}
    r : float
        Source exponent.
    s : float or None
        Capacity exponent; ``None`` uses the capacity-free bounds.
    theta : float
        ``theta`` for ``mode="online"``, ``theta'`` for ``mode="finite"``.
    beta : float, optional
        Interpolation index, required for ``"misspec"``.
    """
    _need(regime in REGIMES, f"regime must be one of {REGIMES}")
    _need(mode in MODES, f"mode must be one of {MODES}")
    _need(0.0 < theta < 1.0, "theta must lie in (0, 1)")
    _need(r > 0, "r must be positive")
    if s is not None:
        _need(0.0 <= s <= 1.0, "s must lie in [0, 1]")
    if regime == "pred":
        return _pred(r, s, theta, mode)
    if regime == "est":
        return _est(r, s, theta, mode)
    _need(beta is not None, "misspec regime needs beta")
    return _misspec(r, beta, theta, mode)


def _pred(r, s, th, mode):
    if mode == "finite":
        if th <= 2 * r / (2 * r + 1):
            return -th
        return -2 * r * (1 - th)
    if s is not None and r > 0.5:
        m = min(2 * r, 2 - s)
    else:
        m = min(2 * r, 1.0)
    if th <= m / (1 + m):
        return -th
    return -m * (1 - th)


def _est(r, s, th, mode):
    _need(r > 0.5, "estimation error needs r > 1/2 (target inside the RKHS)")
    if mode == "finite":
        if s is None:
            _need(th > 0.5, "estimation error without capacity needs theta' > 1/2")
            if th <= 2 * r / (2 * r + 1):
                return 1 - 2 * th
            return -(2 * r - 1) * (1 - th)
        _need(th > s / (1 + s), "estimation error needs theta' > s/(1+s)")
        if th <= (2 * r + s - 1) / (2 * r + s):
            return s - (1 + s) * th
        return -(2 * r - 1) * (1 - th)
    _need(s is not None, "online estimation error is only guaranteed under a capacity condition")
    _need(s < 1, "online estimation error needs s < 1")
    _need(th > s / (1 + s), "estimation error needs theta > s/(1+s)")
    if th <= min((2 * r + s - 1) / (2 * r + s), 0.5):
        return s - (1 + s) * th
    return -min(2 * r - 1, 1 - s) * (1 - th)


def _misspec(r, beta, th, mode):
    _need(0.0 < beta < 1.0, "beta must lie in (0, 1)")
    _need(th > beta / (1 + beta), "misspecification error needs theta > beta/(1+beta)")
    if mode == "finite":
        _need(r > beta / 2, "misspecification error needs r > beta/2")
        if th <= 2 * r / (2 * r + 1):
            return beta - th * (1 + beta)
        return -(2 * r - beta) * (1 - th)
    _need(r > beta / 2, "misspecification error needs r > beta/2")
    m = min(2 * r, 1.0)
    if th <= m / (1 + m):
        return beta - th * (1 + beta)
    return -min(2 * r - beta, 1 - beta) * (1 - th)
