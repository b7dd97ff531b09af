"""Builtin payoffs, volatility and utility models, and their config strings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .malliavin import Payoff, PayoffError


def _kv(body: str) -> dict:
    out = {}
    if not body:
        return out
    for item in body.split(","):
        if not item:
            continue
        if "=" not in item:
            raise PayoffError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _vector(s, d=None):
    vals = np.array([float(v) for v in str(s).split("/")])
    return vals


# ---------------------------------------------------------------------------
# discrete payoffs


def linear(a) -> Payoff:
    """``f(x) = <a, x_N>``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))

    def ev(x, t):
        return x[:, -1, :] @ np.broadcast_to(a, (x.shape[2],))

    def grad(x, t):
        g = np.zeros((x.shape[0], x.shape[1] - 1, x.shape[2]))
        g[:, -1, :] = np.broadcast_to(a, (x.shape[2],))
        return g

    return Payoff(ev, grad, f"linear({a.tolist()})", growth_p=1.0)


def asian(K: float) -> Payoff:
    """``max(0, mean(x_0..x_N) - K)`` on the first component.

    The gradient uses the one-sided convention ``1{mean >= K}``.
    """

    def avg(x):
        return x[:, :, 0].mean(axis=1)

    def ev(x, t):
        return np.maximum(0.0, avg(x) - K)

    def grad(x, t):
        P, n_t, d = x.shape
        g = np.zeros((P, n_t - 1, d))
        g[:, :, 0] = (avg(x) >= K)[:, None] / n_t
        return g

    return Payoff(ev, grad, f"asian(K={K})", growth_p=1.0, kink=lambda x, t: avg(x) - K)


def quad_var() -> Payoff:
    """``f(x) = 1/2 sum_m |dx_m|^2`` (realized quadratic variation)."""

    def ev(x, t):
        dx = np.diff(x, axis=1)
        return 0.5 * np.sum(dx**2, axis=(1, 2))

    def grad(x, t):
        dx = np.diff(x, axis=1)
        nxt = np.zeros_like(dx)
        nxt[:, :-1] = dx[:, 1:]
        return dx - nxt

    return Payoff(ev, grad, "quad_var", growth_p=2.0)


def cubic(c: float = 0.1) -> Payoff:
    """Smooth surrogate ``x_N^3 + c x_N^2`` on the first component."""

    def ev(x, t):
        y = x[:, -1, 0]
        return y**3 + c * y**2

    def grad(x, t):
        g = np.zeros((x.shape[0], x.shape[1] - 1, x.shape[2]))
        y = x[:, -1, 0]
        g[:, -1, 0] = 3 * y**2 + 2 * c * y
        return g

    return Payoff(ev, grad, f"cubic(c={c})", growth_p=3.0)


def merton(lam: float, r: float = 0.0, kappa: float = 1.0, T: float = 1.0) -> Payoff:
    """Log-utility of optimal Merton wealth: ``log kappa + (r + lam^2/2) T + lam X_T``."""
    const = np.log(kappa) + (r + 0.5 * lam**2) * T

    def ev(x, t):
        return const + lam * x[:, -1, 0]

    def grad(x, t):
        g = np.zeros((x.shape[0], x.shape[1] - 1, x.shape[2]))
        g[:, -1, 0] = lam
        return g

    return Payoff(ev, grad, f"merton(lam={lam},r={r},kappa={kappa},T={T})", growth_p=1.0)


def terminal(g: Callable, dg: Callable, name="terminal") -> Payoff:
    """``f(x) = g(x_N)`` with ``g`` acting on ``(P, d)`` arrays."""

    def ev(x, t):
        return g(x[:, -1, :])

    def grad(x, t):
        out = np.zeros((x.shape[0], x.shape[1] - 1, x.shape[2]))
        out[:, -1, :] = dg(x[:, -1, :])
        return out

    return Payoff(ev, grad, name)


def time_integral(g: Callable, dg: Callable, name="time_integral") -> Payoff:
    """Trapezoid rule for ``int_0^T g(x_t) dt`` on the path's grid."""

    def weights(t):
        dt = np.diff(t)
        w = np.zeros(len(t))
        w[:-1] += dt / 2
        w[1:] += dt / 2
        return w

    def ev(x, t):
        return g(x) @ weights(t)

    def grad(x, t):
        return (dg(x) * weights(t)[None, :, None])[:, 1:, :]

    return Payoff(ev, grad, name)


def ito_integral(x, t, sigma: "SigmaSpec"):
    """Left-point sum ``sum_k sigma(t_k, x_k) (x_{k+1} - x_k)`` on the first component."""
    s = sigma.value(t[None, :-1], x[:, :-1, 0])
    return np.sum(s * np.diff(x[:, :, 0], axis=1), axis=1)


def log_contract(sigma: "SigmaSpec") -> Payoff:
    """``1/2 (int sigma(t, X_t) dX_t)^2``, whose mean is the log-contract price."""

    def ev(x, t):
        return 0.5 * ito_integral(x, t, sigma) ** 2

    def grad(x, t):
        H = ito_integral(x, t, sigma)
        xs = x[:, :, 0]
        s = sigma.value(t[None, :], xs)
        ds = sigma.dx(t[None, :], xs)
        dx = np.diff(xs, axis=1)
        dH = np.zeros_like(xs)
        dH[:, :-1] += ds[:, :-1] * dx - s[:, :-1]
        dH[:, 1:] += s[:, :-1]
        out = np.zeros((x.shape[0], x.shape[1] - 1, x.shape[2]))
        out[:, :, 0] = H[:, None] * dH[:, 1:]
        return out

    return Payoff(ev, grad, f"log_contract({sigma.name})", growth_p=2.0)


def expression(expr: str, name: str = "expr") -> Payoff:
    """Payoff from a numpy expression in ``x`` (``(P, N+1, d)``) and ``t``."""
    code = compile(expr, "<payoff>", "eval")

    def ev(x, t):
        out = eval(code, {"__builtins__": {}}, {"np": np, "x": x, "t": t})
        return np.broadcast_to(np.asarray(out, dtype=float), (x.shape[0],))

    return Payoff(ev, None, name)


# ---------------------------------------------------------------------------
# volatility and utility specs


@dataclass
class SigmaSpec:
    """Scalar integrand ``sigma(t, x)`` with analytic x-partials."""

    value: Callable
    dx: Callable
    dxx: Callable
    bound: float = np.inf
    name: str = "sigma"

    @classmethod
    def constant(cls, c: float):
        zero = lambda t, x: np.zeros(np.broadcast_shapes(np.shape(t), np.shape(x)))
        const = lambda t, x: np.full(np.broadcast_shapes(np.shape(t), np.shape(x)), float(c))
        return cls(const, zero, zero, abs(c), f"const:{c}")

    @classmethod
    def tanh(cls, a: float, b: float):
        """``a + b tanh(x)``."""

        def val(t, x):
            return a + b * np.tanh(x) + 0.0 * t

        def d1(t, x):
            return b / np.cosh(x) ** 2 + 0.0 * t

        def d2(t, x):
            return -2.0 * b * np.tanh(x) / np.cosh(x) ** 2 + 0.0 * t

        return cls(val, d1, d2, abs(a) + abs(b), f"tanh:a={a},b={b}")


@dataclass
class UtilitySpec:
    U: Callable
    dU: Callable
    d2U: Callable
    bound_d2: float = np.inf
    name: str = "utility"

    @classmethod
    def linear(cls, alpha: float = 1.0):
        return cls(lambda h: alpha * h, lambda h: np.full_like(h, alpha),
                   lambda h: np.zeros_like(h), 0.0, f"linear:{alpha}")

    @classmethod
    def quad(cls, alpha: float = 1.0):
        """``alpha x^2 / 2``."""
        return cls(lambda h: 0.5 * alpha * h**2, lambda h: alpha * h,
                   lambda h: np.full_like(h, alpha), abs(alpha), f"quad:{alpha}")


def parse_sigma(spec: str) -> SigmaSpec:
    kind, _, body = spec.partition(":")
    if kind == "const":
        return SigmaSpec.constant(float(body))
    if kind == "tanh":
        kv = _kv(body)
        return SigmaSpec.tanh(float(kv.get("a", 0.2)), float(kv.get("b", 0.05)))
    raise PayoffError(f"unknown sigma spec {spec!r}")


def parse_utility(spec: str) -> UtilitySpec:
    kind, _, body = spec.partition(":")
    alpha = float(body) if body else 1.0
    if kind == "linear":
        return UtilitySpec.linear(alpha)
    if kind == "quad":
        return UtilitySpec.quad(alpha)
    raise PayoffError(f"unknown utility spec {spec!r}")


def parse_payoff(spec: str, T: float = 1.0) -> Payoff:
    """Config strings such as ``asian:K=0``, ``linear:a=1/2``, ``quad_var``,
    ``cubic:c=0.1``, ``merton:lam=0.5,r=0,kappa=1,T=1``,
    ``log_contract:sigma=0.2`` or ``expr:path/to/file``."""
    if not spec:
        raise PayoffError("missing payoff")
    kind, _, body = spec.partition(":")
    if kind == "expr":
        with open(body) as fh:
            return expression(fh.read().strip(), name=f"expr:{body}")
    kv = _kv(body)
    if kind == "linear":
        return linear(_vector(kv.get("a", "1")))
    if kind == "asian":
        return asian(float(kv.get("K", 0.0)))
    if kind == "quad_var":
        return quad_var()
    if kind == "cubic":
        return cubic(float(kv.get("c", 0.1)))
    if kind == "merton":
        return merton(float(kv.get("lam", 0.5)), float(kv.get("r", 0.0)),
                      float(kv.get("kappa", 1.0)), float(kv.get("T", T)))
    if kind == "log_contract":
        sig = kv.get("sigma", "0.2")
        sigma = SigmaSpec.constant(float(sig)) if ":" not in sig else parse_sigma(sig)
        return log_contract(sigma)
    raise PayoffError(f"unknown payoff {spec!r}")
