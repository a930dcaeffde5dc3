"""
Scalable unconstrained test problems with analytic gradients.

Definitions follow the CUTEst SIF files of the same name (most originate in
Conn, Gould, Lescrenier and Toint, "Performance of a multifrontal scheme for
partially separable optimization", and in Toint's and Dixon-Maany's test
sets).  All evaluators are vectorized and O(n).
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidDimension, UnknownProblem


@dataclass(eq=False)
class Problem:
    name: str
    dim: int
    x0: np.ndarray
    f: Callable
    grad: Callable
    fstar: float = None


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    build: Callable
    default_dim: int
    large_dim: int
    multiple_of: int = 1
    min_dim: int = 2
    fixed_dim: int = None

    def check_dim(self, n):
        if self.fixed_dim is not None and n != self.fixed_dim:
            raise InvalidDimension(f"{self.name} is only defined for n = {self.fixed_dim}")
        if n < self.min_dim:
            raise InvalidDimension(f"{self.name} needs n >= {self.min_dim}, got {n}")
        if n % self.multiple_of:
            raise InvalidDimension(f"{self.name} needs n divisible by {self.multiple_of}, got {n}")


# --------------------------------------------------------------------------
# ARWHEAD: sum_{i<n} (x_i^2 + x_n^2)^2 - 4 x_i + 3

def _arwhead(n):
    def f(x):
        q = x[:-1] ** 2 + x[-1] ** 2
        return float(np.sum(q * q - 4.0 * x[:-1] + 3.0))

    def grad(x):
        q = x[:-1] ** 2 + x[-1] ** 2
        g = np.empty_like(x)
        g[:-1] = 4.0 * q * x[:-1] - 4.0
        g[-1] = 4.0 * x[-1] * np.sum(q)
        return g

    return Problem("ARWHEAD", n, np.ones(n), f, grad, 0.0)


# LIARWHD: sum_i 4 (x_i^2 - x_1)^2 + (x_i - 1)^2

def _liarwhd(n):
    def f(x):
        t = x * x - x[0]
        return float(np.sum(4.0 * t * t + (x - 1.0) ** 2))

    def grad(x):
        t = x * x - x[0]
        g = 16.0 * t * x + 2.0 * (x - 1.0)
        g[0] -= 8.0 * np.sum(t)
        return g

    return Problem("LIARWHD", n, np.full(n, 4.0), f, grad, 0.0)


# POWELLSG: blocks of the Powell singular function

def _powellsg(n):
    def parts(x):
        a, b, c, d = x[0::4], x[1::4], x[2::4], x[3::4]
        return a, b, c, d

    def f(x):
        a, b, c, d = parts(x)
        return float(np.sum((a + 10 * b) ** 2 + 5 * (c - d) ** 2 + (b - 2 * c) ** 4 + 10 * (a - d) ** 4))

    def grad(x):
        a, b, c, d = parts(x)
        t1, t2, t3, t4 = a + 10 * b, c - d, b - 2 * c, a - d
        g = np.empty_like(x)
        g[0::4] = 2 * t1 + 40 * t4 ** 3
        g[1::4] = 20 * t1 + 4 * t3 ** 3
        g[2::4] = 10 * t2 - 8 * t3 ** 3
        g[3::4] = -10 * t2 - 40 * t4 ** 3
        return g

    x0 = np.tile([3.0, -1.0, 0.0, 1.0], n // 4)
    return Problem("POWELLSG", n, x0, f, grad, 0.0)


# BDQRTIC: sum_{i<=n-4} (3 - 4 x_i)^2 + (x_i^2 + 2x_{i+1}^2 + 3x_{i+2}^2 + 4x_{i+3}^2 + 5x_n^2)^2

def _bdqrtic(n):
    k = n - 4

    def q(x):
        return (x[:k] ** 2 + 2 * x[1:k + 1] ** 2 + 3 * x[2:k + 2] ** 2
                + 4 * x[3:k + 3] ** 2 + 5 * x[-1] ** 2)

    def f(x):
        return float(np.sum((3.0 - 4.0 * x[:k]) ** 2) + np.sum(q(x) ** 2))

    def grad(x):
        qq = q(x)
        g = np.zeros_like(x)
        g[:k] += -8.0 * (3.0 - 4.0 * x[:k])
        for j in range(4):
            g[j:k + j] += 4.0 * (j + 1) * qq * x[j:k + j]
        g[-1] += 20.0 * x[-1] * np.sum(qq)
        return g

    return Problem("BDQRTIC", n, np.ones(n), f, grad)


# BROYDN3DLS: Broyden tridiagonal residuals
#   r_i = (3 - 2 x_i) x_i - x_{i-1} - 2 x_{i+1} + 1,  x_0 = x_{n+1} = 0

def _broydn3dls(n):
    def res(x):
        r = (3.0 - 2.0 * x) * x + 1.0
        r[1:] -= x[:-1]
        r[:-1] -= 2.0 * x[1:]
        return r

    def f(x):
        r = res(x)
        return float(r @ r)

    def grad(x):
        r = res(x)
        g = (3.0 - 4.0 * x) * r
        g[:-1] -= r[1:]
        g[1:] -= 2.0 * r[:-1]
        return 2.0 * g

    return Problem("BROYDN3DLS", n, -np.ones(n), f, grad, 0.0)


# DIXMAAN family (Dixon and Maany), n = 3m

_DIXMAAN = {
    # letter: (alpha, beta, gamma, delta, k1, k2, k3, k4)
    "A": (1.0, 0.0, 0.125, 0.125, 0, 0, 0, 0),
    "B": (1.0, 0.0625, 0.0625, 0.0625, 0, 0, 0, 0),
    "C": (1.0, 0.125, 0.125, 0.125, 0, 0, 0, 0),
    "D": (1.0, 0.26, 0.26, 0.26, 0, 0, 0, 0),
    "E": (1.0, 0.0, 0.125, 0.125, 1, 0, 0, 1),
    "F": (1.0, 0.0625, 0.0625, 0.0625, 1, 0, 0, 1),
    "G": (1.0, 0.125, 0.125, 0.125, 1, 0, 0, 1),
    "H": (1.0, 0.26, 0.26, 0.26, 1, 0, 0, 1),
    "I": (1.0, 0.0, 0.125, 0.125, 2, 0, 0, 2),
    "J": (1.0, 0.0625, 0.0625, 0.0625, 2, 0, 0, 2),
    "K": (1.0, 0.125, 0.125, 0.125, 2, 0, 0, 2),
    "L": (1.0, 0.26, 0.26, 0.26, 2, 0, 0, 2),
}


def _dixmaan(letter):
    alpha, beta, gamma, delta, k1, k2, k3, k4 = _DIXMAAN[letter]

    def build(n):
        m = n // 3
        w = np.arange(1, n + 1) / n
        w1, w2, w3, w4 = w ** k1, w[:n - 1] ** k2, w[:2 * m] ** k3, w[:m] ** k4

        def f(x):
            u = x[1:] + x[1:] ** 2
            return float(1.0 + alpha * np.sum(w1 * x * x)
                         + beta * np.sum(w2 * x[:-1] ** 2 * u ** 2)
                         + gamma * np.sum(w3 * x[:2 * m] ** 2 * x[m:] ** 4)
                         + delta * np.sum(w4 * x[:m] * x[2 * m:]))

        def grad(x):
            g = 2.0 * alpha * w1 * x
            u = x[1:] + x[1:] ** 2
            g[:-1] += 2.0 * beta * w2 * x[:-1] * u ** 2
            g[1:] += 2.0 * beta * w2 * x[:-1] ** 2 * u * (1.0 + 2.0 * x[1:])
            g[:2 * m] += 2.0 * gamma * w3 * x[:2 * m] * x[m:] ** 4
            g[m:] += 4.0 * gamma * w3 * x[:2 * m] ** 2 * x[m:] ** 3
            g[:m] += delta * w4 * x[2 * m:]
            g[2 * m:] += delta * w4 * x[:m]
            return g

        return Problem("DIXMAAN" + letter, n, np.full(n, 2.0), f, grad, 1.0)

    return build


# CHNROSNB: Toint's chained Rosenbrock, n = 50
#   sum_{i>=2} 16 alpha_i^2 (x_{i-1} - x_i^2)^2 + (x_i - 1)^2

_CHNROSNB_ALPHA = np.array([
    1.25, 1.40, 2.40, 1.40, 1.75, 1.20, 2.25, 1.20, 1.00, 1.10,
    1.50, 1.60, 1.25, 1.25, 1.20, 1.20, 1.40, 0.50, 0.50, 1.25,
    1.80, 0.75, 1.25, 1.40, 1.60, 2.00, 1.00, 1.60, 1.25, 2.75,
    1.25, 1.25, 1.25, 3.00, 1.50, 2.00, 1.25, 1.40, 1.80, 1.50,
    2.20, 1.40, 1.50, 1.25, 2.00, 1.50, 1.25, 1.40, 0.60, 1.50,
])


def _chnrosnb(n):
    c = 16.0 * _CHNROSNB_ALPHA[1:n] ** 2

    def f(x):
        t = x[:-1] - x[1:] ** 2
        return float(np.sum(c * t * t + (x[1:] - 1.0) ** 2))

    def grad(x):
        t = x[:-1] - x[1:] ** 2
        g = np.zeros_like(x)
        g[:-1] += 2.0 * c * t
        g[1:] += -4.0 * c * t * x[1:] + 2.0 * (x[1:] - 1.0)
        return g

    return Problem("CHNROSNB", n, -np.ones(n), f, grad, 0.0)


# NONDQUAR: (x_1 - x_2)^2 + (x_{n-1} - x_n)^2 + sum_{i<=n-2} (x_i + x_{i+1} + x_n)^4

def _nondquar(n):
    def f(x):
        t = x[:-2] + x[1:-1] + x[-1]
        return float((x[0] - x[1]) ** 2 + (x[-2] - x[-1]) ** 2 + np.sum(t ** 4))

    def grad(x):
        t3 = 4.0 * (x[:-2] + x[1:-1] + x[-1]) ** 3
        g = np.zeros_like(x)
        g[:-2] += t3
        g[1:-1] += t3
        g[-1] += np.sum(t3)
        d1, d2 = 2.0 * (x[0] - x[1]), 2.0 * (x[-2] - x[-1])
        g[0] += d1
        g[1] -= d1
        g[-2] += d2
        g[-1] -= d2
        return g

    x0 = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    return Problem("NONDQUAR", n, x0, f, grad, 0.0)


# TQUARTIC: (x_1 - 1)^2 + sum_{i>=2} (x_1^2 - x_i^2)^2

def _tquartic(n):
    def f(x):
        t = x[0] ** 2 - x[1:] ** 2
        return float((x[0] - 1.0) ** 2 + np.sum(t * t))

    def grad(x):
        t = x[0] ** 2 - x[1:] ** 2
        g = np.empty_like(x)
        g[0] = 2.0 * (x[0] - 1.0) + 4.0 * x[0] * np.sum(t)
        g[1:] = -4.0 * x[1:] * t
        return g

    return Problem("TQUARTIC", n, np.full(n, 0.1), f, grad, 0.0)


# BOX: quartic with arrowhead sparsity (every term couples x_i with x_1, x_n)
#   sum_i (x_i + x_1 + x_n)^4 / 4 + (x_i - 1)^2 / 2
# Stand-in: the reference SIF for BOX was not available when this was
# written, so this matches it in structure only.

def _box(n):
    def f(x):
        t = x + x[0] + x[-1]
        return float(np.sum(0.25 * t ** 4 + 0.5 * (x - 1.0) ** 2))

    def grad(x):
        t3 = (x + x[0] + x[-1]) ** 3
        g = t3 + (x - 1.0)
        s = np.sum(t3)
        g[0] += s
        g[-1] += s
        return g

    return Problem("BOX", n, np.zeros(n), f, grad)


CATALOG = {
    "ARWHEAD": ProblemSpec("ARWHEAD", _arwhead, 100, 5000),
    "LIARWHD": ProblemSpec("LIARWHD", _liarwhd, 100, 5000),
    "POWELLSG": ProblemSpec("POWELLSG", _powellsg, 100, 5000, multiple_of=4, min_dim=4),
    "BDQRTIC": ProblemSpec("BDQRTIC", _bdqrtic, 100, 5000, min_dim=5),
    "BROYDN3DLS": ProblemSpec("BROYDN3DLS", _broydn3dls, 100, 5000),
    "CHNROSNB": ProblemSpec("CHNROSNB", _chnrosnb, 50, 50, fixed_dim=50),
    "NONDQUAR": ProblemSpec("NONDQUAR", _nondquar, 100, 5000, min_dim=3),
    "TQUARTIC": ProblemSpec("TQUARTIC", _tquartic, 100, 5000),
    "BOX": ProblemSpec("BOX", _box, 100, 10000),
}
for _letter in _DIXMAAN:
    CATALOG["DIXMAAN" + _letter] = ProblemSpec(
        "DIXMAAN" + _letter, _dixmaan(_letter), 300, 3000, multiple_of=3, min_dim=3)


def catalog():
    """Names of all available problems, sorted."""
    return sorted(CATALOG)


def make_problem(name, dim=None):
    try:
        spec = CATALOG[name.upper()]
    except KeyError:
        raise UnknownProblem(f"unknown problem {name!r}") from None
    n = spec.default_dim if dim is None else int(dim)
    spec.check_dim(n)
    return spec.build(n)


def fd_gradient_check(problem, x, h=None):
    """Worst componentwise error of the analytic gradient vs central differences.

    The step for component i is ``h * max(1, |x_i|)`` (h defaults to 1e-6);
    errors are relative to ``max(1, |g_i|)``.
    """
    h = 1e-6 if h is None else h
    x = np.asarray(x, dtype=float)
    g = problem.grad(x)
    fd = np.empty_like(x)
    for i in range(x.size):
        step = h * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        fd[i] = (problem.f(xp) - problem.f(xm)) / (xp[i] - xm[i])
    err = np.abs(g - fd) / np.maximum(1.0, np.abs(g))
    return float(err.max()) if err.size else 0.0
