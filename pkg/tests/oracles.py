"""Independent reference computations used by the unit and acceptance tests.

Nothing here calls into the package's FFT machinery: fields are evaluated by
explicit exponential sums and integrals by composite Gauss-Legendre rules.
"""

import numpy as np

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def evaluate(coeffs, x):
    """sum_n c_n exp(i n x) at the points x; coeffs may be batched (b, 2N+1)."""
    c = np.atleast_2d(coeffs)
    N = (c.shape[-1] - 1) // 2
    E = np.exp(1j * np.outer(np.asarray(x, dtype=float).ravel(), np.arange(-N, N + 1)))
    return c @ E.T


def _gl_nodes(a, b):
    """Gauss-Legendre nodes and weights mapped onto [a, b] (vectorised over a, b)."""
    a, b = np.asarray(a, dtype=float)[..., None], np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return a + half * (_GL_X + 1), half * _GL_W


def nested_quadrature_J(coeffs, x, panels=64):
    """(1/2pi) int_0^{2pi} int_theta^x (|f|^2 - m) dy dtheta by nested Gauss-Legendre.

    The inner integral from 0 to t is a cumulative sum over full panels plus
    a partial panel; the outer average over theta reuses the same panels.
    Returns an array (batch, len(x)).
    """
    c = np.atleast_2d(coeffs)
    m = np.sum(np.abs(c) ** 2, axis=-1, keepdims=True)
    edges = np.linspace(0.0, 2 * np.pi, panels + 1)

    def h(pts):
        return np.abs(evaluate(c, pts)) ** 2 - m

    nodes, weights = _gl_nodes(edges[:-1], edges[1:])
    full = (h(nodes).reshape(len(c), panels, -1) * weights).sum(axis=-1)
    cum = np.concatenate([np.zeros((len(c), 1)), np.cumsum(full, axis=-1)], axis=-1)

    def primitive(t):
        t = np.asarray(t, dtype=float).ravel()
        k = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, panels - 1)
        pn, pw = _gl_nodes(edges[k], t)
        part = (h(pn).reshape(len(c), len(t), -1) * pw).sum(axis=-1)
        return cum[:, k] + part

    outer = (primitive(nodes).reshape(len(c), panels, -1) * weights).sum(axis=(-1, -2)) / (2 * np.pi)
    return primitive(x) - outer[:, None]


def bridge_precision_log_ratio(X, k, s):
    """log p(X - k) - log p(X) for a real bridge pinned at 0 on the clock grid s.

    Uses the tridiagonal precision matrix of the interior nodes, Q_ij built
    from 1/ds on the sub- and super-diagonals, instead of the covariance.
    """
    X, k, s = (np.asarray(a, dtype=float) for a in (X, k, s))
    ds = np.diff(s)
    inv = 1.0 / ds
    main = inv[:-1] + inv[1:]
    off = -inv[1:-1]

    def quad(z):
        z = z[1:-1]
        return np.dot(main * z, z) + 2 * np.dot(off * z[:-1], z[1:])

    return -0.5 * quad(X - k) + 0.5 * quad(X)


def partial_sum_variance(N):
    """sum_{|n| <= N} 1/(1 + n^2)."""
    n = np.arange(-N, N + 1)
    return float(np.sum(1.0 / (1.0 + n**2)))
