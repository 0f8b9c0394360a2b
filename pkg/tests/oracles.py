"""Independent numerical oracles shared by unit and acceptance tests."""
import numpy as np

FD_STEP = 1e-5


def central_difference(f, x, h=FD_STEP):
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def relative_error(a, b, floor=1e-12):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))
