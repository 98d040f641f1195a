"""Independent dense 2^N reference for gates and observables (tests only)."""
import numpy as np

SX = np.array([[0, 0.5], [0.5, 0]], complex)
SY = np.array([[0, -0.5j], [0.5j, 0]])
SZ = np.array([[0.5, 0], [0, -0.5]], complex)
I2 = np.eye(2, dtype=complex)


def site_ops(N, ops):
    """Kronecker product with ``ops[site]`` on given sites; bit j of the index is site j."""
    out = np.ones((1, 1), complex)
    for site in reversed(range(N)):
        out = np.kron(out, ops.get(site, I2))
    return out


def xy_matrix(N, i, j, theta):
    U = np.eye(1 << N, dtype=complex)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    for b in range(1 << N):
        bi, bj = (b >> i) & 1, (b >> j) & 1
        if bi == 0 and bj == 1:
            partner = b ^ (1 << i) ^ (1 << j)
            # |01> -> c|01> - s|10>, |10> -> c|10> + s|01>
            U[b, b] = c
            U[partner, b] = -s
            U[partner, partner] = c
            U[b, partner] = s
    return U


def zz_matrix(N, i, j, theta):
    Z = 2 * site_ops(N, {i: SZ}) @ (2 * site_ops(N, {j: SZ}))
    return np.diag(np.exp(-1j * theta * np.diag(Z)))


def z_matrix(N, j, theta):
    return np.diag(np.exp(-1j * theta * np.diag(2 * site_ops(N, {j: SZ}))))


def heisenberg(N, i, j):
    return sum(site_ops(N, {i: op}) @ site_ops(N, {j: op}) for op in (SX, SY, SZ))


def sz(N, j):
    return site_ops(N, {j: SZ})
