"""Brute-force reference values for the oracle tests.

Run with `python3 generate.py`; paste the printed arrays into oracles.rs.
"""

import numpy as np


def signed(k, n):
    return k if 2 * k <= n else k - n


def dictionary(x):
    n, m = x.shape
    out = np.zeros((m * n, m * n), dtype=complex)
    for l1 in range(m):
        for k1 in range(n):
            for l2 in range(m):
                for k2 in range(n):
                    ls = (l1 - l2) % m
                    v = x[(k1 - k2) % n, ls] * np.exp(2j * np.pi * signed(k2, n) * ls / (m * n))
                    if l1 < l2:
                        v *= np.exp(-2j * np.pi * k1 / n)
                    out[k1 + n * l1, k2 + n * l2] = v
    return out


def time_domain_link(x, taps, cp):
    n, m = x.shape
    tf = np.zeros((n, m), dtype=complex)
    for nn in range(n):
        for mm in range(m):
            tf[nn, mm] = sum(
                x[k, l] * np.exp(2j * np.pi * (nn * k / n - mm * l / m))
                for k in range(n)
                for l in range(m)
            ) / np.sqrt(n * m)
    body = np.concatenate(
        [[sum(tf[nn, mm] * np.exp(2j * np.pi * mm * t / m) for mm in range(m)) / np.sqrt(m) for t in range(m)] for nn in range(n)]
    )
    s = np.concatenate([body[len(body) - cp:], body]) if cp else body
    r = np.zeros_like(s)
    for k, l, h in taps:
        for i in range(len(s)):
            if i - l >= 0:
                r[i] += h * np.exp(2j * np.pi * signed(k, n) * (i - cp - l) / (n * m)) * s[i - l]
    rb = r[cp:].reshape(n, m)
    rtf = np.array([[sum(rb[nn, t] * np.exp(-2j * np.pi * mm * t / m) for t in range(m)) / np.sqrt(m) for mm in range(m)] for nn in range(n)])
    y = np.zeros((n, m), dtype=complex)
    for k in range(n):
        for l in range(m):
            y[k, l] = sum(
                rtf[nn, mm] * np.exp(-2j * np.pi * (nn * k / n - mm * l / m))
                for nn in range(n)
                for mm in range(m)
            ) / np.sqrt(n * m)
    return y


def show(name, a):
    print(f"// {name}: shape {a.shape}")
    for row in np.atleast_2d(a):
        print("    [" + ", ".join(f"c({v.real:.15e}, {v.imag:.15e})" for v in row) + "],")


x22 = np.array([[1 + 2j, -1 + 0.5j], [0.3 - 1j, 2 - 2j]])
x23 = np.array([[1 + 1j, -1 + 1j, 1 - 1j], [-1 - 1j, 1 + 1j, 1 + 1j]]) / np.sqrt(2)
show("dictionary x22", dictionary(x22))
show("dictionary x23", dictionary(x23))
x34 = np.array([[(0.5 * a - 1) + 1j * ((b * 7 + a * 3) % 5 - 2) for b in range(4)] for a in range(3)])
taps = [(1, 2, 0.8 - 0.3j), (2, 0, 0.25j)]
show("time link x34 cp=2", time_domain_link(x34, taps, 2))
