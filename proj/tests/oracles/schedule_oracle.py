"""Scalar recomputation of schedule values, AdamW steps and single sampler steps.

Everything here is plain float64 Python, written from the formulas rather than
from the C++ sources. The printed values are frozen into the unit tests.
"""

import math

import numpy as np


def linear_beta_alpha(T, t):
    betas = [1e-4 + (2e-2 - 1e-4) * s / (T - 1) for s in range(T)]
    prod = 1.0
    for s in range(t + 1):
        prod *= math.sqrt(1.0 - betas[s])
    return prod


def cosine_alpha(T, t, s=0.008):
    f = lambda u: math.cos((u / T + s) / (1 + s) * math.pi / 2)
    return f(t) / f(0)


def cosine_rate(T, t, s=0.008):
    th = (t / T + s) / (1 + s) * math.pi / 2
    return -math.tan(th) * math.pi / (2 * T * (1 + s))


def linear_rate(T, t):
    beta = 1e-4 + (2e-2 - 1e-4) * t / (T - 1)
    return 0.5 * math.log(1 - beta)


def f32(x):
    return float(np.float32(x))


def adamw_trajectory(p, grads, lr, wd, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = []
    for k, g in enumerate(grads, start=1):
        m = f32(b1 * m + (1 - b1) * g)
        v = f32(b2 * v + (1 - b2) * g * g)
        mhat = m / (1 - b1**k)
        vhat = v / (1 - b2**k)
        p = f32(p * (1 - lr * wd) - lr * mhat / (math.sqrt(vhat) + eps))
        out.append(p)
    return out


def euler_single(alpha_fn, rate_fn, T, t, tp, z, eps):
    a = alpha_fn(T, t)
    sigma = math.sqrt(1 - a * a)
    dt = tp - t
    r = rate_fn(T, t)
    return z + dt * r * (z - eps / sigma)


if __name__ == "__main__":
    for t in (0, 1, 10, 100, 500, 999):
        print(f"linear-beta alpha[{t}] = {linear_beta_alpha(1000, t):.12g}")
    for t in (0, 39, 500, 959, 999):
        print(f"cosine alpha[{t}] = {cosine_alpha(1000, t):.12g}")
    print("adamw p0=0.5 g=[0.1,-0.2,0.3] lr=1e-2 wd=1e-2:",
          [f"{x:.9g}" for x in adamw_trajectory(0.5, [0.1, -0.2, 0.3], 1e-2, 1e-2)])
    print("adamw p0=-1.25 g=[2,2,2] lr=1e-3 wd=0:",
          [f"{x:.9g}" for x in adamw_trajectory(-1.25, [2.0, 2.0, 2.0], 1e-3, 0.0)])
    print(f"euler cosine 999->0 z=1 eps=0.5: {euler_single(cosine_alpha, cosine_rate, 1000, 999, 0, 1.0, 0.5):.12g}")
    print(f"euler cosine 500->460 z=1 eps=0.5: {euler_single(cosine_alpha, cosine_rate, 1000, 500, 460, 1.0, 0.5):.12g}")
    print(f"euler linear 999->0 z=1 eps=0.5: "
          f"{euler_single(linear_beta_alpha, linear_rate, 1000, 999, 0, 1.0, 0.5):.12g}")
