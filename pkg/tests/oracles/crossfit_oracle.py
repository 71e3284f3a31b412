"""Two-fold cross-fitted AIPW on eight records, computed step by step with numpy linear algebra.

Outcome model: least squares of Y on (1, X, W) via the normal equations.
Exposure model: logistic regression of X on (1, W) via hand-written Newton steps.
"""
import numpy as np

W = np.array([1.0, 4.0, 2.5, 3.0, 2.0, 3.5, 4.5, 1.5])
X = np.array([1, 1, 0, 0, 1, 0, 1, 0], dtype=float)
Y = np.array([2.1, 3.9, 1.2, 2.0, 2.6, 1.1, 1.4, 3.3])
FOLD = np.array([0, 0, 0, 0, 1, 1, 1, 1])


def ols(A, y):
    return np.linalg.solve(A.T @ A, A.T @ y)


def logistic(A, x, iters=100):
    b = np.zeros(A.shape[1])
    for _ in range(iters):
        p = 1 / (1 + np.exp(-A @ b))
        step = np.linalg.solve(A.T @ (A * (p * (1 - p))[:, None]), A.T @ (x - p))
        b += step
        if np.max(np.abs(step)) < 1e-14:
            break
    return b


def run():
    E1, E0, PS = np.empty(8), np.empty(8), np.empty(8)
    for k in (0, 1):
        tr, te = FOLD != k, FOLD == k
        beta = ols(np.column_stack([np.ones(tr.sum()), X[tr], W[tr]]), Y[tr])
        gamma = logistic(np.column_stack([np.ones(tr.sum()), W[tr]]), X[tr])
        E1[te] = beta[0] + beta[1] + beta[2] * W[te]
        E0[te] = beta[0] + beta[2] * W[te]
        PS[te] = 1 / (1 + np.exp(-(gamma[0] + gamma[1] * W[te])))
    phi = E1 - E0 + X * (Y - E1) / PS - (1 - X) * (Y - E0) / (1 - PS)
    psi = phi.mean()
    se = np.sqrt(np.sum((phi - psi) ** 2) / 7 / 8)
    return {"E1": E1, "E0": E0, "PS": PS, "psi": psi, "se": se}


if __name__ == "__main__":
    r = run()
    for k, v in r.items():
        print(k, v)
