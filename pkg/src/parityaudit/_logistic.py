import numpy as np
from scipy import special


def newton_logistic(X, y, sample_weight=None, l2=0.0, max_iter=100, tol=1e-8):
    """Weighted (optionally ridge-penalised) logistic regression by damped Newton.

    Column 0 of ``X`` is the intercept and is never penalised. Returns
    ``(beta, n_iter, grad_norm)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    p_dim = X.shape[1]
    ridge = np.full(p_dim, float(l2))
    ridge[0] = 0.0
    ybar = np.clip(np.average(y, weights=w), 1e-6, 1 - 1e-6)
    beta = np.zeros(p_dim)
    beta[0] = np.log(ybar / (1 - ybar))

    def objective(b):
        eta = X @ b
        # -loglik = sum w [log(1 + e^eta) - y eta]
        return float(np.sum(w * (np.logaddexp(0.0, eta) - y * eta)) + 0.5 * np.sum(ridge * b * b))

    f = objective(beta)
    grad_norm = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        p = special.expit(X @ beta)
        grad = X.T @ (w * (p - y)) + ridge * beta
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < tol:
            it -= 1
            break
        hess = (X * (w * p * (1 - p))[:, None]).T @ X + np.diag(ridge)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        while t > 1e-10:
            cand = beta - t * step
            fc = objective(cand)
            if fc <= f:
                break
            t *= 0.5
        else:
            break
        beta, f = cand, fc
    return beta, it, grad_norm
