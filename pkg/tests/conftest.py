import numpy as np
import pytest


def gauss_jordan_inverse(A):
    """Plain Gauss-Jordan inverse with partial pivoting, independent of LAPACK."""
    n = len(A)
    M = [list(map(float, row)) + [1.0 if i == j else 0.0 for j in range(n)]
         for i, row in enumerate(A)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(M[r][col]))
        M[col], M[piv] = M[piv], M[col]
        p = M[col][col]
        M[col] = [v / p for v in M[col]]
        for r in range(n):
            if r != col:
                f = M[r][col]
                M[r] = [a - f * b for a, b in zip(M[r], M[col])]
    return np.array([row[n:] for row in M])


def random_small_nnls_suite(seed, count=200):
    """Random NNLS instances: D in [2, 10], N in [2, 8], standard normal entries."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        D = int(rng.integers(2, 11))
        N = int(rng.integers(2, 9))
        out.append((rng.standard_normal((D, N)), rng.standard_normal(D)))
    return out


def relative_rho(X, fraction=0.02):
    """Penalty proportional to the mean squared column norm (scale covariant)."""
    X = np.asarray(X)
    return fraction * float(np.sum(X * X)) / X.shape[1]


def kkt_violations(X, y, c, tol=1e-4):
    """Indices breaking the NNLS first-order conditions at ``c``."""
    g = 2.0 * X.T @ (X @ c - y)
    at_zero = c <= 1e-8
    on_support = c > 1e-6
    bad = (at_zero & (g < -tol)) | (on_support & (np.abs(g) > tol))
    return np.flatnonzero(bad)


def minimizer_is_unique(X, y, c_opt, tol=1e-8):
    """True when the columns with vanishing gradient at the optimum are independent."""
    g = 2.0 * X.T @ (X @ c_opt - y)
    free = np.abs(g) < tol
    k = int(free.sum())
    return k == 0 or np.linalg.matrix_rank(X[:, free]) == k


def orthogonal_class_fixture(rng, n_classes=3, dim=20, per_class=3, sigma=0.05):
    """Classes around mutually orthogonal unit means, isotropic noise."""
    means = np.eye(dim)[:, :n_classes]
    cols, labels = [], []
    for k in range(n_classes):
        for _ in range(per_class):
            cols.append(means[:, k] + sigma * rng.standard_normal(dim))
            labels.append(k)
    return np.column_stack(cols), np.array(labels), means


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Every NNLS solve anywhere in the suite is audited for exact nonnegativity of z.
NONNEG_AUDIT = {"solves": 0, "iterations": 0, "violations": 0}


@pytest.fixture(autouse=True)
def _audit_nonnegativity(monkeypatch):
    from nrc import solvers

    original = solvers._admm
    violations_before = NONNEG_AUDIT["violations"]

    def audited(fact, xty, cfg, z_step, callback=None):
        if z_step is not solvers._project_nonneg:
            return original(fact, xty, cfg, z_step, callback)

        def checked(v):
            z = z_step(v)
            NONNEG_AUDIT["iterations"] += 1
            if np.any(z < 0):
                NONNEG_AUDIT["violations"] += 1
            return z

        result = original(fact, xty, cfg, checked, callback)
        NONNEG_AUDIT["solves"] += 1
        if np.any(result.coefficients < 0):
            NONNEG_AUDIT["violations"] += 1
        return result

    monkeypatch.setattr(solvers, "_admm", audited)
    yield
    assert NONNEG_AUDIT["violations"] == violations_before, "an NNLS solve produced a negative z entry"


# Acceptance outcomes, keyed by criterion number, printed at the end of the session.
ACCEPTANCE = {}


def record_acceptance(number, title, passed, detail):
    ACCEPTANCE[number] = (title, passed, detail)
    print(f"[criterion {number}] {'PASS' if passed else 'FAIL'}  {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        if number == 7 and passed is not None:
            # the nonnegativity half of this criterion spans the whole session
            clean = NONNEG_AUDIT["violations"] == 0
            detail += (f"; z >= 0 audit: {NONNEG_AUDIT['solves']} solves, "
                       f"{NONNEG_AUDIT['iterations']} z-updates, "
                       f"{NONNEG_AUDIT['violations']} violations")
            passed = passed and clean
        tr.write_line(f"[criterion {number}] {'PASS' if passed else 'FAIL'}  {title}: {detail}")
