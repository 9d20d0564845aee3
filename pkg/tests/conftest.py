import numpy as np
import pytest

from redcolloc import EmpiricalRCM, LeastSquaresRCM, build_problem


@pytest.fixture(scope="session")
def aniso12():
    return build_problem("anisotropic", 12).with_train_shape((6, 6))


@pytest.fixture(scope="session")
def diff12():
    return build_problem("diffusion", 12).with_train_shape((6, 6))


@pytest.fixture(scope="session", params=["anisotropic", "diffusion"])
def small_problem(request, aniso12, diff12):
    return {"anisotropic": aniso12, "diffusion": diff12}[request.param]


@pytest.fixture(scope="session")
def ls_model(aniso12):
    return LeastSquaresRCM(aniso12, n_max=8, tol=0.0, random_state=0).fit()


@pytest.fixture(scope="session")
def er_model(aniso12):
    return EmpiricalRCM(aniso12, n_max=8, tol=0.0, random_state=0).fit()


@pytest.fixture(scope="session", params=["lsrcm", "ercm"])
def fitted(request, ls_model, er_model):
    return {"lsrcm": ls_model, "ercm": er_model}[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record and print one PASS/FAIL line per acceptance criterion."""

    def report(number, title, ok, detail):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line, flush=True)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
