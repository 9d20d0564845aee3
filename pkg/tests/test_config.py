import pytest

from redcolloc import StudyConfig, make_config, read_config_file
from redcolloc.config import parse_grid


def test_defaults():
    cfg = StudyConfig()
    assert (cfg.nx, cfg.train_grid, cfg.samples, cfg.tol) == (40, (32, 32), 200, 1e-8)


def test_file_then_overrides(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# comment\nnx = 20\ntrain-grid = 8x4\nmethod = ercm\ntol=1e-6\n")
    settings = read_config_file(f)
    assert settings == {"nx": 20, "train_grid": (8, 4), "method": "ercm", "tol": 1e-6}
    cfg = make_config(settings, {"nx": 24, "method": None})
    assert cfg.nx == 24 and cfg.method == "ercm" and cfg.train_grid == (8, 4)


def test_unknown_key(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("colour = blue\n")
    with pytest.raises(ValueError, match="unknown setting"):
        read_config_file(f)


def test_malformed_file(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("just some words\n")
    with pytest.raises(ValueError):
        read_config_file(f)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(method="galerkin"),
        dict(problem="heat"),
        dict(nx=2),
        dict(nmax=0),
        dict(tol=-1.0),
        dict(train_grid=(0, 3)),
        dict(operator="dxx | 1"),
    ],
)
def test_validation(kwargs):
    with pytest.raises(ValueError):
        StudyConfig(**kwargs)


def test_grid_parse():
    assert parse_grid("32x16") == (32, 16)
    with pytest.raises(ValueError):
        parse_grid("32by16")


def test_custom_problem():
    cfg = StudyConfig(
        problem="poisson",
        nx=8,
        train_grid=(3,),
        operator="-dxx | 1 ; -dyy | mu1",
        rhs="1 | 1",
        bounds="0.5:2",
    )
    p = cfg.build_problem()
    assert p.name == "poisson" and p.n_operator_terms == 2 and p.domain.dim == 1


def test_train_grid_dimension_mismatch():
    with pytest.raises(ValueError):
        StudyConfig(problem="c", train_grid=(3, 3), operator="dxx | 1", rhs="1 | 1", bounds="0:1").build_problem()


def test_echo_is_flat_strings():
    echo = StudyConfig(mu=(1.0, 0.5)).echo()
    assert echo["mu"] == "1.0,0.5" and echo["train_grid"] == "32,32"
    assert all(isinstance(v, str) for v in echo.values())
