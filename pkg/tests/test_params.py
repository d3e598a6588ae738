import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from moistns.errors import ParseError, ValidationError
from moistns.params import PhysParams, RunConfig, dumps_config, gamma, load_config, loads_config


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("")
    p, cfg = load_config(path)
    assert p.simplified_mode is True
    assert p.q_vs_mode == "zero"
    assert p.V_r_mode == "constant" and p.V_r == 1.0
    assert p.g == 0.0
    assert cfg == RunConfig()


def test_negative_lambda_accepted_when_2mu_plus_lambda_positive():
    p, _ = loads_config("mu = 1\nlambda = -1\n")
    assert p.lam == -1.0


def test_lambda_too_negative_rejected():
    with pytest.raises(ValidationError) as exc:
        loads_config("mu = 1\nlambda = -2\n")
    assert "2*mu + lambda > 0" in exc.value.invariant


def test_cpd_equal_rd_rejected():
    with pytest.raises(ValidationError) as exc:
        loads_config("c_pd = 1\nR_d = 1\n")
    assert "c_pd > R_d" in exc.value.invariant


@pytest.mark.parametrize("c_pd,R_d,expected", [(2.0, 1.0, 2.0), (1004.0, 287.0, 1004.0 / 717.0)])
def test_gamma_values(c_pd, R_d, expected):
    assert gamma(PhysParams(c_pd=c_pd, R_d=R_d)) == pytest.approx(expected, rel=1e-15)


def test_gamma_degenerate():
    with pytest.raises(ValidationError):
        gamma(PhysParams(c_pd=1.0, R_d=1.0))


@pytest.mark.parametrize("text", [
    "mu 1\n",
    "[section]\n",
    "a.b = 1\n",
    "mu = [1, 2]\n",
    "mu = one\n",
    "unknown_key = 3\n",
    "mu = 1\nmu = 2\n",
    "nx = 1.5\n",
    "simplified_mode = maybe\n",
])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        loads_config(text)


def test_comments_and_whitespace():
    p, cfg = loads_config("# header\n  mu = 2   # trailing\n\nnx=8\n")
    assert p.mu == 2.0 and cfg.nx == 8


@pytest.mark.parametrize("text,invariant", [
    ("nx = 3\n", "nx, ny, nz >= 4"),
    ("t_end = 0\n", "t_end > 0"),
    ("cfl = 1.5\n", "cfl in (0, 1]"),
    ("mode = sideways\n", "mode"),
])
def test_run_config_invariants(text, invariant):
    with pytest.raises(ValidationError) as exc:
        loads_config(text)
    assert invariant in exc.value.invariant


def test_missing_file_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "nope.cfg")


def test_dump_load_round_trip():
    p = PhysParams(mu=0.7, lam=0.3, q_vs_mode="constant", q_vs=0.25)
    cfg = RunConfig(nx=8, dt=0.01, mode="both")
    p2, cfg2 = loads_config(dumps_config(p, cfg))
    assert p2 == p and cfg2 == cfg
    assert p2.digest() == p.digest()


def test_digest_changes_with_params():
    assert PhysParams().digest() != PhysParams(mu=2.0).digest()


positive = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)
anyfloat = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)


@given(mu=anyfloat, lam=anyfloat, c_pd=positive, R_d=positive, c_ev=anyfloat, q_ac=anyfloat, q_vs_star=anyfloat)
def test_random_params_load_or_name_invariant(mu, lam, c_pd, R_d, c_ev, q_ac, q_vs_star):
    text = (f"mu = {mu!r}\nlambda = {lam!r}\nc_pd = {c_pd!r}\nR_d = {R_d!r}\n"
            f"c_ev = {c_ev!r}\nq_ac = {q_ac!r}\nq_vs_star = {q_vs_star!r}\n")
    try:
        p, _ = loads_config(text)
    except ValidationError as exc:
        assert exc.invariant
        return
    # accepted sets are exactly as written, never clamped
    assert (p.mu, p.lam, p.c_pd, p.R_d, p.c_ev, p.q_ac, p.q_vs_star) == (mu, lam, c_pd, R_d, c_ev, q_ac, q_vs_star)
    assert p.mu > 0 and 2 * p.mu + p.lam > 0 and p.c_pd > p.R_d
    assert p.c_ev > 0 and p.q_ac > 0 and p.q_vs_star >= 0
    assert gamma(p) > 1 and math.isfinite(gamma(p))
