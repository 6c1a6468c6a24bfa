import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ultrakin.config import MODES, ConfigError, RunConfig, load_config, parse_config, render_config

_pos = st.floats(1e-6, 1e6, allow_nan=False, allow_infinity=False)
_any = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
_opt = lambda s: st.none() | s  # noqa: E731


@st.composite
def _configs(draw):
    reaction = draw(_opt(st.sampled_from(["A + A <k=1.0> A2", "A + A <k=0.5> A2; 0 <k=2> A",
                                          "A <k=1> B\n# comment\n0 <k=3> A"])))
    network_file = None if reaction is not None else draw(_opt(st.just("net.txt")))
    return RunConfig(
        mode=draw(st.sampled_from(MODES)),
        out=draw(st.sampled_from(["out", "results/run 1"])),
        reaction=reaction,
        network_file=network_file,
        energies=draw(_opt(st.just("A: 0.5, A2: 1.25"))),
        formats=draw(st.sampled_from([("csv",), ("json",), ("csv", "json")])),
        seed=draw(_opt(st.integers(0, 2**31))),
        n=draw(_opt(_pos)),
        cutoff=draw(_opt(st.integers(0, 500))),
        tau_max=draw(_opt(_pos)),
        dtau=draw(_opt(_pos)),
        entropy_dtau=draw(_opt(_pos)),
        ns=draw(_opt(st.lists(_pos, min_size=1, max_size=4).map(tuple))),
        rtol=draw(_opt(_pos)),
        atol=draw(_opt(_pos)),
        initial=draw(_opt(st.lists(_any, min_size=1, max_size=3).map(tuple))),
        c1=draw(_opt(_any)),
        c2=draw(_opt(_any)),
        energy=draw(_opt(_any)),
        trajectories=draw(_opt(st.integers(1, 100))),
        horizon=draw(_opt(_pos)),
        grid=draw(_opt(st.integers(8, 256))),
        c1_grid=draw(_opt(st.lists(_pos, min_size=1, max_size=6).map(tuple))),
    )


@settings(max_examples=300, deadline=None)
@given(_configs())
def test_roundtrip(cfg):
    assert parse_config(render_config(cfg)) == cfg


def test_example_file(tmp_path):
    text = """
    [run]
    mode = poincare
    out = results
    format = csv, json
    seed = 7

    [chaos]
    energy = 100.0
    c2 = 1.1
    """
    path = tmp_path / "run.cfg"
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.mode == "poincare"
    assert cfg.formats == ("csv", "json")
    assert cfg.seed == 7 and cfg.energy == 100.0 and cfg.c2 == 1.1


@pytest.mark.parametrize("text", [
    "mode = nonsense",
    "out = x",
    "mode = quantum\nbogus = 1",
    "mode = quantum\nn = 5\nn = 6",
    "mode = quantum\nn = -1",
    "mode = quantum\nn = abc",
    "mode = quantum\nformat = xml",
    "mode = quantum\ngrid = 4",
    "mode = quantum\nreaction = A <k=1> B\nnetwork = f.txt",
    "mode = quantum\njust text",
])
def test_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/run.cfg")
