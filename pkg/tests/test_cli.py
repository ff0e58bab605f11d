import json

import pytest
import yaml
from click.testing import CliRunner
from hypothesis import given
from hypothesis import strategies as st

from artifact.cli import main
from artifact.config import RunConfig, dump_config, load_config
from artifact.errors import ValidationError


def _run(tmp_path, args, config=None):
    cfg = []
    if config is not None:
        path = tmp_path / "cfg.yaml"
        path.write_text(yaml.safe_dump(config))
        cfg = ["--config", str(path)]
    out = tmp_path / "out"
    res = CliRunner().invoke(main, [*args, *cfg, "--out", str(out)])
    return res, out


def test_default_config_roundtrip(tmp_path):
    cfg = load_config(None)
    p = tmp_path / "c.yaml"
    p.write_text(dump_config(cfg))
    assert load_config(p).to_dict() == cfg.to_dict()


@given(st.integers(2, 10_000), st.floats(0.01, 0.49), st.integers(1, 40), st.floats(0.1, 1e4))
def test_config_roundtrip_property(N, ell, M_eta, zeta):
    cfg = RunConfig(N=N, ell=ell, M_eta=M_eta, zeta=zeta)
    back = RunConfig.from_dict(yaml.safe_load(dump_config(cfg)))
    assert back.to_dict() == cfg.to_dict()


@pytest.mark.parametrize("data", [
    {"bogus": 1},
    {"potential": {"shape": "cube"}},
    {"potential": {"kind": "tabulated"}},
    {"N": 1},
    {"ell": 0.5},
    {"M_sum": 10},
    {"microlab": {"F": 1.0, "G": 2.0}},
])
def test_config_rejects(data):
    with pytest.raises(ValidationError, match="config|potential"):
        RunConfig.from_dict(data)


def test_validation_exit_code(tmp_path):
    res, _ = _run(tmp_path, ["energy"], {"N": 1})
    assert res.exit_code == 2
    assert "config.validate" in res.output


@pytest.mark.filterwarnings("ignore::artifact.errors.NumericalWarning")
def test_strict_promotes_warnings(tmp_path):
    # a strong sphere leaves the weak-coupling regime of the Born series
    res, _ = _run(tmp_path, ["born", "--strict"], {"born": {"v0": 400.0}})
    assert res.exit_code == 3
    res, _ = _run(tmp_path, ["born"], {"born": {"v0": 400.0}})
    assert res.exit_code == 0


def test_energy_zero_potential_trivial(tmp_path):
    res, out = _run(tmp_path, ["energy"], {"potential": {"kind": "zero"}})
    assert res.exit_code == 0, res.output
    man = json.loads((out / "manifest.json").read_text())
    assert man["results"]["energy"]["E_N"] == 0.0
    assert man["results"]["energy"]["path"] == "trivial"


def test_spectrum_below_gap_is_vacuum(tmp_path):
    res, out = _run(tmp_path, ["spectrum"], {"zeta": 1.0, "M_eta": 4})
    assert res.exit_code == 0, res.output
    assert (out / "spectrum.csv").read_text() == "nu,multiplicity,occupations\n0,1,vacuum\n"


def test_fock_verify_outputs(tmp_path):
    res, out = _run(tmp_path, ["fock-verify", "--seed", "7"])
    assert res.exit_code == 0, res.output
    man = json.loads((out / "manifest.json").read_text())
    assert all(v == "PASS" for v in man["checks"].values())
    assert man["results"]["fock-verify"]["dropped"] == {"L3": 6, "L4": 80}
    for name in ("fock_scaling.csv", "fock_scaling.png", "L_N.mtx", "timing.json", "config.yaml"):
        assert (out / name).exists()


def test_latticesum_trace_csv(tmp_path):
    res, out = _run(tmp_path, ["latticesum"], {"M_sum": 60, "ell_values": [0.25]})
    assert res.exit_code == 0, res.output
    head = (out / "e_lambda_trace.csv").read_text().splitlines()
    assert head[0] == "cutoff,partial,averaged,twice_averaged"
    assert len(head) == 61


def test_short_trace_is_nonconvergence(tmp_path):
    res, _ = _run(tmp_path, ["latticesum"], {"M_sum": 30})
    assert res.exit_code == 3
    assert "lattice.e_lambda" in res.output
