import textwrap

import pytest

from lossy_sched import NumericalError, PolicyMatrix, StateSpace, cli
from lossy_sched.config import ParseError, parse_config, parse_config_text

MINIMAL = """
[experiment]
mode = optimize
[scheduler]
B = 0
N = 1
theta_tar = 0.3
nu_d = 0.02
"""


def _write(tmp_path, body, name="exp.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(body))
    return path


def test_minimal_config_defaults():
    spec = parse_config_text(MINIMAL)
    assert spec.mode == "optimize" and spec.seeds == (0,)
    assert spec.scheduler.B == (0,) and spec.scheduler.N == (1,)
    assert spec.scheduler.C == 0.5 and spec.scheduler.delta == 0.01
    assert spec.anneal.T0 == 1.0 and spec.anneal.c_sa == 1.0 and spec.anneal.n_temps == 100
    assert spec.anneal.proposals_per_temp is None
    assert spec.sim.K == 1000 and spec.sim.T == 10_000
    assert spec.output_path == "results.csv"


def test_epsilon_above_target():
    with pytest.raises(ParseError, match="continuity bound") as exc:
        parse_config_text(MINIMAL + "epsilon = 0.5\n")
    assert exc.value.key == "scheduler.epsilon"


def test_sweep_points():
    text = MINIMAL.replace("optimize", "sweep-epsilon") + "epsilons = 0.005, 0.01, 0.02, 0.05\n"
    assert parse_config_text(text).scheduler.epsilons == (0.005, 0.01, 0.02, 0.05)
    with pytest.raises(ParseError, match="scheduler.epsilons"):
        parse_config_text(MINIMAL.replace("optimize", "sweep-epsilon"))


@pytest.mark.parametrize("edit, key", [
    (lambda t: t.replace("optimize", "anneal-everything"), "experiment.mode"),
    (lambda t: t.replace("nu_d = 0.02\n", ""), "scheduler.nu_d"),
    (lambda t: t.replace("nu_d = 0.02", "nu_d = 1.5"), "scheduler.nu_d"),
    (lambda t: t + "colour = blue\n", "scheduler.colour"),
    (lambda t: t + "[plots]\n", "plots"),
    (lambda t: t.replace("N = 1", "N = one"), "scheduler.n"),
    (lambda t: t + "C = -1\n", "scheduler.C"),
    (lambda t: t.replace("optimize", "buffer-search"), "scheduler.epsilon"),
    (lambda t: t.replace("optimize", "simulate"), "sim.policy"),
])
def test_parse_errors_name_the_key(edit, key):
    with pytest.raises(ParseError) as exc:
        parse_config_text(edit(MINIMAL))
    assert exc.value.key.lower() == key.lower()


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        parse_config(tmp_path / "nope.ini")


def test_policy_path_relative_to_config(tmp_path):
    path = _write(tmp_path, MINIMAL.replace("optimize", "simulate") + "[sim]\npolicy = p.txt\n")
    assert parse_config(path).sim.policy == str(tmp_path / "p.txt")


QUICK = MINIMAL + """
[anneal]
n_temps = 4
[sim]
K = 50
T = 100
"""


def test_cli_parse_error_exit(tmp_path, capsys):
    path = _write(tmp_path, MINIMAL.replace("theta_tar = 0.3", "theta_tar = 2"))
    assert cli.main([str(path)]) == cli.EXIT_PARSE
    assert "scheduler.theta_tar" in capsys.readouterr().err


def test_cli_gamma_max_csv(tmp_path, capsys):
    path = _write(tmp_path, QUICK.replace("optimize", "gamma-max").replace("N = 1", "N = 1, 2"))
    out = tmp_path / "t1.csv"
    assert cli.main([str(path), "--out", str(out)]) == cli.EXIT_OK
    lines = out.read_text().splitlines()
    comments = [l for l in lines if l.startswith("#")]
    assert "# experiment.mode = gamma-max" in comments
    assert "# anneal.n_temps = 4" in comments
    body = [l for l in lines if not l.startswith("#")]
    assert body[0] == "N,B,seed,feasible,energy_db,gamma_m,theta_r"
    assert [r.split(",")[0] for r in body[1:]] == ["1", "2"]
    energy = body[1].split(",")[4]
    assert len(energy.split(".")[1]) == 2
    assert len(capsys.readouterr().out.strip().splitlines()) == 2


def test_cli_byte_identical(tmp_path):
    text = QUICK.replace("optimize", "sweep-epsilon").replace("nu_d = 0.02", "nu_d = 0.02\nepsilons = 0.05, 0.1")
    path = _write(tmp_path, text)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.main([str(path), "--out", str(a)])
    cli.main([str(path), "--out", str(b)])
    body = lambda p: [l for l in p.read_text().splitlines() if not l.startswith("#")]
    assert body(a) == body(b) and len(body(a)) == 3


def test_cli_pool_matches_serial(tmp_path):
    text = QUICK.replace("mode = optimize", "mode = optimize\nseeds = 0, 1\nworkers = 2")
    path = _write(tmp_path, text)
    pooled, serial = tmp_path / "p.csv", tmp_path / "s.csv"
    assert cli.main([str(path), "--out", str(pooled)]) == 0
    _write(tmp_path, text.replace("workers = 2", "workers = 1"))
    assert cli.main([str(path), "--out", str(serial)]) == 0
    strip = lambda p: [l for l in p.read_text().splitlines() if not l.startswith("#")]
    assert strip(pooled) == strip(serial)


def test_cli_infeasible_exit(tmp_path):
    path = _write(tmp_path, QUICK.replace("nu_d = 0.02", "nu_d = 1.0"))
    out = tmp_path / "inf.csv"
    assert cli.main([str(path), "--out", str(out)]) == cli.EXIT_INFEASIBLE
    assert out.read_text().splitlines()[-1].split(",")[4] == "0"


def test_cli_numerical_exit(tmp_path, monkeypatch):
    def boom(spec, out_path=None):
        raise NumericalError("singular")
    monkeypatch.setattr(cli, "run_experiment", boom)
    assert cli.main([str(_write(tmp_path, MINIMAL))]) == cli.EXIT_NUMERICAL


def test_cli_simulate_and_traces(tmp_path):
    PolicyMatrix.uniform(StateSpace(0, 1), 0.02).dump(tmp_path / "pol.txt")
    text = QUICK.replace("T = 100", "T = 100\npolicy = pol.txt") + f"[output]\ntrace_dir = {tmp_path / 'tr'}\n"
    path = _write(tmp_path, text)
    out = tmp_path / "sim.csv"
    assert cli.main([str(path), "--mode", "simulate", "--seed", "3", "--out", str(out), "--verbose"]) == 0
    rows = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert rows[0].startswith("B,N,seed,K,T,theta_hat")
    assert rows[1].startswith("0,1,3,50,100,")
    slots = (tmp_path / "tr" / "slots_seed3.csv").read_text().splitlines()
    assert slots[0] == "slot,scheduled,energy" and len(slots) == 101


def test_cli_validate_writes_traces(tmp_path):
    text = QUICK.replace("mode = optimize", "mode = validate") + "[output]\ntrace_dir = {}\n".format(tmp_path / "tr")
    out = tmp_path / "v.csv"
    assert cli.main([str(_write(tmp_path, text)), "--out", str(out)]) == 0
    names = sorted(p.name for p in (tmp_path / "tr").iterdir())
    assert names == ["policy_B0_N1_epsnone_seed0.txt", "trace_B0_N1_epsnone_seed0.csv"]
    assert PolicyMatrix.load(tmp_path / "tr" / names[0]).space == StateSpace(0, 1)
