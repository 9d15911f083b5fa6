import numpy as np
import pytest
from click.testing import CliRunner

from proxsqn import (
    SyntheticSpec,
    datasets_equal,
    generate_synthetic,
    parse_libsvm,
)
from proxsqn.cli import CSV_HEADER, main

CONFIG = (
    "loss = squared_error\n"
    "ridge = 0.1\n"
    "lambda1 = 0.01\n"
    "synthetic.n = 40\n"
    "synthetic.d = 6\n"
    "synthetic.density = 0.5\n"
    "synthetic.condition = 4.0\n"
    "synthetic.noise = 0.1\n"
    "synthetic.seed = 2\n"
    "solvers = sqn, prox_gd\n"
    "solver.sqn.kind = prox_sqn\n"
    "solver.sqn.epochs = 3\n"
    "solver.sqn.eta = 0.05\n"
    "solver.sqn.m = 40\n"
    "solver.sqn.b = 4\n"
    "solver.sqn.b_hessian = 10\n"
    "solver.sqn.metric_period = 5\n"
    "solver.prox_gd.epochs = 10\n"
    "solver.prox_gd.eta = 0.5\n"
)


@pytest.fixture
def runner():
    return CliRunner()


def write_config(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_lines(path):
    return path.read_text().splitlines()


def strip_elapsed(lines):
    # elapsed_ns is the last column and the only nondeterministic one
    return [line.rsplit(",", 1)[0] for line in lines]


def test_run_writes_csv_traces(runner, tmp_path):
    cfg = write_config(tmp_path, CONFIG)
    out = tmp_path / "traces"
    res = runner.invoke(main, ["--output", str(out), "run", cfg])
    assert res.exit_code == 0, res.output
    for name, rows in (("sqn", 3), ("prox_gd", 10)):
        lines = read_lines(out / f"exp_{name}.csv")
        assert lines[0] == CSV_HEADER
        assert len(lines) == 1 + rows
        epochs = [int(line.split(",")[0]) for line in lines[1:]]
        assert epochs == list(range(1, rows + 1))
        for line in lines[1:]:
            cols = line.split(",")
            float(cols[2])           # objective parses
            float(cols[3])           # subopt present (reference exists here)
            int(cols[4]), int(cols[5]), int(cols[6])
    assert "wrote" in res.output
    assert not list(out.glob("*.partial"))


def test_run_deterministic_modulo_elapsed(runner, tmp_path):
    cfg = write_config(tmp_path, CONFIG)
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        assert runner.invoke(main,
                             ["--output", str(out), "run", cfg]).exit_code == 0
        outs.append(out)
    for name in ("exp_sqn.csv", "exp_prox_gd.csv"):
        first = strip_elapsed(read_lines(outs[0] / name))
        second = strip_elapsed(read_lines(outs[1] / name))
        assert first == second


def test_seed_override(runner, tmp_path):
    cfg = write_config(tmp_path, CONFIG)
    def trace(args, sub):
        out = tmp_path / sub
        assert runner.invoke(
            main, args + ["--output", str(out), "run", cfg]).exit_code == 0
        return {n: strip_elapsed(read_lines(out / f"exp_{n}.csv"))
                for n in ("sqn", "prox_gd")}

    base = trace([], "base")
    seeded = trace(["--seed", "7"], "seeded")
    again = trace(["--seed", "7"], "again")
    assert seeded == again
    assert seeded["sqn"] != base["sqn"]         # stochastic path moved
    assert seeded["prox_gd"] == base["prox_gd"]  # deterministic baseline


def test_run_missing_config(runner, tmp_path):
    res = runner.invoke(main, ["run", str(tmp_path / "nope.cfg")])
    assert res.exit_code == 1
    assert "cannot read config" in res.stderr


def test_run_malformed_config(runner, tmp_path):
    cfg = write_config(tmp_path, "loss = squared_error\nbogus = 1\n")
    res = runner.invoke(main, ["run", cfg])
    assert res.exit_code == 1
    assert "line 2: unknown key 'bogus'" in res.stderr


def test_run_missing_dataset(runner, tmp_path):
    cfg = write_config(
        tmp_path,
        "loss = squared_error\nridge = 0.1\nlambda1 = 0.0\n"
        f"dataset = {tmp_path / 'missing.libsvm'}\nsolvers = prox_gd\n")
    res = runner.invoke(main, ["run", cfg])
    assert res.exit_code == 1
    assert "cannot read dataset" in res.stderr


def test_run_malformed_dataset(runner, tmp_path):
    bad = tmp_path / "bad.libsvm"
    bad.write_text("1.0 0:2.0\n")
    cfg = write_config(
        tmp_path,
        "loss = squared_error\nridge = 0.1\nlambda1 = 0.0\n"
        f"dataset = {bad}\nsolvers = prox_gd\n")
    res = runner.invoke(main, ["run", cfg])
    assert res.exit_code == 1
    assert "line 1, column 5" in res.stderr


def test_run_divergence_exit_2(runner, tmp_path):
    text = CONFIG.replace("solver.sqn.eta = 0.05", "solver.sqn.eta = 1000.0")
    cfg = write_config(tmp_path, text)
    out = tmp_path / "traces"
    res = runner.invoke(main, ["--output", str(out), "run", cfg])
    assert res.exit_code == 2
    assert "diverged" in res.output
    # the healthy solver's trace still lands on disk
    assert (out / "exp_prox_gd.csv").exists()
    assert not (out / "exp_sqn.csv").exists()


def test_run_bad_output_dir_exit_3(runner, tmp_path):
    cfg = write_config(tmp_path, CONFIG)
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    res = runner.invoke(main,
                        ["--output", str(blocker / "sub"), "run", cfg])
    assert res.exit_code == 3
    assert "cannot create output directory" in res.stderr


def test_threads_match_serial(runner, tmp_path):
    cfg = write_config(tmp_path, CONFIG)
    serial = tmp_path / "serial"
    threaded = tmp_path / "threaded"
    assert runner.invoke(
        main, ["--output", str(serial), "run", cfg]).exit_code == 0
    assert runner.invoke(
        main, ["--threads", "2", "--output", str(threaded), "run", cfg]
    ).exit_code == 0
    for name in ("exp_sqn.csv", "exp_prox_gd.csv"):
        assert strip_elapsed(read_lines(serial / name)) == \
            strip_elapsed(read_lines(threaded / name))


def test_verify_fast(runner):
    res = runner.invoke(main, ["verify"])
    assert res.exit_code == 0, res.output
    assert "all checks passed" in res.output
    assert sum(line.startswith("PASS") for line in res.output.splitlines()) == 8


def test_verify_rejects_bad_level(runner):
    res = runner.invoke(main, ["verify", "--level", "paranoid"])
    assert res.exit_code == 2  # click usage error


GEN_CONFIG = (
    "loss = squared_error\n"
    "ridge = 0.0\n"
    "lambda1 = 0.0\n"
    "synthetic.n = 30\n"
    "synthetic.d = 8\n"
    "synthetic.density = 0.5\n"
    "synthetic.condition = 4.0\n"
    "synthetic.noise = 0.1\n"
    "synthetic.seed = 6\n"
)


def test_gen_matches_library_generator(runner, tmp_path):
    cfg = write_config(tmp_path, GEN_CONFIG, "spec.cfg")
    out = tmp_path / "data.libsvm"
    truth = tmp_path / "truth.txt"
    res = runner.invoke(main, ["gen", cfg, "-o", str(out),
                               "--truth", str(truth)])
    assert res.exit_code == 0, res.output
    assert "n=30 d=8" in res.output
    spec = SyntheticSpec(n=30, d=8, density=0.5, condition=4.0, noise=0.1,
                         seed=6)
    want_ds, want_x = generate_synthetic(spec)
    got = parse_libsvm(out.read_text(), d=8)
    assert datasets_equal(got, want_ds)
    x_back = np.array([float(v) for v in read_lines(truth)])
    assert np.array_equal(x_back, want_x)


def test_gen_deterministic_bytes(runner, tmp_path):
    cfg = write_config(tmp_path, GEN_CONFIG, "spec.cfg")
    paths = [tmp_path / "a.libsvm", tmp_path / "b.libsvm"]
    for p in paths:
        assert runner.invoke(main,
                             ["gen", cfg, "-o", str(p)]).exit_code == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_gen_requires_synthetic_section(runner, tmp_path):
    cfg = write_config(
        tmp_path,
        "loss = squared_error\nridge = 0.0\nlambda1 = 0.0\ndataset = d\n",
        "spec.cfg")
    res = runner.invoke(main, ["gen", cfg, "-o", str(tmp_path / "x.libsvm")])
    assert res.exit_code == 1
    assert "synthetic" in res.stderr
