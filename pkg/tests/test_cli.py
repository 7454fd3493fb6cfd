import json

import pytest

from hdgplus.cli import main

_ERRORS_HEADER = (
    "level,h_max,h_fit,n_cells,err_q,err_u,err_uhat,eps_q,eps_u,"
    "proj_q,proj_u,jump,delta_tau,qk,energy_rel"
)


def read_lines(path):
    return path.read_text().splitlines()


def data_lines(path):
    """File content without the config header (first line)."""
    return read_lines(path)[1:]


def test_converge_documented_example(tmp_path):
    out = tmp_path / "run"
    code = main(
        ["--cmd", "converge", "--k", "1", "--family", "quad",
         "--base", "4", "--levels", "3", "--out", str(out)]
    )
    assert code == 0
    errors = read_lines(out / "errors.csv")
    assert errors[0].startswith("# config: command=converge k=1 family=quad base=4")
    assert errors[1] == _ERRORS_HEADER
    assert len(errors) == 2 + 3  # header lines + one row per level
    rates = read_lines(out / "rates.txt")
    assert any(l.startswith("rate_q fitted=") and l.endswith("PASS") for l in rates)
    assert any(l.startswith("rate_u fitted=") and l.endswith("PASS") for l in rates)
    assert any(l.startswith("rate_uhat fitted=") and "(reported)" in l for l in rates)
    assert any(l.startswith("residual_max") and l.endswith("PASS") for l in rates)
    assert any(l.startswith("energy_rel_max") and l.endswith("PASS") for l in rates)
    assert rates[-1] == "status PASS"
    diag = read_lines(out / "diagnostics.csv")
    assert diag[1].split(",")[0] == "level"
    assert len(diag) == 2 + 3


def test_converge_rerun_is_byte_identical(tmp_path):
    args = ["--cmd", "converge", "--k", "0", "--family", "distorted-quad",
            "--base", "2", "--levels", "2", "--seed", "5", "--rate-tol", "0.6"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    for name in ("errors.csv", "rates.txt", "diagnostics.csv"):
        ca = data_lines(a / name)
        cb = data_lines(b / name)
        assert ca == cb, name
    # same directory reruns reproduce every byte, header included
    assert main(args + ["--out", str(a)]) == 0
    assert (a / "errors.csv").read_bytes() == (b / "errors.csv").read_bytes().replace(
        str(b).encode(), str(a).encode()
    )


def test_solve_single_level(tmp_path):
    out = tmp_path / "run"
    code = main(
        ["--cmd", "solve", "--k", "1", "--family", "hexagon-ish",
         "--base", "4", "--problem", "varkappa", "--out", str(out)]
    )
    assert code == 0
    errors = read_lines(out / "errors.csv")
    assert len(errors) == 3  # config + columns + single level
    rates = read_lines(out / "rates.txt")
    assert "rates skipped: need at least 2 levels" in rates
    assert rates[-1] == "status PASS"


def test_project_verify(tmp_path):
    out = tmp_path / "run"
    code = main(
        ["--cmd", "project-verify", "--k", "0", "--family", "pentagon",
         "--base", "8", "--problem", "poly-2", "--out", str(out)]
    )
    assert code == 0
    rates = read_lines(out / "rates.txt")
    assert any("res_max" in l and "tol=1e-10" in l for l in rates)
    assert rates[-1] == "status PASS"
    errors = read_lines(out / "errors.csv")
    assert len(errors) == 2 + 8  # one row per sampled polygon


def test_project_verify_trig_uses_relaxed_tolerance(tmp_path):
    out = tmp_path / "run"
    code = main(
        ["--cmd", "project-verify", "--k", "1", "--family", "random",
         "--base", "6", "--problem", "trig", "--out", str(out)]
    )
    assert code == 0
    assert any("tol=1e-09" in l for l in read_lines(out / "rates.txt"))


def test_elastic_verify_defaults(tmp_path):
    out = tmp_path / "run"
    code = main(
        ["--cmd", "elastic-verify", "--k", "1", "--family", "random",
         "--base", "6", "--out", str(out)]
    )
    assert code == 0
    errors = read_lines(out / "errors.csv")
    assert "elastic-trig" in errors[0]
    assert read_lines(out / "rates.txt")[-1] == "status PASS"


def test_config_file_equals_flags(tmp_path):
    flags_out = tmp_path / "flags"
    cfg_out = tmp_path / "cfg"
    args = ["--cmd", "converge", "--k", "0", "--family", "triangle",
            "--base", "2", "--levels", "2", "--rate-tol", "0.5"]
    assert main(args + ["--out", str(flags_out)]) == 0
    cfg = {"command": "converge", "k": 0, "family": "triangle",
           "base": 2, "levels": 2, "rate_tol": 0.5, "out": str(cfg_out)}
    cfg_path = tmp_path / "study.json"
    cfg_path.write_text(json.dumps(cfg))
    assert main(["--config", str(cfg_path)]) == 0
    for name in ("errors.csv", "rates.txt", "diagnostics.csv"):
        assert data_lines(flags_out / name) == data_lines(cfg_out / name), name


def test_flags_override_config_file(tmp_path):
    out = tmp_path / "run"
    cfg_path = tmp_path / "study.json"
    cfg_path.write_text(json.dumps(
        {"command": "solve", "k": 0, "family": "quad", "base": 2, "out": "ignored"}
    ))
    code = main(["--config", str(cfg_path), "--base", "3", "--out", str(out)])
    assert code == 0
    header = read_lines(out / "errors.csv")[0]
    assert "base=3" in header and f"out={out}" in header


def test_include_coarsest_changes_fit(tmp_path):
    base_args = ["--cmd", "converge", "--k", "1", "--family", "quad",
                 "--base", "2", "--levels", "3", "--rate-tol", "0.7"]
    a, b = tmp_path / "drop", tmp_path / "keep"
    assert main(base_args + ["--out", str(a)]) == 0
    assert main(base_args + ["--include-coarsest", "--out", str(b)]) == 0
    ra = [l for l in read_lines(a / "rates.txt") if l.startswith("rate_q")][0]
    rb = [l for l in read_lines(b / "rates.txt") if l.startswith("rate_q")][0]
    assert ra.split()[1] != rb.split()[1]


def test_failing_rate_band_exits_one(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(
        ["--cmd", "converge", "--k", "1", "--family", "quad", "--base", "2",
         "--levels", "3", "--rate-tol", "0.0001", "--out", str(out)]
    )
    assert code == 1
    assert "FAIL" in capsys.readouterr().err
    assert read_lines(out / "rates.txt")[-1] == "status FAIL"


def test_failing_residual_tolerance_exits_one(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(
        ["--cmd", "project-verify", "--k", "1", "--family", "quad", "--base", "4",
         "--problem", "trig", "--tol", "1e-18", "--out", str(out)]
    )
    assert code == 1
    assert "exceeds" in capsys.readouterr().err
    assert read_lines(out / "rates.txt")[-1] == "status FAIL"


@pytest.mark.parametrize("args,fragment", [
    (["--cmd", "meshgen"], "command"),
    (["--cmd", "converge", "--levels", "0"], "levels"),
    (["--cmd", "converge", "--k", "-1"], "k must be"),
    (["--cmd", "elastic-verify", "--k", "0"], "k >= 1"),
    (["--cmd", "converge", "--family", "voronoi"], "family"),
    (["--cmd", "converge", "--problem", "elastic-trig"], "diffusion catalog"),
    (["--cmd", "elastic-verify", "--problem", "trig"], "elasticity catalog"),
    (["--cmd", "project-verify", "--family", "distorted-quad"], "polygon shape"),
    (["--cmd", "converge", "--tau-c", "-2"], "tau_c"),
    ([], "command"),
], ids=["bad-cmd", "levels0", "negk", "elastic-k0", "bad-family",
        "elastic-as-diffusion", "diffusion-as-elastic", "mesh-family-verify",
        "bad-tau", "no-cmd"])
def test_config_errors_exit_two(args, fragment, tmp_path, capsys):
    code = main(args + ["--out", str(tmp_path / "x")])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("config error:")
    assert fragment in err


def test_missing_config_file_exits_two(tmp_path, capsys):
    code = main(["--config", str(tmp_path / "nope.json")])
    assert code == 2
    assert "config error:" in capsys.readouterr().err


def test_unknown_config_key_exits_two(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"command": "solve", "mesh": "quad"}')
    code = main(["--config", str(p)])
    assert code == 2
    assert "unknown config field 'mesh'" in capsys.readouterr().err


def test_malformed_config_json_exits_two(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{command: solve}")
    assert main(["--config", str(p)]) == 2
    assert "config error:" in capsys.readouterr().err
