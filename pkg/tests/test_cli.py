import json

import numpy as np
import pytest

from hamop.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from hamop.datafmt import read_csv, read_dataset, write_dataset
from hamop.metrics import batch_losses
from hamop.testpots import analytic_solution, get_named, sample_named


@pytest.fixture(scope="module")
def ds100(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen") / "ds"
    assert main(["gen", "--n", "100", "--seed", "42", "--out", str(out), "--quiet"]) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def ds_small(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen") / "small"
    assert main(["gen", "--n", "4", "--seed", "7", "--out", str(out), "--quiet"]) == EXIT_OK
    return out


def sho_dataset(path, m=100):
    t = np.linspace(0, 2, m)
    q, p = analytic_solution("sho", t)
    V = sample_named(get_named("sho"), m)[1]
    write_dataset(path, {"role": "test"}, {"t": t, "V": V[None], "q": q[None], "p": p[None]})
    return path


# --- gen ---------------------------------------------------------------------


def test_gen_count(ds100):
    meta, data = read_dataset(ds100)
    assert meta["N"] == 100 and data["V"].shape == (100, 100)
    assert meta["seed"] == 42


def test_gen_deterministic(ds100, tmp_path):
    again = tmp_path / "again"
    assert main(["gen", "--n", "100", "--seed", "42", "--out", str(again), "--quiet"]) == EXIT_OK
    assert (again / "data.bin").read_bytes() == (ds100 / "data.bin").read_bytes()


def test_gen_zero_is_usage_error(tmp_path):
    assert main(["gen", "--n", "0", "--out", str(tmp_path / "x"), "--quiet"]) == EXIT_USAGE


def test_gen_split(tmp_path):
    assert main(["gen", "--n", "10", "--split", "0.8", "--out", str(tmp_path), "--quiet"]) == EXIT_OK
    mt, _ = read_dataset(tmp_path / "train")
    mv, _ = read_dataset(tmp_path / "val")
    assert (mt["N"], mv["N"]) == (8, 2)
    assert sorted(mt["indices"] + mv["indices"]) == list(range(10))


def test_missing_flag_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--seed", "1"])
    assert exc.value.code == EXIT_USAGE


# --- solve -------------------------------------------------------------------


def solve(tmp_path, pot, method, name=None):
    out = tmp_path / f"{name or pot + '-' + method}.csv"
    assert main(["solve", "--potential", pot, "--method", method, "--out", str(out), "--quiet"]) == EXIT_OK
    return read_csv(out)


def test_solve_exact_initial_condition(tmp_path):
    c = solve(tmp_path, "sho", "exact")
    assert c["q"][0] == 0.0 and c["p"][0] == 0.0 and len(c["t"]) == 100


def test_solve_gl4_matches_exact(tmp_path):
    ex = solve(tmp_path, "sho", "exact")
    gl = solve(tmp_path, "sho", "gl4")
    assert np.max(np.abs(gl["q"] - ex["q"])) <= 1e-8


def test_solve_double_well_rk4_degrades(tmp_path):
    rk = solve(tmp_path, "double-well", "rk4")
    gl = solve(tmp_path, "double-well", "gl4")
    _, _, l_tot = batch_losses(gl["q"][None], gl["p"][None], rk["q"][None], rk["p"][None])
    assert l_tot[0] >= 1e-3


def test_solve_unknown_id(tmp_path):
    code = main(["solve", "--potential", "no-such-thing", "--out", str(tmp_path / "x.csv"), "--quiet"])
    assert code == EXIT_USAGE


def test_solve_sensor_file(tmp_path):
    f = tmp_path / "v.txt"
    np.savetxt(f, sample_named(get_named("sho"), 100)[1])
    c = solve(tmp_path, str(f), "gl4", name="file")
    q_ref, _ = analytic_solution("sho", c["t"])
    assert np.max(np.abs(c["q"] - q_ref)) < 1e-8


def test_solve_exact_unavailable(tmp_path):
    assert main(["solve", "--potential", "morse", "--method", "exact", "--out", str(tmp_path / "m.csv"), "--quiet"]) == EXIT_USAGE


# --- train -------------------------------------------------------------------


def test_train_history_and_determinism(ds100, tmp_path, capsys):
    args = ["train", "--data", str(ds100), "--epochs", "5", "--seed", "3"]
    assert main(args + ["--ckpt", str(tmp_path / "a.ckpt")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "init_lr=7.3256e-03" in out
    assert main(args + ["--ckpt", str(tmp_path / "b.ckpt"), "--quiet"]) == EXIT_OK
    hist = read_csv(tmp_path / "a.ckpt.history.csv")
    assert len(hist["epoch"]) == 5 and list(hist["epoch"]) == [1, 2, 3, 4, 5]
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_train_default_lr_value():
    from hamop.cli import build_parser

    args = build_parser().parse_args(["train", "--data", "d", "--ckpt", "c"])
    assert args.lr == 7.3256e-3 and args.inf_lr == 1.7369e-3 and args.upper_bound == 300


def test_train_divergence_exit_code(ds_small, tmp_path):
    code = main(["train", "--data", str(ds_small), "--epochs", "200", "--lr", "1e6", "--inf-lr", "1e5",
                 "--ckpt", str(tmp_path / "d.ckpt"), "--quiet"])
    assert code == 3


# --- eval --------------------------------------------------------------------


def test_eval_exact_is_zero(ds_small, tmp_path):
    rep = tmp_path / "r.csv"
    assert main(["eval", "--data", str(ds_small), "--pred", "exact", "--report", str(rep), "--quiet"]) == EXIT_OK
    r = read_csv(rep)
    assert all(np.all(r[k] == 0) for k in ("l_q", "l_p", "l_tot"))
    assert list(r["sample_id"]) == [0, 1, 2, 3]


def test_eval_rk4_on_sho_in_published_range(tmp_path):
    ds = sho_dataset(tmp_path / "sho")
    js = tmp_path / "s.json"
    assert main(["eval", "--data", str(ds), "--pred", "rk4", "--json", str(js), "--quiet"]) == EXIT_OK
    l_tot = json.loads(js.read_text())["l_tot"]["median"]
    assert 1e-7 <= l_tot <= 1e-3


def test_eval_table_has_four_statistics(ds_small, capsys):
    assert main(["eval", "--data", str(ds_small), "--pred", "rk4"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split() == ["metric", "mean", "std", "median", "iqr"]
    assert [ln.split()[0] for ln in lines[1:]] == ["l_q", "l_p", "l_tot", "time_s"]


def test_eval_grid_mismatch(ds_small, tmp_path):
    from hamop.datafmt import write_checkpoint
    from hamop.deeponet import DeepONetModel

    ck = tmp_path / "m50.ckpt"
    write_checkpoint(ck, DeepONetModel(50, rng=0))
    assert main(["eval", "--data", str(ds_small), "--pred", str(ck), "--quiet"]) == EXIT_DATA


def test_eval_checkpoint(ds_small, tmp_path):
    from hamop.datafmt import write_checkpoint
    from hamop.deeponet import DeepONetModel

    ck = tmp_path / "m.ckpt"
    write_checkpoint(ck, DeepONetModel(100, rng=0))
    js = tmp_path / "e.json"
    assert main(["eval", "--data", str(ds_small), "--pred", str(ck), "--json", str(js), "--quiet"]) == EXIT_OK
    stats = json.loads(js.read_text())
    assert set(stats) == {"l_q", "l_p", "l_tot", "time_s"}
    assert stats["l_tot"]["mean"] > 0


# --- extend ------------------------------------------------------------------


def test_extend_free_fall(tmp_path, capsys):
    out = tmp_path / "ext.csv"
    assert main(["extend", "--Q", "0.5", "--potential", "free-fall", "--m", "100", "--out", str(out), "--quiet"]) == EXIT_OK
    line = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("T_valid")][0]
    assert float(line.split("=")[1]) == pytest.approx(0.5, abs=1e-6)
    c = read_csv(out)
    assert len(c["q"]) == 100 and c["q"][0] == 0.0 and c["q"][-1] == 1.0
    assert c["V"][0] == pytest.approx(2.0) and c["V"][-1] == pytest.approx(2.0)


def test_extend_non_monotone(tmp_path):
    # V = 2 - 16 q (0.5 - q): dips then returns to V0 at Q
    code = main(["extend", "--Q", "0.5", "--potential", "poly:2,-8,16", "--quiet"])
    assert code == EXIT_DATA


def test_extend_bad_poly():
    assert main(["extend", "--Q", "0.5", "--potential", "poly:a,b", "--quiet"]) == EXIT_USAGE


# --- bench -------------------------------------------------------------------


def test_bench_rows_and_counts(ds_small, tmp_path, capsys):
    from hamop.datafmt import write_checkpoint
    from hamop.deeponet import DeepONetModel

    ck = tmp_path / "m.ckpt"
    write_checkpoint(ck, DeepONetModel(100, rng=0))
    js = tmp_path / "b.json"
    args = ["bench", "--data", str(ds_small), "--methods", "rk4,model", "--ckpt", str(ck), "--repeats", "3", "--out", str(js)]
    assert main(args) == EXIT_OK
    table = capsys.readouterr().out.splitlines()
    assert [ln.split()[0] for ln in table[1:3]] == ["rk4", "model"]
    stats = json.loads(js.read_text())
    assert set(stats) == {"rk4", "model"}
    for row in stats.values():
        assert row["n"] == 4 * 3
        assert all(np.isfinite(row[k]) for k in ("mean", "median", "std", "iqr"))
        assert row["mean"] > 0 and row["median"] > 0


def test_bench_unknown_method(ds_small):
    assert main(["bench", "--data", str(ds_small), "--methods", "euler", "--quiet"]) == EXIT_USAGE


# --- global flags ------------------------------------------------------------


def test_reproducibility_line(ds_small, capsys):
    main(["eval", "--data", str(ds_small), "--pred", "exact", "--seed", "11"])
    err = capsys.readouterr().err
    assert err.startswith("hamop ") and "seed=11" in err and '"pred": "exact"' in err


def test_quiet_silences_everything_but_results(ds_small, capsys):
    main(["eval", "--data", str(ds_small), "--pred", "exact", "--quiet"])
    cap = capsys.readouterr()
    assert cap.out == "" and cap.err == ""


def test_nh_seed_fallback(monkeypatch, capsys, ds_small):
    monkeypatch.setenv("NH_SEED", "123")
    main(["eval", "--data", str(ds_small), "--pred", "exact"])
    assert "seed=123" in capsys.readouterr().err
    monkeypatch.setenv("NH_SEED", "oops")
    assert main(["eval", "--data", str(ds_small), "--pred", "exact"]) == EXIT_USAGE


def test_flag_seed_beats_env(monkeypatch, capsys, ds_small):
    monkeypatch.setenv("NH_SEED", "123")
    main(["eval", "--data", str(ds_small), "--pred", "exact", "--seed", "5"])
    assert "seed=5" in capsys.readouterr().err


def test_io_failure_is_data_error(tmp_path):
    assert main(["eval", "--data", str(tmp_path / "missing"), "--pred", "exact", "--quiet"]) == EXIT_DATA
