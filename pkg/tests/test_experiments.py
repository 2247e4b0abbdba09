import numpy as np
import pytest

from modspike import cli
from modspike import experiments as ex
from modspike import model
from modspike.rngstat import RngStream

SEED = 20250809


# ---------------------------------------------------------------------------
# configuration

def test_config_defaults_and_rules():
    cfg = ex.ExperimentConfig()
    assert cfg.sample_count() == 2500
    assert cfg.delta() == pytest.approx(16.0 * np.sqrt(np.log(50)))
    assert cfg.nu() == pytest.approx(50.0**3)
    cfg = ex.ExperimentConfig(k=10, delta_abs=7.5, nu_abs=42.0, radius_abs=3.0, n=11)
    assert (cfg.delta(), cfg.nu(), cfg.radius(), cfg.sample_count()) == (7.5, 42.0, 3.0, 11)


def test_config_validation():
    with pytest.raises(ValueError):
        ex.ExperimentConfig(k=0)
    with pytest.raises(ValueError):
        ex.ExperimentConfig(trials=0)
    with pytest.raises(ValueError):
        ex.ExperimentConfig(delta_factor=-1.0)


def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nk = 12\nseed = 9  # trailing comment\n"
                    "delta_factor = 8.0\n\nalpha = 2.5\n")
    overrides = ex.parse_config_file(path)
    cfg = ex.build_config(overrides)
    assert cfg.k == 12 and cfg.master_seed == 9
    assert cfg.delta_factor == 8.0 and cfg.nu_power == 2.5


def test_config_file_unknown_key_fatal(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("k = 5\nbogus = 1\n")
    with pytest.raises(ValueError, match="unknown key"):
        ex.parse_config_file(path)
    path.write_text("k = not_an_int\n")
    with pytest.raises(ValueError):
        ex.parse_config_file(path)
    path.write_text("just a line\n")
    with pytest.raises(ValueError, match="key = value"):
        ex.parse_config_file(path)


def test_cli_overrides_beat_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("k = 12\ntrials = 7\n")
    cfg = ex.build_config(ex.parse_config_file(path), {"k": 20, "trials": None})
    assert cfg.k == 20 and cfg.trials == 7


# ---------------------------------------------------------------------------
# experiment drivers

def test_fig3a_rows_and_determinism():
    cfg = ex.ExperimentConfig(k=8, n=64, trials=4, master_seed=SEED)
    grid = [0.0, 1.0]
    rows = ex.run_figure3a(cfg, grid)
    again = ex.run_figure3a(cfg, grid)
    assert rows == again
    assert [r["alpha"] for r in rows] == grid
    for r in rows:
        assert set(r) == set(ex.FIG3A_HEADER)
        assert r["trials"] == 4
        assert 0.0 < r["mean_error"] < 2.0


def test_fig3a_grid_reordering_is_per_cell_stable():
    cfg = ex.ExperimentConfig(k=8, n=64, trials=3, master_seed=SEED)
    rows = {r["alpha"]: r for r in ex.run_figure3a(cfg, [0.0, 2.0, 1.0])}
    rows2 = {r["alpha"]: r for r in ex.run_figure3a(cfg, [1.0, 0.0, 2.0])}
    assert rows == rows2


def test_fig3b_rows_sorted_and_pooled():
    cfg = ex.ExperimentConfig(k=6, n=36, trials=3, master_seed=SEED, nu_power=3.0)
    rows = ex.run_figure3b(cfg, [2.0, 1.0])
    keys = [(r["decoder"], r["delta_exp"]) for r in rows]
    assert keys == sorted(keys)
    assert len(rows) == 6
    for r in rows:
        assert set(r) == set(ex.FIG3B_HEADER)
        assert r["trials_total"] == 3 * 36 or r["decoder"] == "blind_if"
        assert 0.0 <= r["p_e_hat"] <= 1.0
    assert ex.run_figure3b(cfg, [2.0, 1.0]) == rows


def test_csv_formatting_17_digits():
    rows = [{"a": 1.0 / 3.0, "b": 7, "c": True}]
    text = ex.rows_to_csv(["a", "b", "c"], rows)
    assert text == "a,b,c\n0.33333333333333331,7,1\n"


# ---------------------------------------------------------------------------
# verification dispatch

@pytest.mark.parametrize("lemma,kwargs", [
    ("prop1", dict(k=4, nu_abs=8.0, trials=60_000)),
    ("pball", dict(k=8, nu_abs=30.0, trials=100_000)),
    ("convex", dict(k=6, nu_abs=15.0, trials=60_000)),
    ("gap", dict(k=4, trials=60_000)),
    ("badprob", dict(k=16, nu_abs=256.0, trials=20_000)),
    ("voronoi", dict(k=2, nu_abs=100.0, delta_abs=3.0, trials=15_000)),
    ("nball", dict(k=6, nu_abs=20.0, trials=150, n=80)),
])
def test_verify_lemmas_pass_at_small_scale(lemma, kwargs):
    cfg = ex.ExperimentConfig(master_seed=SEED, **kwargs)
    report = ex.verify(lemma, cfg)
    assert report.lemma_id == lemma
    assert report.passed, report


def test_verify_unknown_lemma():
    with pytest.raises(ValueError, match="unknown lemma"):
        ex.verify("nope", ex.ExperimentConfig())


def test_verify_is_deterministic():
    cfg = ex.ExperimentConfig(k=6, nu_abs=12.0, trials=30_000, master_seed=SEED)
    a = ex.verify("pball", cfg)
    b = ex.verify("pball", cfg)
    assert a == b


def test_verify_voronoi_requires_k2():
    with pytest.raises(ValueError):
        ex.verify("voronoi", ex.ExperimentConfig(k=3, nu_abs=10.0, trials=10_000))


# ---------------------------------------------------------------------------
# command line

def run_cli(*args):
    return cli.main(list(args))


def test_cli_fig3a_writes_csv_and_plot(tmp_path):
    out = tmp_path / "a.csv"
    code = run_cli("fig3a", "--k", "6", "--n", "36", "--trials", "2",
                   "--seed", "3", "--alpha", "0,1", "--out", str(out), "--plot")
    assert code == 0
    text = out.read_text()
    assert text.splitlines()[0] == ",".join(ex.FIG3A_HEADER)
    assert text.endswith("\n") and "\r" not in text
    png = tmp_path / "a.csv.png"
    assert png.exists() and png.stat().st_size > 1000


def test_cli_outputs_are_byte_identical_across_runs(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ("fig3b", "--k", "5", "--n", "25", "--trials", "2", "--seed", "11",
            "--delta-exp", "1.0,3.0")
    assert run_cli(*args, "--out", str(a)) == 0
    assert run_cli(*args, "--out", str(b)) == 0
    assert a.read_bytes() == b.read_bytes()


def test_cli_fig3b_plot_named_path(tmp_path):
    out = tmp_path / "b.csv"
    fig = tmp_path / "fig.png"
    code = run_cli("fig3b", "--k", "5", "--n", "25", "--trials", "2",
                   "--seed", "4", "--delta-exp", "1.0:2.0:0.5",
                   "--out", str(out), "--plot", str(fig))
    assert code == 0 and fig.exists()


def test_cli_verify_exit_codes(tmp_path):
    out = tmp_path / "v.csv"
    code = run_cli("verify", "pball", "--k", "8", "--nu", "30",
                   "--trials", "50000", "--seed", "2", "--out", str(out))
    assert code == 0
    line = out.read_text().splitlines()
    assert line[0] == ",".join(ex.VERIFY_HEADER)
    assert line[1].split(",")[4] == "1"
    # a spike far too large for this dynamic range floods the ball with
    # folded samples, so the bad-pair bound must fail -> exit 4
    code = run_cli("verify", "badprob", "--k", "2", "--nu", "10000",
                   "--delta", "1.0", "--trials", "4000", "--seed", "2",
                   "--out", str(out))
    assert code == 4
    assert out.read_text().splitlines()[1].split(",")[4] == "0"


def test_cli_usage_errors(tmp_path):
    bad_cfg = tmp_path / "bad.cfg"
    bad_cfg.write_text("zzz = 1\n")
    assert run_cli("fig3a", "--config", str(bad_cfg)) == 2
    assert run_cli("fig3a", "--k", "6", "--plot") == 2  # --plot needs --out
    with pytest.raises(SystemExit) as exc:
        run_cli("verify", "not_a_lemma")
    assert exc.value.code == 2
    assert run_cli("fig3a", "--k", "6", "--alpha", "1:2") == 2


def test_cli_estimate_and_decode_roundtrip(tmp_path):
    rng = RngStream(SEED, 40)
    mdl = model.SpikedModel.random_direction(3, 150.0, rng)
    x = model.sample_spiked(mdl, 4000, rng)
    delta = 20.0
    y = model.apply_channel(x, model.ModuloChannel(delta))
    xp, yp, up = (tmp_path / n for n in ("x.csv", "y.csv", "u.csv"))
    model.write_matrix_csv(xp, x)
    model.write_matrix_csv(yp, y)
    model.write_matrix_csv(up, mdl.u[None, :])

    uhat_path = tmp_path / "uhat.csv"
    assert run_cli("estimate", "--y", str(yp), "--out", str(uhat_path)) == 0
    uhat = model.read_matrix_csv(uhat_path)[0]
    assert abs(float(uhat @ mdl.u)) > 0.95

    reports = {}
    for name, extra in [
            ("trivial", []),
            ("informed_if", ["--nu", "150", "--u-file", str(up)]),
            ("blind_if", ["--nu", "150"]),
            ("map", ["--nu", "150", "--u-file", str(up), "--coeff-bound", "4"])]:
        out = tmp_path / f"{name}.csv"
        code = run_cli("decode", name, "--x", str(xp), "--y", str(yp),
                       "--delta", str(delta), *extra, "--out", str(out))
        assert code == 0
        header, row = out.read_text().splitlines()
        assert header == "decoder,n,n_errors,p_e_hat"
        fields = row.split(",")
        assert fields[0] == name and int(fields[1]) == 4000
        reports[name] = float(fields[3])
    assert reports["map"] <= reports["trivial"]
    assert reports["informed_if"] <= reports["trivial"]


def test_cli_estimate_empty_ball_is_numeric_failure(tmp_path):
    path = tmp_path / "y.csv"
    model.write_matrix_csv(path, np.full((5, 2), 9.0))
    assert run_cli("estimate", "--y", str(path), "--radius", "0.1") == 3


def test_cli_decode_missing_flags(tmp_path):
    rng = RngStream(SEED, 41)
    x = rng.gaussian(30).reshape(10, 3)
    xp = tmp_path / "x.csv"
    model.write_matrix_csv(xp, x)
    assert run_cli("decode", "blind_if", "--x", str(xp), "--y", str(xp),
                   "--delta", "2.0") == 2
    assert run_cli("decode", "informed_if", "--x", str(xp), "--y", str(xp),
                   "--delta", "2.0", "--nu", "5") == 2


def test_cli_grid_parsing():
    assert cli._parse_grid("0,1,3") == [0.0, 1.0, 3.0]
    assert cli._parse_grid("0:1:0.5") == [0.0, 0.5, 1.0]
    with pytest.raises(ValueError):
        cli._parse_grid("0:1:0")
