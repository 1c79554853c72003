import math
from importlib import resources

import numpy as np
import pytest

from safefl.cli import main
from safefl.config import (PRESETS, ConfigError, SyncMode, generate_environment, load_config, parse_config,
                           preset, sample_low_end_count)
from safefl.experiments import evaluate
from safefl.metrics import (EPISODE_COLUMNS, read_episodes, read_summary, summarize, window_means,
                            write_episodes)
from safefl.sac import SacConfig, save_policy, SACAgent

STATIC5_TEXT = resources.files("safefl.configs").joinpath("static5.cfg").read_text(encoding="utf-8")


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load(name):
    cfg = load_config(name)
    assert cfg.n_workers == int(name[-2:] if name[-2].isdigit() else name[-1])
    assert cfg.kind == name.rstrip("0123456789")
    assert cfg.model.m_bits == pytest.approx(2.51 * 8e6)
    assert cfg.n0_w_per_hz == pytest.approx(10 ** -18.8)
    assert load_config(name + ".cfg") == cfg


def test_penalty_weights_interpolate():
    assert preset("static5").penalty_weights == pytest.approx((0.1, 0.9))
    assert preset("static10").penalty_weights == pytest.approx((0.2, 0.8))
    assert preset("dynamic20").penalty_weights == pytest.approx((0.4, 0.6))


def test_config_file_overrides(tmp_path):
    text = STATIC5_TEXT
    text = text.replace("sync_mode = worker", "sync_mode = coordinator").replace("deadline_s = 13", "deadline_s = 6")
    path = tmp_path / "mine.cfg"
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.sync_mode is SyncMode.COORDINATOR and cfg.model.deadline_h == 6


@pytest.mark.parametrize("mutate", [
    lambda t: t.replace("[model]", "[modle]"),
    lambda t: t.replace("eta = 0.5", "eta = half"),
    lambda t: t.replace("sync_mode = worker", "sync_mode = sometimes"),
    lambda t: t.replace("workers = 5", "workers = 0"),
    lambda t: t.replace("distance_m = 10, 500", "distance_m = 500, 10"),
])
def test_bad_config_rejected(mutate):
    with pytest.raises(ConfigError):
        parse_config(mutate(STATIC5_TEXT))


def test_unknown_config():
    with pytest.raises(ConfigError):
        load_config("static7")


def test_static_population_tiers():
    cfg = preset("static20")
    pop = generate_environment(cfg, np.random.default_rng(0))
    assert pop.is_low_end.sum() == 4
    np.testing.assert_array_equal(pop.f_max[pop.is_low_end], 1e9)
    np.testing.assert_array_equal(pop.f_max[~pop.is_low_end], 3e9)
    np.testing.assert_allclose(pop.p_max[~pop.is_low_end], 10 ** 0.3)
    assert np.all((pop.distance_km >= 0.01) & (pop.distance_km <= 0.5))


def test_dynamic_population_ranges():
    cfg = preset("dynamic20")
    rng = np.random.default_rng(3)
    for _ in range(50):
        pop = generate_environment(cfg, rng)
        hi = ~pop.is_low_end
        assert np.all((pop.p_max[hi] >= 0.794) & (pop.p_max[hi] <= 1.9953))
        assert np.all((pop.f_max[hi] >= 3.2e9) & (pop.f_max[hi] <= 5e9))
        assert np.all((pop.bandwidth >= 5e6) & (pop.bandwidth <= 20e6))
        assert np.all((pop.n_samples >= 800) & (pop.n_samples <= 1200))


def test_low_end_count_truncated():
    cfg = preset("dynamic20")
    rng = np.random.default_rng(0)
    counts = [sample_low_end_count(cfg, rng) for _ in range(2000)]
    assert 0 <= min(counts) and max(counts) <= 12
    assert 2.0 < np.mean(counts) < 5.0


def test_population_reproducible():
    cfg = preset("dynamic10")
    a = generate_environment(cfg, np.random.default_rng(9))
    b = generate_environment(cfg, np.random.default_rng(9))
    for field in ("f_max", "p_max", "distance_km", "bandwidth", "n_samples", "variance"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))


def test_csv_round_trip(tmp_path, static5):
    eps = evaluate(static5, "rss", 25, seed=4)
    path = tmp_path / "eps.csv"
    write_episodes(path, eps)
    back = read_episodes(path)
    assert len(back) == 25
    assert [e.row() for e in back] == [e.row() for e in eps]
    s1, s2 = summarize(eps), summarize(back)
    assert all(math.isfinite(v) for v in s1.values())
    for k in s1:
        assert s2[k] == pytest.approx(s1[k], rel=1e-9, abs=1e-12)


def test_summary_std_sample(static5):
    eps = evaluate(static5, "rss", 10, seed=0)
    s = summarize(eps)
    assert s["total_J_std"] == pytest.approx(np.std([e.total_J for e in eps], ddof=1))


def test_window_means(static5):
    eps = evaluate(static5, "bes", 7, seed=0)
    w = window_means(eps, 3, n_workers=5)
    assert [r["count"] for r in w] == [3, 3, 1]
    assert w[0]["total_J"] == pytest.approx(np.mean([e.total_J for e in eps[:3]]))
    assert w[2]["violations_per_worker"] == pytest.approx((eps[6].p1 + eps[6].p2) / 5)


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_eval_stdout(capsys):
    code, out, _ = _run(["eval", "--agent", "bes", "--episodes", "3"], capsys)
    assert code == 0
    header, row = out.strip().splitlines()
    assert header.startswith("scheduler,episodes,total_J_mean")
    assert row.startswith("bes,3,")


def test_cli_eval_files(tmp_path, capsys):
    ep_csv, summ = tmp_path / "e.csv", tmp_path / "s.csv"
    code, _, _ = _run(["eval", "--agent", "rss", "--episodes", "6", "--out", str(ep_csv),
                       "--summary", str(summ)], capsys)
    assert code == 0
    lines = ep_csv.read_text().splitlines()
    assert lines[0].startswith("#") and lines[1] == ",".join(EPISODE_COLUMNS)
    assert len(lines) == 8 and "nan" not in ep_csv.read_text().lower()
    recomputed = summarize(read_episodes(ep_csv))
    emitted = read_summary(summ)[0]
    for k, v in recomputed.items():
        assert float(emitted[k]) == pytest.approx(v, rel=1e-9, abs=1e-12)


def test_cli_compare_and_figure(tmp_path, capsys):
    fig, out = tmp_path / "cmp.png", tmp_path / "cmp.csv"
    code, _, _ = _run(["compare", "--episodes", "4", "--out", str(out), "--figure", str(fig)], capsys)
    assert code == 0 and fig.stat().st_size > 1000
    assert [r["scheduler"] for r in read_summary(out)] == ["bes", "rss", "gss"]


def test_cli_sync_study(tmp_path, capsys):
    fig = tmp_path / "sync.png"
    code, out, _ = _run(["sync-study", "--env", "dynamic5", "--episodes", "3", "--h", "13,6",
                         "--figure", str(fig)], capsys)
    assert code == 0 and fig.exists()
    rows = out.strip().splitlines()
    assert len(rows) == 5 and rows[1].startswith("worker,13.0,rss")


def test_cli_train_then_eval(tmp_path, capsys):
    ck, csv_path = tmp_path / "p.ckpt", tmp_path / "train.csv"
    code, _, _ = _run(["train", "--env", "static5", "--episodes", "3", "--hidden", "8,8", "--batch-size", "8",
                       "--warmup", "10", "--train-every", "10", "--gradient-steps", "1",
                       "--checkpoint", str(ck), "--out", str(csv_path)], capsys)
    assert code == 0 and ck.exists()
    code, out, _ = _run(["eval", "--agent", "sac", "--policy", str(ck), "--episodes", "2"], capsys)
    assert code == 0 and out.splitlines()[1].startswith("sac,2,")
    fig = tmp_path / "train.png"
    code, out, _ = _run(["plot-data", "--csv", str(csv_path), "--window", "2", "--workers", "5",
                         "--figure", str(fig)], capsys)
    assert code == 0 and fig.exists() and len(out.strip().splitlines()) == 3


def test_cli_policy_worker_mismatch(tmp_path, capsys):
    ck = tmp_path / "k3.ckpt"
    maxima = preset("static5").caps_maxima()
    save_policy(SACAgent(3, maxima, SacConfig(hidden=(8, 8))), ck)
    code, _, err = _run(["eval", "--agent", "sac", "--policy", str(ck), "--episodes", "1"], capsys)
    assert code == 1 and "3 workers" in err


def test_cli_errors(tmp_path, capsys):
    assert _run(["eval", "--agent", "bes", "--env", "nope"], capsys)[0] == 1
    assert _run(["eval", "--agent", "sac", "--episodes", "1"], capsys)[0] == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("[environment]\nkind = static\n")
    assert _run(["eval", "--agent", "bes", "--env", str(bad)], capsys)[0] == 1
    with pytest.raises(SystemExit) as info:
        main(["eval", "--agent", "bes", "--bogus"])
    assert info.value.code != 0
