import os

import numpy as np
import pytest

from fsoemu.cli import run
from fsoemu.config import ConfigError, Scenario, dumps
from fsoemu.geometry import OrbitPass
from fsoemu.runner import fit_distributions, run_pass, select_optics, write_results

SHORT = Scenario(pass_=OrbitPass(pass_duration=20.0, time_step=1.0, edge_zenith=5.0))


def _small(tmp_path, **run_kw):
    import dataclasses

    s = dataclasses.replace(SHORT, run=dataclasses.replace(SHORT.run, screen_size=64, screen_stride=5, histogram_draws=20, **run_kw))
    path = tmp_path / "s.yaml"
    path.write_text(dumps(s))
    return s, str(path)


def test_weibull_fit_recovers_shape():
    x = np.random.default_rng(0).weibull(2.0, 10_000)
    fit = fit_distributions(x, "weibull")
    assert fit.params["shape"] == pytest.approx(2.0, rel=0.05)


def test_weibull_moments_fit_recovers_parameters():
    x = 0.3 + 0.1 * np.random.default_rng(2).weibull(3.0, 20_000)
    fit = fit_distributions(x, "weibull", method="mm")
    assert fit.method == "mm" and "(mm)" in fit.to_text()
    assert fit.params["shape"] == pytest.approx(3.0, rel=0.1)
    assert fit.params["loc"] == pytest.approx(0.3, abs=0.02)
    with pytest.raises(ValueError):
        fit_distributions(x, "weibull", method="bayes")


def test_lognormal_fit_passes_ks():
    x = np.random.default_rng(1).lognormal(0.0, 0.3, 10_000)
    fit = fit_distributions(x, "lognormal")
    assert fit.p_value > 0.05
    assert fit.params["sigma"] == pytest.approx(0.3, rel=0.05)


def test_constant_samples_are_degenerate():
    fit = fit_distributions(np.ones(200), "weibull")
    assert fit.degenerate and "degenerate" in fit.to_text()


def test_fit_input_checks():
    with pytest.raises(ValueError):
        fit_distributions(np.ones(10), "weibull")
    with pytest.raises(ValueError):
        fit_distributions(np.ones(200), "gamma")


def test_select_optics():
    assert [round(o.wavelength * 1e9) for o in select_optics(SHORT, [850])] == [850]
    with pytest.raises(ConfigError):
        select_optics(SHORT, [1064])


def test_run_pass_outputs(tmp_path):
    s, _ = _small(tmp_path)
    res = run_pass(s)
    assert sorted(res) == [630, 850, 1550]
    written = write_results(res, s, str(tmp_path / "out"), "simulate-pass")
    names = {os.path.basename(w) for w in written}
    assert {"series_1550nm.csv", "plan_voa_630nm.csv", "keyrate_report.txt", "fits_850nm.txt"} <= names
    mean = {nm: np.mean(-10 * np.log10(r.series.T_total)) for nm, r in res.items()}
    assert mean[630] < mean[850] < mean[1550]


def test_device_faithful_holds_attenuator_loss(tmp_path):
    s, _ = _small(tmp_path, device_faithful=True)
    r = run_pass(s, [1550], with_plan=False, with_screens=False, with_histograms=False)[1550]
    held = r.series.T_voa
    # 1.8 Hz hold over 1 s samples: some consecutive values repeat
    assert np.any(held[1:] == held[:-1])


def test_cli_init_config_round_trips(capsys):
    assert run(["init-config"]) == 0
    assert capsys.readouterr().out == dumps(Scenario())


def test_cli_bad_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("nonsense: 1\n")
    assert run(["keyrate", "--config", str(p)]) == 2
    assert "nonsense: unknown key" in capsys.readouterr().err


def test_cli_unknown_wavelength_exit_code(tmp_path):
    _, cfg = _small(tmp_path)
    assert run(["keyrate", "--config", cfg, "--wavelength", "1064", "--out", str(tmp_path / "o")]) == 2


@pytest.mark.parametrize("exc", ["numerical", "physicality"])
def test_cli_numerical_failure_exit_code(tmp_path, monkeypatch, exc):
    from fsoemu import cli
    from fsoemu.keyrate import PhysicalityError
    from fsoemu.turbulence import NumericalError

    def boom(*a, **k):
        raise (NumericalError if exc == "numerical" else PhysicalityError)("did not converge")

    monkeypatch.setattr(cli, "run_pass", boom)
    _, cfg = _small(tmp_path)
    assert run(["keyrate", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


@pytest.mark.parametrize("cmd", ["simulate-pass", "keyrate", "device-plan", "fit-dist", "quantization-report", "gen-screens"])
def test_cli_subcommands_write_files(tmp_path, cmd, capsys):
    _, cfg = _small(tmp_path)
    out = tmp_path / "o"
    assert run([cmd, "--config", cfg, "--wavelength", "1550", "--out", str(out)]) == 0
    assert len(os.listdir(out)) > 0


def test_gen_screens_text_and_index(tmp_path):
    _, cfg = _small(tmp_path)
    out = tmp_path / "o"
    assert run(["gen-screens", "--config", cfg, "--wavelength", "630", "--time-index", "0", "--time-index", "3", "--text", "--out", str(out)]) == 0
    assert sorted(os.listdir(out)) == ["screen_630nm_t0000.txt", "screen_630nm_t0003.txt"]
    assert run(["gen-screens", "--config", cfg, "--time-index", "999", "--out", str(out)]) == 2


def test_direction_override_changes_output(tmp_path):
    _, cfg = _small(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    run(["keyrate", "--config", cfg, "--wavelength", "1550", "--out", str(a)])
    run(["keyrate", "--config", cfg, "--wavelength", "1550", "--out", str(b), "--direction", "up"])
    assert (a / "series_1550nm.csv").read_bytes() != (b / "series_1550nm.csv").read_bytes()
