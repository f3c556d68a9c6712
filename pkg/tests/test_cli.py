import csv
import io
import subprocess
import sys as _sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macimmse import __version__, cli
from macimmse.cli import ConfigError, interference_report, parse_config, parse_matrix, parse_range, run
from macimmse.system import scalar_system

BASE = """
experiment = mi-surface
h1 = (1,0)
h2 = (1,0)
snr = 1
n_samples = 2000
seed = 7
"""


def table(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(io.StringIO("\n".join(lines))))
    return rows[0], np.array(rows[1:], dtype=float)


def surface(text):
    header, data = table(text)
    p1, p2 = sorted(set(data[:, 0])), sorted(set(data[:, 1]))
    z = np.empty((len(p1), len(p2)))
    for row in data:
        z[p1.index(row[0]), p2.index(row[1])] = row[2]
    return z


class TestParsing:
    def test_matrix_row_major(self):
        m = parse_matrix("(1,0),(0,1),(2,-1),(0.5,0)", 2, 2, "h1")
        np.testing.assert_array_equal(m, [[1, 1j], [2 - 1j, 0.5]])

    @pytest.mark.parametrize("text", ["(1,0)", "(1,0),(2,0),(3,0)", "(1,a),(0,0),(0,0),(0,0)", "1,0,0,0"])
    def test_matrix_errors_name_key(self, text):
        with pytest.raises(ConfigError, match="^h1"):
            parse_matrix(text, 2, 2, "h1")

    def test_range_inclusive(self):
        assert parse_range("0:1:0.25", "snr") == [0.0, 0.25, 0.5, 0.75, 1.0]
        assert parse_range("1.5", "snr") is None

    @pytest.mark.parametrize("text", ["0:1:0", "0:1:-1", "2:1:0.5", "a:1:1"])
    def test_range_errors(self, text):
        with pytest.raises(ConfigError, match="^p1"):
            parse_range(text, "p1")

    @given(st.floats(0, 10), st.floats(0.01, 3), st.integers(1, 30))
    @settings(max_examples=50, deadline=None)
    def test_range_count_and_step(self, start, step, n):
        vals = parse_range(f"{start!r}:{start + (n - 1) * step!r}:{step!r}", "snr")
        assert len(vals) == n and vals[0] == start

    def test_power_axes(self):
        spec = parse_config(BASE + "p1 = 0:4:2\np2 = 1:2:1\n")
        assert spec.axes == {"p1": [0.0, 2.0, 4.0], "p2": [1.0, 2.0]}
        assert len(spec.grid()) == 6
        sys = spec.system_at({"p1": 4.0, "p2": 1.0})
        assert abs(sys.p1[0, 0]) ** 2 == pytest.approx(4.0)

    def test_vector_power_axis_spreads_over_antennas(self):
        text = BASE.replace("h1 = (1,0)", "h1 = (1,0),(0,0),(0,0),(1,0)").replace("h2 = (1,0)", "h2 = (1,0),(0,0),(0,0),(1,0)")
        spec = parse_config(text + "n_r = 2\nn_t = 2\np1 = 2:2:1\n")
        np.testing.assert_allclose(spec.system_at({"p1": 2.0}).p1, np.eye(2))

    @pytest.mark.parametrize(
        "extra,key",
        [
            ("bogus = 1\n", "bogus"),
            ("snr = -1\n", "snr"),
            ("n_samples = 0\n", "n_samples"),
            ("n_samples = many\n", "n_samples"),
            ("c1 = 8psk\n", "c1"),
            ("q1 = 0\n", "q1"),
            ("workers = 0\n", "workers"),
            ("method = sobol\n", "method"),
            ("p1 = -1:1:1\n", "p1"),
        ],
    )
    def test_invalid_key_named(self, extra, key):
        name = extra.split("=")[0].strip()
        text = "\n".join(ln for ln in BASE.splitlines() if not ln.startswith(name + " "))
        with pytest.raises(ConfigError, match=f"^{key}"):
            parse_config(text + "\n" + extra)

    def test_duplicate_key_named(self):
        with pytest.raises(ConfigError, match="^seed: duplicate"):
            parse_config(BASE + "seed = 3\n")

    def test_unknown_experiment(self):
        with pytest.raises(ConfigError, match="^experiment"):
            parse_config(BASE.replace("mi-surface", "no-such-experiment"))

    def test_missing_channel(self):
        with pytest.raises(ConfigError, match="^h2"):
            parse_config(BASE.replace("h2 = (1,0)\n", ""))

    def test_mercury_needs_gains(self):
        with pytest.raises(ConfigError, match="^gains"):
            parse_config(BASE.replace("mi-surface", "mercury"))

    def test_hash_ignores_run_controls(self):
        a = parse_config(BASE)
        b = parse_config(BASE + "workers = 8\noutput = /tmp/x.csv\n")
        c = parse_config(BASE.replace("seed = 7", "seed = 8"))
        assert a.config_hash == b.config_hash != c.config_hash


class TestRun:
    def test_header_and_provenance(self):
        text = run(parse_config(BASE + "p1 = 0:1:1\n"))
        first = text.splitlines()[0]
        spec = parse_config(BASE)
        assert first.startswith(f"# macimmse {__version__} experiment=mi-surface")
        assert "seed=7" in first and "n_samples=2000" in first and "config_sha256=" in first
        header, data = table(text)
        assert header == ["p1", "mi_bits", "mi_bits_se"]
        assert data.shape == (2, 3)
        assert spec.config_hash

    def test_every_estimate_has_error_column(self):
        for exp in ("mi-surface", "mmse-surface", "per-user-mmse", "covariance-surface"):
            header, _ = table(run(parse_config(BASE.replace("mi-surface", exp))))
            metrics = [h for h in header if not h.endswith("_se")]
            assert all(f"{m}_se" in header for m in metrics)

    def test_deterministic_across_runs_and_workers(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text(BASE.replace("mi-surface", "covariance-surface") .replace("n_samples = 2000", "n_samples = 20000") + "p1 = 0.5:1:0.5\n")
        outs = []
        for workers in (1, 1, 8):
            out = tmp_path / f"o{len(outs)}.csv"
            assert cli.main(["run", str(cfg), "--workers", str(workers), "--output", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_nan_aborts_with_context(self, monkeypatch, capsys, tmp_path):
        monkeypatch.setitem(cli.RUNNERS, "mi-surface", lambda spec, sys, seed: {"mi_bits": float("nan")})
        cfg = tmp_path / "c.ini"
        cfg.write_text(BASE + "p1 = 0:2:1\n")
        assert cli.main(["run", str(cfg)]) != 0
        err = capsys.readouterr().err
        assert "mi_bits" in err and "grid point 0" in err and "p1=0.0" in err

    def test_invalid_key_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "c.ini"
        cfg.write_text(BASE + "colour = red\n")
        assert cli.main(["run", str(cfg)]) != 0
        assert "colour" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "none.ini")]) != 0

    def test_version_subprocess(self):
        out = subprocess.run([_sys.executable, "-m", "macimmse", "version"], capture_output=True, text=True, check=True)
        assert out.stdout.strip() == f"macimmse {__version__}"

    def test_check_suite(self, capsys):
        assert cli.main(["check", "--samples", "50000"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert [ln.split()[1] for ln in lines] == ["immse:", "gradient:", "score:"]
        assert all(ln.startswith("PASS") for ln in lines)

    @pytest.mark.parametrize(
        "exp,extra",
        [
            ("immse-check", ""),
            ("gradient-check", "method = quadrature\n"),
            ("lowsnr-check", "method = quadrature\n"),
            ("precode", "method = quadrature\n"),
            ("power-allocation", "method = quadrature\nq1 = 4\nq2 = 2\n"),
            ("mercury", "gains = 1 0.25\n"),
        ],
    )
    def test_experiments_run(self, exp, extra):
        header, data = table(run(parse_config(BASE.replace("mi-surface", exp) + extra)))
        assert data.shape[0] == 1 and np.all(np.isfinite(data))


class TestSurfaces:
    GRID = "p1 = 1:3:0.5\np2 = 1:3:0.5\nsnr = 4\nmethod = quadrature\n"

    def _surface(self, exp, h2="(1,0)"):
        spec = parse_config(BASE.replace("mi-surface", exp).replace("h2 = (1,0)", f"h2 = {h2}").replace("snr = 1\n", "") + self.GRID)
        return surface(run(spec))

    def test_cophase_mi_dips_on_diagonal(self):
        z = self._surface("mi-surface")
        for i in range(1, z.shape[0] - 1):
            assert z[i, i] < z[i, i - 1] and z[i, i] < z[i, i + 1]

    def test_orthogonal_mi_has_no_dip(self):
        z = self._surface("mi-surface", "(0,1)")
        assert np.all(np.diff(z, axis=0) > 0) and np.all(np.diff(z, axis=1) > 0)

    def test_mmse_swaps_shape(self):
        z = self._surface("mmse-surface")
        for i in range(1, z.shape[0] - 1):
            assert z[i, i] > z[i, i - 1] and z[i, i] > z[i, i + 1]

    def test_covariance_term_negative(self):
        spec = parse_config(BASE.replace("mi-surface", "covariance-surface").replace("snr = 1\n", "") + self.GRID)
        header, data = table(run(spec))
        col = header.index("interference12")
        assert np.all(data[:, col] < 0)


class TestInterferenceReport:
    def test_orthogonal_vanishes(self):
        rep = interference_report(scalar_system(1, 1j, 1, 1, 1.0), seed=2, n_samples=50_000)
        se = rep.stats.std_errors["interference12"]
        assert abs(np.trace(rep.t12).real) <= 5 * se
        assert abs(np.trace(rep.t21).real) <= 5 * se

    def test_silent_user_one(self):
        rep = interference_report(scalar_system(1, 1, 0, 1, 1.0), n_samples=5_000)
        assert np.all(rep.t21 == 0)

    def test_cophase_nonzero_and_negative_contribution(self):
        rep = interference_report(scalar_system(), method="quadrature")
        assert rep.t12[0, 0].real > 0.1
        assert rep.gradient_term12[0, 0].real < 0

    def test_scalar_rewrite(self):
        sys = scalar_system(0.8 + 0.1j, 0.5 - 0.7j, 1.1, 0.9j, 1.3)
        rep = interference_report(sys, method="quadrature")
        h1, h2 = sys.h1[0, 0], sys.h2[0, 0]
        assert rep.rewrite12 * np.conj(h1) * h2 == pytest.approx(rep.t12[0, 0], abs=1e-14)
        assert rep.rewrite21 * np.conj(h2) * h1 == pytest.approx(rep.t21[0, 0], abs=1e-14)

    def test_matrix_case_has_no_rewrite(self):
        from conftest import random_system

        rep = interference_report(random_system(1), n_samples=2_000)
        assert rep.rewrite12 is None and rep.t12.shape == (2, 2)
