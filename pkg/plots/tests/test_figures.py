import hashlib
import json
import math

import pytest

from spdemc_plots.figures import (
    FigureKind,
    FigureRequest,
    render,
    render_cost_error,
    render_rate_surface,
)
from spdemc_plots.io import SchemaError, read_fit, read_rates, read_sweep

RATES_HEADER = "l1,l2,eF,stderr,m\n"
SWEEP_HEADER = "method,epsilon,error_sq,cost,walltime_s,seed,replicate\n"


@pytest.fixture
def rates_csv(tmp_path):
    lines = [RATES_HEADER]
    for l1 in range(4):
        for l2 in range(4):
            e_f = 2.0 ** (-0.5 * l1 - (2.0 / 3.0) * l2)
            lines.append(f"{l1},{l2},{e_f!r},0.001,100\n")
    path = tmp_path / "rates.csv"
    path.write_text("".join(lines))
    return path


@pytest.fixture
def fit_json(tmp_path):
    doc = {"B1bar": 1.0, "B2bar": 4.0 / 3.0, "B3bar": 4.0 / 3.0,
           "c1": 0.0, "c2": 0.0, "dominates": True}
    path = tmp_path / "fit.json"
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def sweep_csv(tmp_path):
    lines = [SWEEP_HEADER]
    for p in (2, 3, 4):
        eps = 2.0**-p
        lines.append(f"MIMC1,{eps!r},{(eps**2)!r},{4.0**p!r},0.5,7,0\n")
        lines.append(f"MLMC,{eps!r},{(2*eps**2)!r},{8.0**p!r},0.5,7,0\n")
    path = tmp_path / "sweep.csv"
    path.write_text("".join(lines))
    return path


class TestReaders:
    def test_rates(self, rates_csv):
        grid = read_rates(rates_csv)
        assert len(grid) == 16
        assert grid[(0, 0)][0] == 1.0

    def test_schema_mismatch_names_columns(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y\n1,2\n")
        with pytest.raises(SchemaError, match="l1"):
            read_rates(bad)
        with pytest.raises(SchemaError, match="method"):
            read_sweep(bad)

    def test_fit_missing_keys(self, tmp_path):
        path = tmp_path / "fit.json"
        path.write_text(json.dumps({"B1bar": 1.0}))
        with pytest.raises(SchemaError, match="B2bar"):
            read_fit(path)


class TestRateSurfaceFigure:
    def test_renders_and_ranges_match_csv(self, rates_csv, fit_json, tmp_path):
        out = tmp_path / "fig.png"
        meta = render_rate_surface(rates_csv, fit_json, out)
        assert out.exists() and out.stat().st_size > 0
        grid = read_rates(rates_csv)
        values = [math.log2(v[0]) for v in grid.values() if v[0] > 0]
        assert meta["csv_log2_min"] == pytest.approx(min(values))
        assert meta["csv_log2_max"] == pytest.approx(max(values))
        lo, hi = meta["data_range"]
        assert lo <= min(values) and hi >= max(values)

    def test_inputs_read_only(self, rates_csv, fit_json, tmp_path):
        before = (rates_csv.read_bytes(), fit_json.read_bytes())
        render_rate_surface(rates_csv, fit_json, tmp_path / "fig.png")
        assert (rates_csv.read_bytes(), fit_json.read_bytes()) == before

    def test_deterministic_bytes(self, rates_csv, fit_json, tmp_path):
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        render_rate_surface(rates_csv, fit_json, a)
        render_rate_surface(rates_csv, fit_json, b)
        assert hashlib.sha256(a.read_bytes()).digest() \
            == hashlib.sha256(b.read_bytes()).digest()

    def test_svg_deterministic(self, rates_csv, fit_json, tmp_path):
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        render_rate_surface(rates_csv, fit_json, a, fmt="svg")
        render_rate_surface(rates_csv, fit_json, b, fmt="svg")
        assert a.read_bytes() == b.read_bytes()


class TestCostErrorFigure:
    def test_renders_with_two_slopes(self, sweep_csv, tmp_path):
        out = tmp_path / "fig.png"
        meta = render_cost_error(sweep_csv, out)
        assert out.exists() and out.stat().st_size > 0
        assert meta["methods"] == ["MIMC1", "MLMC"]
        assert meta["slopes"]["MIMC1"] == pytest.approx(2.0, abs=1e-9)
        assert meta["slopes"]["MLMC"] == pytest.approx(3.0, abs=1e-9)

    def test_empty_sweep_renders_axes(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text(SWEEP_HEADER)
        out = tmp_path / "fig.png"
        meta = render_cost_error(path, out)
        assert out.exists() and out.stat().st_size > 0
        assert meta["rows"] == 0 and meta["slopes"] == {}

    def test_inputs_read_only(self, sweep_csv, tmp_path):
        before = sweep_csv.read_bytes()
        render_cost_error(sweep_csv, tmp_path / "fig.png")
        assert sweep_csv.read_bytes() == before


class TestRenderDispatch:
    def test_request_round_trip(self, sweep_csv, tmp_path):
        request = FigureRequest(FigureKind.COST_ERROR, [sweep_csv],
                                tmp_path / "f.png")
        meta = render(request)
        assert meta["rows"] == 6

    def test_bad_format_rejected(self, sweep_csv, tmp_path):
        with pytest.raises(ValueError):
            FigureRequest(FigureKind.COST_ERROR, [sweep_csv],
                          tmp_path / "f.pdf", format="pdf")

    def test_wrong_input_count(self, sweep_csv, tmp_path):
        request = FigureRequest(FigureKind.RATE_SURFACE, [sweep_csv],
                                tmp_path / "f.png")
        with pytest.raises(SchemaError):
            render(request)
