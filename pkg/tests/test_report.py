import json
from pathlib import Path

import numpy as np
import pytest
from conftest import DOMAINS

from billiardcap.errors import SchemaError
from billiardcap.geometry import domain_from_spec
from billiardcap.report import (
    SCHEMAS,
    TRACE_COLUMNS,
    jsonable,
    load_schema,
    plot_shot,
    plot_trajectory,
    validate,
    write_json,
    write_trace_csv,
)

ROOT = Path(__file__).resolve().parents[1]


class TestSchemas:
    @pytest.mark.parametrize("name", SCHEMAS)
    def test_docs_copy_identical(self, name):
        shipped = json.loads((ROOT / "src" / "billiardcap" / "schemas" / f"{name}.schema.json").read_text())
        assert json.loads((ROOT / "docs" / "schemas" / f"{name}.schema.json").read_text()) == shipped
        assert load_schema(name) == shipped

    @pytest.mark.parametrize("name", list(DOMAINS))
    def test_domains_validate(self, name):
        validate(DOMAINS[name], "domain")

    def test_domain_rejects_unknown_shape(self):
        with pytest.raises(SchemaError):
            validate({"dim": 2, "shape": "torus", "params": {}}, "domain")

    def test_reference_resolves_inside_trajectory(self):
        bad = {"domain": {"dim": 2}, "bounce_points": [[0, 1], [0, -1]]}
        with pytest.raises(SchemaError, match="domain"):
            validate(bad, "trajectory")


class TestJson:
    def test_jsonable_numpy(self):
        out = jsonable({"a": np.arange(3), "b": np.float64(1.5), "c": np.bool_(True), 1: (np.int64(2),)})
        assert out == {"a": [0, 1, 2], "b": 1.5, "c": True, "1": [2]}
        assert type(out["b"]) is float

    def test_write_json_sorted(self, tmp_path):
        write_json(tmp_path / "x.json", {"b": 1, "a": np.zeros(2)})
        text = (tmp_path / "x.json").read_text()
        assert text.index('"a"') < text.index('"b"')

    def test_write_json_rejects_nan(self, tmp_path):
        with pytest.raises(ValueError):
            write_json(tmp_path / "x.json", {"a": float("nan")})


class TestTrace:
    def test_csv_columns(self, tmp_path):
        stage = {"eps": 0.1, "N": 64, "tau": 4.5, "kinetic_integral": 3.0, "morse_index": 2,
                 "el_residual_max": 1e-9, "energy_std": 1e-6, "status": "converged"}
        write_trace_csv(tmp_path / "t.csv", [{"seed_index": 3, "stages": [stage, stage]}])
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0].split(",") == list(TRACE_COLUMNS)
        assert lines[2].startswith("3,1,0.1,64,4.5")


class TestFigures:
    def test_trajectory_svg_deterministic(self, tmp_path):
        d = domain_from_spec(DOMAINS["ellipse"])
        b = np.array([[0.0, 1.0], [0.0, -1.0]])
        t = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        loop = np.column_stack([0.05 * np.cos(t), 0.99 * np.sin(t)])
        plot_trajectory(tmp_path / "a.svg", d, b, loop, title="x")
        plot_trajectory(tmp_path / "b.svg", d, b, loop, title="x")
        a = (tmp_path / "a.svg").read_bytes()
        assert a.startswith(b"<?xml") and a == (tmp_path / "b.svg").read_bytes()

    def test_shot_svg(self, tmp_path):
        d = domain_from_spec(DOMAINS["disk"])
        plot_shot(tmp_path / "s.svg", d, np.array([[0, 0], [1, 0], [-1, 0]]))
        assert b"<svg" in (tmp_path / "s.svg").read_bytes()
