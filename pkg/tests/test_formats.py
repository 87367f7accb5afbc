"""
Model files, CSV tables, JSON reports and the geodesic cache.
"""

import json
import math

import numpy as np
import pytest

from cache import cache_stats, clear_cache, load_solutions, save_solutions
from errors import InputError
from formats import (
    dumps,
    envelope,
    load_model,
    load_run_config,
    read_measure_csv,
    resolve_model,
    to_jsonable,
    write_distortion_csv,
    write_jacobi_csv,
    write_measure_csv,
    write_text,
)
from models import (
    BoundReport,
    BoundViolation,
    DiscreteMeasure,
    DistortionCurve,
    GeodesicSolution,
    JacobiMatrixState,
)

EUCLIDEAN_TOML = """
kind = "generic"
dim = 2

[[frame]]
components = [ [[1.0, [0, 0]]], [] ]

[[frame]]
components = [ [], [[1.0, [0, 0]]] ]

[density]
terms = [[1.0, [0, 0]], [0.5, [1, 0]]]
"""


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


# ── model files ───────────────────────────────────────────────────────────────


def test_load_generic_model(tmp_path):
    model = load_model(_write(tmp_path, "plane.toml", EUCLIDEAN_TOML))
    assert model.kind == "generic"
    assert model.dim == 2
    assert resolve_model(str(tmp_path / "plane.toml")).spec_hash() == model.spec_hash()


def test_load_htype_model(tmp_path):
    text = 'kind = "htype"\n[htype]\nJ = [ [[0, -1], [1, 0]] ]\nS = [[1, 0], [0, 1]]\n'
    model = load_model(_write(tmp_path, "h.toml", text))
    assert model.kind == "htype"
    assert model.dim == 3


def test_resolve_builtin_names():
    assert resolve_model("heisenberg").kind == "heisenberg"
    assert resolve_model("Grushin2").kind == "grushin"
    with pytest.raises(InputError):
        resolve_model("sphere")


@pytest.mark.parametrize(
    "text",
    [
        'kind = "heisenberg"\ncolour = "red"\n',
        'kind = "torus"\n',
        'kind = "htype"\n[htype]\nS = [[1, 0], [0, 1]]\n',
        EUCLIDEAN_TOML.replace("dim = 2", "dim = 3"),
        'kind = "generic"\n[[frame]]\ncomponents = [ [[1.0, "x"]] ]\n',
        "kind = ",
    ],
)
def test_load_model_rejects(tmp_path, text):
    with pytest.raises(InputError):
        load_model(_write(tmp_path, "bad.toml", text))


def test_load_model_missing_file(tmp_path):
    with pytest.raises(InputError):
        load_model(tmp_path / "absent.toml")


def test_load_run_config(tmp_path):
    path = _write(tmp_path, "run.toml", 'model = "grushin"\nseed = 7\n[params]\ngrid = "4x4x4x4"\n')
    assert load_run_config(path) == {"model": "grushin", "seed": 7, "params": {"grid": "4x4x4x4"}}


# ── CSV tables ────────────────────────────────────────────────────────────────


def test_distortion_csv(heis):
    curve = DistortionCurve(heis, np.zeros(3), np.array([1.0, 0, 0]), np.array([0.1, 1.0]), np.array([1e-5, 1.0]), "closed")
    text = write_distortion_csv(curve)
    assert text.splitlines() == ["t,beta,method", "0.1,1e-05,closed", "1.0,1.0,closed"]


def test_jacobi_csv():
    state = JacobiMatrixState(0.5, np.eye(2), 2 * np.eye(2))
    header, row = write_jacobi_csv([state]).splitlines()
    assert header == "t,M11,M12,M21,M22,N11,N12,N21,N22,detM,detN"
    assert row.split(",")[-2:] == ["1.0", "4.0"]
    assert write_jacobi_csv([]) == "t\n"


def test_measure_csv_roundtrip(tmp_path, heis):
    mu = DiscreteMeasure(np.array([[0.0, 0.0, 0.0], [0.1, 0.2, 0.3]]), np.array([0.25, 0.75]))
    path = _write(tmp_path, "mu.csv", write_measure_csv(mu))
    back = read_measure_csv(path, heis)
    np.testing.assert_array_equal(back.support, mu.support)
    np.testing.assert_array_equal(back.weights, mu.weights)


@pytest.mark.parametrize(
    "text",
    [
        "",
        "x,y,z,weight\n0,0,0,1\n",
        "q1,q2,q3,weight\n",
        "q1,q2,q3,weight\n0,0,zero,1\n",
        "q1,q2,q3,weight\n0,0,0,0.5\n1,0,0,0.4\n",
    ],
)
def test_read_measure_csv_rejects(tmp_path, heis, text):
    with pytest.raises(InputError):
        read_measure_csv(_write(tmp_path, "mu.csv", text), heis)


# ── JSON reports ──────────────────────────────────────────────────────────────


def test_dumps_non_finite_and_shortest_floats():
    data = json.loads(dumps({"a": math.inf, "b": -math.inf, "c": math.nan, "d": 0.1, "e": np.float64(1 / 3)}))
    assert data == {"a": "inf", "b": "-inf", "c": "nan", "d": 0.1, "e": 1 / 3}


def test_to_jsonable_keeps_properties(heis):
    v = BoundViolation((0.0, 0.0, 0.0), (1.0, 0.0, 0.5), 0.5, 0.03, 0.04)
    report = BoundReport(4.9, {"w": 2}, 4, 0.75, -0.01, [v], 1)
    out = to_jsonable(report)
    assert out["verdict"] == "fail"
    assert out["violations"][0]["gap"] == pytest.approx(-0.01)
    assert to_jsonable(heis) == {"label": heis.label, "spec_hash": heis.spec_hash()}


def test_envelope_is_deterministic(heis):
    env = envelope("distortion", heis, 42, {"times": np.array([0.5])}, {"values": np.array([0.1, 0.2])})
    assert env["tool"] == "srdist"
    assert env["seed"] == 42
    assert len(env["spec_hash"]) == 64
    assert dumps(env) == dumps(envelope("distortion", heis, 42, {"times": np.array([0.5])}, {"values": np.array([0.1, 0.2])}))


def test_write_text(tmp_path, capsys):
    write_text("hello\n", None)
    assert capsys.readouterr().out == "hello\n"
    write_text("saved\n", tmp_path / "out.txt")
    assert (tmp_path / "out.txt").read_text() == "saved\n"


# ── geodesic cache ────────────────────────────────────────────────────────────


def _solutions():
    return [
        GeodesicSolution((0.0, 0.0, 6.2831853), 3.5449077, 1e-12, True, 1.0, True),
        GeodesicSolution((0.0, 0.0, 12.566), 5.0, 1e-11, False, None, False),
    ]


def test_cache_roundtrip(tmp_path, heis):
    db = tmp_path / "geo.db"
    assert load_solutions(heis, (0, 0, 0), (0, 0, 1), 1e-9, db_path=db) is None
    save_solutions(heis, (0, 0, 0), (0, 0, 1), 1e-9, _solutions(), db_path=db)
    back = load_solutions(heis, (0, 0, 0), (0, 0, 1), 1e-9, db_path=db)
    assert back == _solutions()
    assert load_solutions(heis, (0, 0, 0), (0, 0, 1), 1e-8, db_path=db) is None


def test_cache_key_includes_starts_and_seed(tmp_path, heis):
    db = tmp_path / "geo.db"
    save_solutions(heis, (0, 0, 0), (0, 0, 1), 1e-9, _solutions(), starts=16, seed=3, db_path=db)
    assert load_solutions(heis, (0, 0, 0), (0, 0, 1), 1e-9, starts=16, seed=3, db_path=db) == _solutions()
    assert load_solutions(heis, (0, 0, 0), (0, 0, 1), 1e-9, starts=32, seed=3, db_path=db) is None
    assert load_solutions(heis, (0, 0, 0), (0, 0, 1), 1e-9, starts=16, seed=4, db_path=db) is None
    save_solutions(heis, (0, 0, 0), (0, 0, 1), 1e-9, _solutions()[:1], starts=16, seed=2**64 - 1, db_path=db)
    assert cache_stats(db_path=db)["pairs"] == 2


def test_cache_replaces_and_clears(tmp_path, heis, grushin):
    db = tmp_path / "geo.db"
    save_solutions(heis, (0, 0, 0), (0, 0, 1), 1e-9, _solutions(), db_path=db)
    save_solutions(heis, (0, 0, 0), (0, 0, 1), 1e-9, _solutions()[:1], db_path=db)
    save_solutions(grushin, (0, 0), (1, 0), 1e-9, [GeodesicSolution((1.0, 0.0), 1.0, 0.0, True, np.inf)], db_path=db)
    stats = cache_stats(db_path=db)
    assert stats["solutions"] == 2
    assert stats["pairs"] == 2
    assert len(load_solutions(heis, (0, 0, 0), (0, 0, 1), 1e-9, db_path=db)) == 1

    clear_cache(db_path=db)
    assert cache_stats(db_path=db)["solutions"] == 0
