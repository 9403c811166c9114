import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from proxymt.cli import EXIT_CONTRACT, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from proxymt.errors import ContractError, GridFileError
from proxymt.grid import disk_complement_mask
from proxymt.io import (load_config, load_mask, load_tapers, read_grid, save_mask, save_tapers, validate_config,
                        write_grid, write_sidecar)
from proxymt.tapers import proxy_tapers


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=4, max_side=6),
                  elements=st.floats(allow_nan=True, allow_infinity=True)))
def test_grid_round_trip_is_bit_exact(tmp_path_factory, arr):
    p = tmp_path_factory.mktemp("g") / "a.mtsg"
    write_grid(p, arr)
    back = read_grid(p)
    assert back.shape == arr.shape and back.dtype == np.float64
    assert back.tobytes() == np.ascontiguousarray(arr).astype("<f8").tobytes()


def test_grid_byte_layout(tmp_path):
    p = tmp_path / "x.mtsg"
    write_grid(p, np.array([[1.0, -0.0, 2.5]]))
    raw = p.read_bytes()
    assert raw[:4] == b"MTSG"
    assert struct.unpack("<HH", raw[4:8]) == (1, 2)
    assert struct.unpack("<QQ", raw[8:24]) == (1, 3)
    assert struct.unpack("<3d", raw[24:]) == (1.0, -0.0, 2.5)
    assert len(raw) == 8 + 16 + 24


@pytest.mark.parametrize("mutate", ["magic", "version", "truncate", "extra", "short"])
def test_grid_corruption_is_detected(tmp_path, mutate):
    p = tmp_path / "x.mtsg"
    write_grid(p, np.zeros((3, 4)))
    raw = bytearray(p.read_bytes())
    if mutate == "magic":
        raw[0:4] = b"NOPE"
    elif mutate == "version":
        raw[4:6] = struct.pack("<H", 2)
    elif mutate == "truncate":
        raw = raw[:-8]
    elif mutate == "extra":
        raw += b"\0" * 8
    else:
        raw = raw[:6]
    p.write_bytes(bytes(raw))
    with pytest.raises(GridFileError):
        read_grid(p)


def test_mask_and_taper_bundle_round_trip(tmp_path):
    m = disk_complement_mask(24, 9)
    save_mask(tmp_path / "m.mtsg", m)
    assert load_mask(tmp_path / "m.mtsg") == m
    tap = proxy_tapers(m, K=12, T=2, seed=7)
    paths = save_tapers(tmp_path / "tap", tap)
    assert len(paths) == 12
    back = load_tapers(tmp_path / "tap")
    np.testing.assert_array_equal(back.vectors, tap.vectors)
    np.testing.assert_array_equal(back.lambdas, tap.lambdas)
    assert back.kind == "proxy" and back.meta["seed"] == 7


def test_non_binary_mask_rejected(tmp_path):
    write_grid(tmp_path / "m.mtsg", np.array([0.0, 0.5, 1.0]))
    with pytest.raises(GridFileError):
        load_mask(tmp_path / "m.mtsg")


def test_config_schema():
    validate_config({"command": "sweep-specwin", "N": 256, "W": 0.125, "radii": [16, 32], "seed": 1})
    with pytest.raises(ContractError):
        validate_config({"command": "sweep-specwin", "bogus": 1})
    with pytest.raises(ContractError):
        validate_config({"command": "launch"})
    with pytest.raises(ContractError):
        validate_config({"command": "tapers", "W": 0.7})
    with pytest.raises(ContractError):
        validate_config({"command": "tapers", "W": 0.1, "K": 3})


def test_load_config_from_sidecar(tmp_path):
    write_sidecar(tmp_path / "a.mtsg", {"config": {"command": "simulate", "N": 64, "d": 2, "seed": 2}, "extra": 1})
    assert load_config(tmp_path / "a.mtsg.json")["N"] == 64
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(GridFileError):
        load_config(tmp_path / "bad.json")


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_usage_errors(capsys):
    assert run(["mask", "--bogus"], capsys)[0] == EXIT_USAGE
    assert run(["frobnicate"], capsys)[0] == EXIT_USAGE
    assert run([], capsys)[0] == EXIT_USAGE
    assert run(["sweep-specwin", "--radii", "a,b", "--out", "x"], capsys)[0] == EXIT_USAGE


def test_cli_mask_tapers_window_estimate(tmp_path, capsys):
    m = tmp_path / "m.mtsg"
    code, out, _ = run(["mask", "--shape", "disk-complement", "--N", 32, "--R", 10, "--out", m], capsys)
    assert code == EXIT_OK and "n_omega=" in out
    assert json.loads((tmp_path / "m.mtsg.json").read_text())["config"]["options"]["shape"] == "disk-complement"
    tap = tmp_path / "tap"
    code, out, _ = run(["tapers", "--mask", m, "--K", 49, "--T", 2, "--seed", 7, "--out", tap], capsys)
    assert code == EXIT_OK
    assert len(list(tap.glob("taper_*.mtsg"))) == 49
    meta = json.loads((tap / "tapers.json").read_text())
    assert meta["K"] == 49 and meta["seed"] == 7 and meta["T"] == 2
    f = tmp_path / "x.mtsg"
    assert run(["simulate", "--N", 32, "--density", "constant", "--seed", 1, "--out", f], capsys)[0] == EXIT_OK
    w = tmp_path / "rho.mtsg"
    code, out, _ = run(["window", "--tapers", tap, "--freq-dims", "64,64", "--out", w], capsys)
    assert code == EXIT_OK and read_grid(w).shape == (64, 64)
    e = tmp_path / "s.mtsg"
    assert run(["estimate", "--field", f, "--tapers", tap, "--out", e], capsys)[0] == EXIT_OK
    e2 = tmp_path / "p.mtsg"
    assert run(["estimate", "--field", f, "--mask", m, "--out", e2], capsys)[0] == EXIT_OK


def test_cli_sidecar_replay_is_bit_exact(tmp_path, capsys):
    m = tmp_path / "m.mtsg"
    run(["mask", "--N", 24, "--R", 8, "--out", m], capsys)
    a = tmp_path / "a"
    run(["tapers", "--mask", m, "--W", 0.3, "--seed", 5, "--out", a], capsys)
    b = tmp_path / "b"
    code, _, _ = run(["tapers", "--config", a / "tapers.json", "--out", b], capsys)
    assert code == EXIT_OK
    for pa in sorted(a.glob("taper_*.mtsg")):
        assert pa.read_bytes() == (b / pa.name).read_bytes()


def test_cli_error_exit_codes(tmp_path, capsys):
    m = tmp_path / "m.mtsg"
    run(["mask", "--N", 16, "--R", 4, "--out", m], capsys)
    code, _, err = run(["tapers", "--mask", m, "--K", 10 ** 6, "--out", tmp_path / "t"], capsys)
    assert code == EXIT_CONTRACT and "contract" in err
    assert run(["tapers", "--mask", tmp_path / "missing.mtsg", "--K", 3, "--out", tmp_path / "t"], capsys)[0] == EXIT_IO
    (tmp_path / "junk.mtsg").write_bytes(b"junk")
    assert run(["tapers", "--mask", tmp_path / "junk.mtsg", "--K", 3, "--out", tmp_path / "t"], capsys)[0] == EXIT_IO
    assert run(["mask", "--N", 16, "--R", 40, "--shape", "disk-complement", "--out", m], capsys)[0] == EXIT_CONTRACT


def test_cli_sweep_writes_csv(tmp_path, capsys):
    out = tmp_path / "s.csv"
    code, line, _ = run(["sweep-specwin", "--N", 48, "--W", 0.25, "--radii", "6,10,16", "--seed", 1, "--out", out],
                        capsys)
    assert code == EXIT_OK and "slope=" in line
    header = out.read_text().splitlines()[0].split(",")
    assert header[:3] == ["R", "l1_window_error", "l1_window_error_lattice"]
    side = json.loads((tmp_path / "s.csv.json").read_text())
    assert set(side["slopes"]) >= {"l1_window_error"}


def test_cli_selftest(capsys):
    code, out, _ = run(["selftest"], capsys)
    assert code == EXIT_OK
    assert out.count("PASS") >= 6 and "FAIL" not in out
