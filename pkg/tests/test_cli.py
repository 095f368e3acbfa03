import json

import pytest

from eitmono.cli import main

DISK = {"kind": "disk", "center": [0.4, 0.0], "radius": 0.3, "contrast": 2.0}


def _cfg(tmp_path, name="c.json", **over):
    cfg = {"schema": 1, "mesh": {"level": 3}, "grid": 16, "basis": {"kind": "fourier", "order": 4},
           "phantom": {"shapes": [DISK]}}
    cfg.update(over)
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _run(tmp_path, sub, cfg, *extra, out="out"):
    d = tmp_path / out
    return main([*sub, "--config", cfg, "--out", str(d), *extra]), d


def test_forward_outputs(tmp_path):
    cfg = _cfg(tmp_path, phantom={"shapes": [{"kind": "disk", "center": [0, 0], "radius": 0.5,
                                              "contrast": 2.0}]})
    code, d = _run(tmp_path, ["forward"], cfg)
    assert code == 0
    assert (d / "ntd.csv").read_text().splitlines()[0] == "8"
    assert (d / "eigs.csv").read_text().splitlines()[0] == "mode,fem,analytic,rel_err"
    assert (d / "conductivity.csv").exists() and (d / "provenance.log").exists()


def test_forward_check_passes_and_fails(tmp_path):
    ok = _cfg(tmp_path, "ok.json", phantom={"shapes": []}, check={"max_rel_err": 0.5})
    assert _run(tmp_path, ["forward"], ok, "--check")[0] == 0
    bad = _cfg(tmp_path, "bad.json", phantom={"shapes": []}, check={"max_rel_err": 1e-9})
    assert _run(tmp_path, ["forward"], bad, "--check", out="o2")[0] == 4


def test_reconstruct_outputs(tmp_path):
    cfg = _cfg(tmp_path, reconstruct={"mode": "definite-lin", "alphas": [0.5], "alpha_reg": 1e-12})
    code, d = _run(tmp_path, ["reconstruct"], cfg)
    assert code == 0
    for f in ("reconstruction.pgm", "reconstruction.csv", "metrics.csv", "provenance.log"):
        assert (d / f).exists()
    assert (d / "metrics.csv").read_text().startswith("phantom,mode,alpha_reg,jaccard,cells_in,cells_truth")


def test_reconstruct_check_fails_with_code_4(tmp_path):
    cfg = _cfg(tmp_path, reconstruct={"mode": "definite-lin", "alphas": [0.5], "alpha_reg": 1e-12},
               check={"min_jaccard": 1.01})
    assert _run(tmp_path, ["reconstruct"], cfg, "--check")[0] == 4
    # without --check the same run succeeds
    assert _run(tmp_path, ["reconstruct"], cfg, out="o2")[0] == 0


def test_reconstruct_inconsistent_data_code_3(tmp_path, capsys):
    cfg = _cfg(tmp_path, reconstruct={"mode": "indefinite-shrink", "alpha": 1e-3,
                                      "alpha_reg": 0.0})
    assert _run(tmp_path, ["reconstruct"], cfg)[0] == 3
    assert "numerical failure" in capsys.readouterr().err


def test_reconstruct_is_reproducible(tmp_path):
    cfg = _cfg(tmp_path, seed=11, reconstruct={"mode": "definite-lin", "alphas": [0.5],
                                                "delta": 1e-6})
    _, a = _run(tmp_path, ["reconstruct"], cfg, out="a")
    _, b = _run(tmp_path, ["reconstruct"], cfg, out="b")
    for f in ("reconstruction.csv", "metrics.csv", "provenance.log"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_seed_override_recorded(tmp_path):
    cfg = _cfg(tmp_path, reconstruct={"mode": "definite-lin", "alphas": [0.5], "delta": 1e-6})
    _, d = _run(tmp_path, ["reconstruct"], cfg, "--seed", str(2**64 - 1))
    assert str(2**64 - 1) in (d / "provenance.log").read_text()


def test_missing_reconstruct_section(tmp_path):
    assert _run(tmp_path, ["reconstruct"], _cfg(tmp_path))[0] == 2


def test_locpot_outputs(tmp_path):
    cfg = _cfg(tmp_path, phantom={"shapes": []},
               locpot={"d1": [{"kind": "disk", "center": [0, 0], "radius": 0.15}],
                       "d2": [{"kind": "disk", "center": [0, 0.55], "radius": 0.2}],
                       "orders": [2, 4, 6], "tau": {"shapes": []}},
               check={"expect": "blow-up", "agree": True})
    code, d = _run(tmp_path, ["locpot"], cfg, "--check")
    assert code == 0
    assert (d / "locpot.csv").read_text().splitlines()[0] == "order,E1,E2,ratio"
    txt = (d / "classification.txt").read_text()
    assert "classification: blow-up" in txt and "agreement: true" in txt
    assert (d / "independence.csv").exists()


def test_locpot_expect_mismatch(tmp_path):
    cfg = _cfg(tmp_path, phantom={"shapes": []},
               locpot={"d1": [{"kind": "disk", "center": [0, 0], "radius": 0.15}],
                       "d2": [{"kind": "disk", "center": [0, 0.55], "radius": 0.2}],
                       "orders": [2, 4, 6]},
               check={"expect": "bounded"})
    assert _run(tmp_path, ["locpot"], cfg, "--check")[0] == 4


def test_mesh_export_without_config(tmp_path):
    d = tmp_path / "m"
    assert main(["mesh", "export", "--level", "1", "--out", str(d)]) == 0
    assert (d / "mesh.txt").stat().st_size > 0


def test_phantom_render(tmp_path):
    code, d = _run(tmp_path, ["phantom", "render"], _cfg(tmp_path))
    assert code == 0
    assert (d / "phantom.pgm").read_text().startswith("P2\n16 16\n255")


def test_env_out(tmp_path, monkeypatch):
    monkeypatch.setenv("EITMONO_OUT", str(tmp_path / "env"))
    assert main(["phantom", "render", "--config", _cfg(tmp_path)]) == 0
    assert (tmp_path / "env" / "phantom.pgm").exists()


class TestConfigErrors:
    def test_missing_file(self, tmp_path, capsys):
        assert main(["forward", "--config", str(tmp_path / "nope.json")]) == 2
        assert "nope.json" in capsys.readouterr().err

    def test_unknown_field(self, tmp_path, capsys):
        cfg = _cfg(tmp_path, bogus=1)
        assert _run(tmp_path, ["forward"], cfg)[0] == 2
        assert "bogus" in capsys.readouterr().err

    def test_bad_nested_value(self, tmp_path, capsys):
        cfg = _cfg(tmp_path, basis={"kind": "fourier", "order": 0})
        assert _run(tmp_path, ["forward"], cfg)[0] == 2
        assert "basis/order" in capsys.readouterr().err

    def test_syntax_error(self, tmp_path, capsys):
        p = tmp_path / "s.json"
        p.write_text('{"schema": 1,\n "mesh": }')
        assert main(["forward", "--config", str(p)]) == 2
        assert "line 2" in capsys.readouterr().err

    def test_missing_config_for_forward(self, capsys):
        assert main(["forward"]) == 2

    def test_bad_threads(self, tmp_path):
        assert _run(tmp_path, ["forward"], _cfg(tmp_path), "--threads", "0")[0] == 2

    def test_bad_seed(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["forward", "--config", _cfg(tmp_path), "--seed", "-1"])


@pytest.mark.parametrize("name", [
    "disk.json", "concentric.json", "definite_lin.json", "definite_full.json",
    "indefinite_lin.json", "indefinite_shrink.json", "noisy_definite.json",
    "partial_boundary.json", "locpot_reachable.json", "locpot_shielded.json",
    "locpot_independence.json",
])
def test_shipped_configs_validate(name):
    from pathlib import Path

    from eitmono.config import load_config

    load_config(Path(__file__).parent.parent / "configs" / name)
