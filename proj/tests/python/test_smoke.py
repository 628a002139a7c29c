import json
import os
from pathlib import Path

import numpy as np
import pytest

import molgeom

DATA = Path(os.environ.get("MOLGEOM_TEST_DATA", Path(__file__).resolve().parents[1] / "data"))
CONFIGS = Path(os.environ.get("MOLGEOM_CONFIG_DIR", Path(__file__).resolve().parents[2] / "configs"))


def conformer(name):
    return (DATA / "conformers" / name).read_text()


def test_murmur3_vectors():
    for v in json.loads((DATA / "murmur3_vectors.json").read_text()):
        assert molgeom.murmur3_32(bytes.fromhex(v["hex"]), v["seed"]) == v["digest"]


def test_parse_selfies_branch():
    parsed = molgeom.parse_selfies("[C][Branch1][C][O]")
    assert parsed["atom_positions"] == [0, 3]
    assert parsed["elements"] == ["C", "O"]
    with pytest.raises(molgeom.UnsupportedTokenError):
        molgeom.parse_selfies("[C][Branch2][C][O]")
    with pytest.raises(molgeom.MolgeomError):
        molgeom.parse_selfies("[C")


def test_fingerprint_shape_and_folding():
    raw, folded = molgeom.fingerprint(conformer("mol03.json"), iterations=2, vocab_size=97)
    assert len(raw) == 3
    assert all(len(row) == 3 for row in raw)
    assert folded == [[v % 97 for v in row] for row in raw]
    with pytest.raises(molgeom.SchemaError):
        molgeom.fingerprint("{")


def test_tokenize_mask():
    s, mask, length = molgeom.tokenize(conformer("mol13.json"), (CONFIGS / "desk.json").read_text())
    assert s.shape[0] == len(mask)
    assert mask.count(0.0) == length
    assert np.all(s[length:] == 0)


def test_full_scale_shapes():
    trace = molgeom.shape_trace(full_scale=True)
    assert trace["N"] == 4096
    assert trace["M"] == 256
    assert tuple(trace["H_vis"]) == (256, 2048)
    assert tuple(trace["H_fused"]) == (256, 4096)


def test_projector_forward_padding():
    rng = np.random.default_rng(0)
    hvis = rng.uniform(-1, 1, (3, 8)).astype(np.float32)
    s = rng.uniform(-1, 1, (5, 6)).astype(np.float32)
    mask = [0.0, 0.0, 0.0, -1e9, -1e9]
    out = molgeom.projector_forward(hvis, s, mask)
    assert out.shape == (3, 16)
    assert np.all(np.isfinite(out))
    poked = s.copy()
    poked[3:] = 1e3
    assert np.array_equal(molgeom.projector_forward(hvis, poked, mask), out)
    concat = molgeom.projector_forward(hvis, s, mask, mode="concat")
    assert concat.shape == out.shape
    assert not np.allclose(concat, out)
    with pytest.raises(molgeom.DegenerateMaskError):
        molgeom.projector_forward(hvis, s, [-1e9] * 5)


def test_run_cli_exit_codes(tmp_path):
    code, out, _ = molgeom.run_cli(["pipeline", "--shapes-only", "--config", str(CONFIGS / "full_scale.json")])
    assert code == 0
    assert "256x4096" in out
    code, _, err = molgeom.run_cli(["tokenize", str(DATA / "cli_errors" / "mismatch.json"),
                                    "--out", str(tmp_path / "x")])
    assert code == 5
    assert err
    assert molgeom.run_cli([])[0] == 1
