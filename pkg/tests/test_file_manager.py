import json

import numpy as np
import pytest

from services.file_manager import RunManifest, write_csv, write_dat, write_manifest, write_tables


class TestWriters:
    def test_csv_format(self, tmp_path):
        path = write_csv({"k": np.arange(3), "v": [0.1, 1.0 / 3.0, 2.0]}, tmp_path / "out" / "t.csv")
        assert path.read_text().splitlines() == ["k,v", "0,0.1", "1,0.333333333333", "2,2"]

    def test_dat_has_comment_header(self, tmp_path):
        path = write_dat({"x": [1.0, 2.0], "y": [3.0, 4.0]}, tmp_path / "t.dat")
        assert path.read_text().splitlines()[0] == "# x y"

    def test_ragged_columns(self, tmp_path):
        with pytest.raises(ValueError, match="lengths"):
            write_csv({"a": [1.0, 2.0], "b": [1.0]}, tmp_path / "t.csv")


class TestManifest:
    def test_lists_outputs(self, tmp_path):
        manifest = RunManifest(command="covariance", config_hash="abc", seed_base=4)
        write_tables({"covariance": {"lag": np.array([1.0, 10.0]), "ratio": np.array([0.5, 0.8])}}, tmp_path, manifest)
        write_manifest(manifest, tmp_path)
        data = json.loads((tmp_path / "manifest.json").read_text())
        assert data["outputs"] == ["covariance.csv", "covariance.dat"]
        assert data["finished"] >= data["started"]
