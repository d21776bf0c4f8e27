"""Tensor exchange contracts: bitwise round trips, strict format rejection,
manifest integrity, and interop with numpy's own NPY writer/reader."""

import json
import struct

import numpy as np
import pytest

from grouplens import mapio
from grouplens.errors import FormatError, IntegrityError, NumericError
from grouplens.mapio import (
    MapStack, RunManifest, read_manifest, read_map, read_npy, write_manifest,
    write_map, write_npy,
)


def make_stack(data, **kw):
    args = dict(kind="attn_out", block_index=0, model_id="m", stimulus_id="s")
    args.update(kw)
    return MapStack(data=np.asarray(data, dtype=np.float32), **args)


class TestNpyFormat:
    def test_round_trip_bitwise(self, tmp_path):
        data = np.random.default_rng(0).random((2, 2, 1)).astype(np.float32)
        write_map(make_stack(data), tmp_path / "m.npy")
        back = read_map(tmp_path / "m.npy")
        assert np.array_equal(back.data, data)
        assert back.data.dtype == np.float32
        assert back.kind == "attn_out" and back.stimulus_id == "s"

    def test_missing_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.npy"
        path.write_bytes(b"NOTNPY" + b"\x00" * 64)
        with pytest.raises(FormatError):
            read_npy(path)

    def test_nan_write_rejected(self, tmp_path):
        data = np.ones((2, 2, 1), dtype=np.float32)
        data[0, 0, 0] = np.nan
        with pytest.raises(NumericError):
            write_npy(tmp_path / "m.npy", data)

    def test_inf_read_rejected(self, tmp_path):
        data = np.ones((2, 2, 1), dtype=np.float32)
        data[0, 0, 0] = np.inf
        np.save(tmp_path / "m.npy", data)  # bypasses the write guard
        with pytest.raises(NumericError):
            read_map(tmp_path / "m.npy")

    def test_numpy_can_read_our_files(self, tmp_path):
        data = np.random.default_rng(1).random((3, 4, 5)).astype(np.float32)
        write_npy(tmp_path / "m.npy", data)
        assert np.array_equal(np.load(tmp_path / "m.npy"), data)

    def test_we_can_read_numpy_files(self, tmp_path):
        data = np.random.default_rng(2).random((3, 4, 5)).astype(np.float32)
        np.save(tmp_path / "m.npy", data)
        assert np.array_equal(read_npy(tmp_path / "m.npy"), data)

    @pytest.mark.parametrize("dtype", [np.float64, np.int32, ">f4"])
    def test_other_dtypes_rejected_not_converted(self, tmp_path, dtype):
        np.save(tmp_path / "m.npy", np.ones((2, 2), dtype=dtype))
        with pytest.raises(FormatError):
            read_npy(tmp_path / "m.npy")

    def test_fortran_order_rejected(self, tmp_path):
        np.save(tmp_path / "m.npy",
                np.asfortranarray(np.random.rand(3, 4).astype(np.float32)))
        with pytest.raises(FormatError):
            read_npy(tmp_path / "m.npy")

    def test_version_2_rejected(self, tmp_path):
        header = "{'descr': '<f4', 'fortran_order': False, 'shape': (1,), }"
        header = header.ljust(118) + "\n"
        blob = (b"\x93NUMPY\x02\x00" + struct.pack("<I", len(header))
                + header.encode() + b"\x00\x00\x00\x00")
        (tmp_path / "m.npy").write_bytes(blob)
        with pytest.raises(FormatError):
            read_npy(tmp_path / "m.npy")

    def test_truncated_data_rejected(self, tmp_path):
        write_npy(tmp_path / "m.npy", np.ones((4, 4), dtype=np.float32))
        blob = (tmp_path / "m.npy").read_bytes()
        (tmp_path / "m.npy").write_bytes(blob[:-8])
        with pytest.raises(FormatError):
            read_npy(tmp_path / "m.npy")

    def test_read_map_requires_rank_3(self, tmp_path):
        write_npy(tmp_path / "m.npy", np.ones((4, 4), dtype=np.float32))
        with pytest.raises(FormatError):
            read_map(tmp_path / "m.npy")

    def test_header_is_64_byte_aligned(self, tmp_path):
        write_npy(tmp_path / "m.npy", np.ones((7, 3, 2), dtype=np.float32))
        blob = (tmp_path / "m.npy").read_bytes()
        hlen = struct.unpack("<H", blob[8:10])[0]
        assert (10 + hlen) % 64 == 0


class TestManifests:
    def build(self, tmp_path, n_stimuli=3, blocks=2, kinds=("attn_out", "feat_resid")):
        stimuli = []
        for i in range(n_stimuli):
            maps = {}
            for b in range(blocks):
                for kind in kinds:
                    stack = make_stack(np.ones((2, 2, 3), dtype=np.float32),
                                       kind=kind, block_index=b,
                                       stimulus_id=f"s{i}")
                    path = mapio.map_path(tmp_path, "m", f"s{i}", b, kind)
                    write_map(stack, path)
                    maps[f"block{b}_{kind}"] = str(path.relative_to(tmp_path))
            stimuli.append({"stimulus_id": f"s{i}", "maps": maps})
        manifest = RunManifest(model_id="m", num_blocks=blocks,
                               grids=[[2, 2]] * blocks, kinds=list(kinds),
                               stimuli=stimuli)
        write_manifest(manifest, tmp_path / "run_manifest.json")
        return manifest

    def test_round_trip_and_validation(self, tmp_path):
        self.build(tmp_path)
        back = read_manifest(tmp_path / "run_manifest.json")
        assert back.model_id == "m" and back.num_blocks == 2
        assert len(back.stimuli) == 3
        assert back.map_file("s1", 1, "attn_out").endswith("block1_attn_out.npy")

    def test_dangling_path_lists_offender(self, tmp_path):
        self.build(tmp_path)
        victim = tmp_path / "m" / "s1" / "block0_attn_out.npy"
        victim.unlink()
        with pytest.raises(IntegrityError) as err:
            read_manifest(tmp_path / "run_manifest.json")
        assert "block0_attn_out.npy" in str(err.value)

    def test_empty_stimuli_is_valid(self, tmp_path):
        manifest = RunManifest(model_id="m", num_blocks=1, grids=[[2, 2]],
                               kinds=["attn_out"], stimuli=[])
        write_manifest(manifest, tmp_path / "run_manifest.json")
        back = read_manifest(tmp_path / "run_manifest.json")
        assert back.stimuli == []

    def test_reference_count(self, tmp_path):
        self.build(tmp_path, n_stimuli=4, blocks=3)
        back = read_manifest(tmp_path / "run_manifest.json")
        n_paths = sum(len(rec["maps"]) for rec in back.stimuli)
        assert n_paths == 4 * 3 * 2


class TestTensorSets:
    def test_round_trip(self, tmp_path):
        tensors = {
            "a.weight": np.random.default_rng(0).random((3, 4)).astype(np.float32),
            "b": np.arange(5, dtype=np.float32),
        }
        index = mapio.save_tensors(tensors, tmp_path / "w")
        back = mapio.load_tensors(index)
        assert set(back) == set(tensors)
        for name in tensors:
            assert np.array_equal(back[name], tensors[name])

    def test_shape_mismatch_is_integrity_error(self, tmp_path):
        index = mapio.save_tensors({"a": np.ones((2, 2), dtype=np.float32)},
                                   tmp_path / "w")
        doc = json.loads(index.read_text())
        doc["a"]["shape"] = [4, 4]
        index.write_text(json.dumps(doc))
        with pytest.raises(IntegrityError):
            mapio.load_tensors(index)
