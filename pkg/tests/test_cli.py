import json
import subprocess
import sys

import numpy as np
import pytest

from meshtopo.bpt import TokenSequence, write_token_records
from meshtopo.cli import main
from meshtopo.mdpo import ToyARModel, save_checkpoint
from meshtopo.mesh import (
    PointCloud,
    canonicalize,
    load_obj,
    meshes_equal,
    sample_surface,
    save_obj,
    save_xyz,
)
from meshtopo.preference import MaskVector, TrainingTriplet, write_training_triplets

from conftest import make_cylinder, make_quad_grid, make_tetrahedron


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def stdout_json(out):
    return json.loads(out)


@pytest.fixture()
def tetra_obj(tmp_path):
    path = tmp_path / "tetra.obj"
    save_obj(make_tetrahedron(), path)
    return path


@pytest.fixture()
def cloud_xyz(tmp_path):
    mesh = make_tetrahedron()
    cloud = sample_surface(mesh, 400, seed=5)
    path = tmp_path / "ref.xyz"
    save_xyz(cloud, path)
    return path


class TestTokenizeDetokenize:
    def test_round_trip_through_files(self, tmp_path, tetra_obj, capsys):
        tokens = tmp_path / "tok.jsonl"
        code, out, _ = run_cli(
            ["tokenize", "--mesh", str(tetra_obj), "--out", str(tokens)], capsys
        )
        assert code == 0
        doc = stdout_json(out)
        assert doc["id"] == "tetra"
        assert doc["faces"] == 4
        assert doc["tokens"] == 16
        assert doc["patches"] == 2
        assert doc["ratio_exact"] == "9/4"  # 36 coordinates over 16 tokens, reduced

        outdir = tmp_path / "rebuilt"
        code, out, _ = run_cli(
            ["detokenize", "--tokens", str(tokens), "--out", str(outdir)], capsys
        )
        assert code == 0
        rows = stdout_json(out)
        assert len(rows) == 1
        rebuilt = load_obj(rows[0]["file"])
        assert meshes_equal(rebuilt, canonicalize(make_tetrahedron()))

    def test_inline_tokens_without_out(self, tetra_obj, capsys):
        code, out, _ = run_cli(["tokenize", "--mesh", str(tetra_obj)], capsys)
        assert code == 0
        doc = stdout_json(out)
        assert len(doc["token_list"]) == doc["tokens"]

    def test_missing_file_exits_2(self, tmp_path, capsys):
        code, out, err = run_cli(
            ["tokenize", "--mesh", str(tmp_path / "absent.obj")], capsys
        )
        assert code == 2
        assert out == ""
        assert "error" in err

    def test_unknown_command_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_single_obj_output(self, tmp_path, tetra_obj, capsys):
        tokens = tmp_path / "tok.jsonl"
        run_cli(["tokenize", "--mesh", str(tetra_obj), "--out", str(tokens)], capsys)
        dest = tmp_path / "one.obj"
        code, out, _ = run_cli(
            ["detokenize", "--tokens", str(tokens), "--out", str(dest)], capsys
        )
        assert code == 0
        assert dest.exists()

    def test_unknown_id_exits_2(self, tmp_path, tetra_obj, capsys):
        tokens = tmp_path / "tok.jsonl"
        run_cli(["tokenize", "--mesh", str(tetra_obj), "--out", str(tokens)], capsys)
        code, _, err = run_cli(
            [
                "detokenize",
                "--tokens",
                str(tokens),
                "--id",
                "nope",
                "--out",
                str(tmp_path / "x.obj"),
            ],
            capsys,
        )
        assert code == 2
        assert "nope" in err


class TestEvaluateRank:
    def test_evaluate_two_meshes(self, tmp_path, tetra_obj, cloud_xyz, capsys):
        grid = tmp_path / "grid.obj"
        save_obj(make_quad_grid(2, 2), grid)
        report = tmp_path / "rep.jsonl"
        code, out, _ = run_cli(
            [
                "evaluate",
                "--mesh",
                str(tetra_obj),
                str(grid),
                "--cloud",
                str(cloud_xyz),
                "--samples",
                "400",
                "--seed",
                "0",
                "--out",
                str(report),
            ],
            capsys,
        )
        assert code == 0
        rows = stdout_json(out)
        assert [r["id"] for r in rows] == ["tetra", "grid"]
        for r in rows:
            assert 0.0 <= r["ber"] <= 1.0
            assert 0.0 <= r["ts"] <= 1.0
            assert r["hd"] >= 0.0
        assert len(report.read_text().splitlines()) == 2

    def test_threads_do_not_change_results(self, tmp_path, tetra_obj, cloud_xyz, capsys):
        grid = tmp_path / "grid.obj"
        save_obj(make_quad_grid(2, 2), grid)
        base = [
            "evaluate",
            "--mesh",
            str(tetra_obj),
            str(grid),
            "--cloud",
            str(cloud_xyz),
            "--samples",
            "300",
        ]
        _, out1, _ = run_cli(["--threads", "1"] + base, capsys)
        _, out2, _ = run_cli(["--threads", "4"] + base, capsys)
        assert out1 == out2

    def test_empty_cloud_exits_3(self, tmp_path, tetra_obj, capsys):
        empty = tmp_path / "empty.xyz"
        empty.write_text("")
        code, out, err = run_cli(
            ["evaluate", "--mesh", str(tetra_obj), "--cloud", str(empty)], capsys
        )
        assert code == 3
        assert out == ""
        assert "hd" in err

    def test_rank_reports(self, tmp_path, capsys):
        report = tmp_path / "rep.jsonl"
        rows = [
            {"id": "good", "ber": 0.0, "ts": 0.9, "hd": 0.1},
            {"id": "mid", "ber": 0.2, "ts": 0.5, "hd": 0.5},
            {"id": "bad", "ber": 0.5, "ts": 0.2, "hd": 1.0},
        ]
        report.write_text("".join(json.dumps(r) + "\n" for r in rows))
        out_file = tmp_path / "trips.jsonl"
        code, out, err = run_cli(
            [
                "rank",
                "--reports",
                str(report),
                "--cond",
                "scene",
                "--out",
                str(out_file),
            ],
            capsys,
        )
        assert code == 0
        assert "3 triplets from 3 pairs" in err
        doc = stdout_json(out)
        assert doc["triplets"] == 3
        assert doc["list"] == [["good", "bad"], ["good", "mid"], ["mid", "bad"]]
        lines = [json.loads(l) for l in out_file.read_text().splitlines()]
        assert lines[0] == {"cond": "scene", "winner": "good", "loser": "bad"}


class TestMask:
    def test_quad_grid_mask_is_all_ones(self, tmp_path, capsys):
        grid_obj = tmp_path / "grid.obj"
        save_obj(make_quad_grid(3, 3), grid_obj)
        tokens = tmp_path / "tok.jsonl"
        run_cli(["tokenize", "--mesh", str(grid_obj), "--out", str(tokens)], capsys)
        masks = tmp_path / "masks.jsonl"
        code, out, _ = run_cli(
            ["mask", "--tokens", str(tokens), "--out", str(masks)], capsys
        )
        assert code == 0
        rows = stdout_json(out)
        assert rows[0]["ones"] == rows[0]["length"]
        doc = json.loads(masks.read_text().splitlines()[0])
        assert len(doc["mask"]) == rows[0]["length"]


def synthetic_records(vocab, n, length, seed):
    # constant sequences: an easy next-token pattern the toy model can learn
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        value = int(rng.integers(1, vocab))
        seq = TokenSequence(
            tokens=[value] * length,
            patch_spans=((0, length),),
            face_spans=(),
            vocab_size=vocab,
        )
        records.append((f"seq{i}", seq))
    return records


class TestTrainGenerate:
    def test_pretrain_then_generate(self, tmp_path, capsys):
        corpus = tmp_path / "corpus.jsonl"
        write_token_records(synthetic_records(8, 4, 10, seed=0), corpus)
        ckpt = tmp_path / "model.json"
        log = tmp_path / "log.jsonl"
        code, out, _ = run_cli(
            [
                "train",
                "--mode",
                "pretrain",
                "--tokens",
                str(corpus),
                "--vocab",
                "8",
                "--embed-dim",
                "8",
                "--context",
                "16",
                "--cond-dim",
                "4",
                "--steps",
                "40",
                "--lr",
                "0.2",
                "--seed",
                "1",
                "--checkpoint",
                str(ckpt),
                "--log",
                str(log),
            ],
            capsys,
        )
        assert code == 0
        doc = stdout_json(out)
        assert doc["final_loss"] < doc["initial_loss"]
        lines = [json.loads(l) for l in log.read_text().splitlines()]
        assert len(lines) == 40
        assert set(lines[0]) == {"step", "loss", "margin"}
        assert lines[0]["margin"] is None

        code, out, _ = run_cli(
            [
                "generate",
                "--checkpoint",
                str(ckpt),
                "--max-tokens",
                "12",
                "--seed",
                "9",
            ],
            capsys,
        )
        assert code == 0
        gen = stdout_json(out)
        assert gen["count"] == 12
        assert all(0 <= t < 8 for t in gen["tokens"])

    def test_generate_requires_seed(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(
                [
                    "generate",
                    "--checkpoint",
                    str(tmp_path / "m.json"),
                    "--max-tokens",
                    "5",
                ]
            )
        assert exc.value.code == 2

    def test_pretrain_from_scratch_requires_seed(self, tmp_path, capsys):
        corpus = tmp_path / "corpus.jsonl"
        write_token_records(synthetic_records(8, 2, 6, seed=0), corpus)
        code, _, err = run_cli(
            [
                "train",
                "--mode",
                "pretrain",
                "--tokens",
                str(corpus),
                "--vocab",
                "8",
                "--steps",
                "1",
                "--lr",
                "0.1",
                "--checkpoint",
                str(tmp_path / "m.json"),
            ],
            capsys,
        )
        assert code == 2
        assert "--seed" in err

    def test_mdpo_raises_margin(self, tmp_path, capsys):
        ref = ToyARModel.init(6, embed_dim=8, context=16, cond_dim=4, seed=3, scale=0.3)
        ref_path = tmp_path / "ref.json"
        save_checkpoint(ref, ref_path)
        trips = [
            TrainingTriplet(
                cond="a",
                win_tokens=(1, 2, 3, 4),
                win_mask=MaskVector((1, 1, 1, 0)),
                lose_tokens=(4, 3, 2, 1),
                lose_mask=MaskVector((0, 1, 1, 1)),
            )
        ]
        trip_path = tmp_path / "trips.jsonl"
        write_training_triplets(trips, trip_path)
        ckpt = tmp_path / "policy.json"
        log = tmp_path / "log.jsonl"
        code, out, _ = run_cli(
            [
                "train",
                "--mode",
                "mdpo",
                "--triplets",
                str(trip_path),
                "--reference",
                str(ref_path),
                "--steps",
                "40",
                "--lr",
                "0.5",
                "--beta",
                "1.0",
                "--checkpoint",
                str(ckpt),
                "--log",
                str(log),
            ],
            capsys,
        )
        assert code == 0
        doc = stdout_json(out)
        assert doc["final_margin"] > 0
        assert doc["final_loss"] < doc["initial_loss"]
        lines = [json.loads(l) for l in log.read_text().splitlines()]
        assert lines[-1]["margin"] == doc["final_margin"]

    def test_train_missing_inputs_exit_2(self, tmp_path, capsys):
        code, _, err = run_cli(
            [
                "train",
                "--mode",
                "mdpo",
                "--steps",
                "1",
                "--lr",
                "0.1",
                "--checkpoint",
                str(tmp_path / "m.json"),
            ],
            capsys,
        )
        assert code == 2
        assert "mdpo" in err


class TestSeamPipeline:
    def test_encode_cut_flatten_distort(self, tmp_path, capsys):
        n_around, n_rows = 8, 3
        mesh = make_cylinder(n_around=n_around, n_rows=n_rows)
        mesh_path = tmp_path / "cyl.obj"
        save_obj(mesh, mesh_path)

        top = mesh.vertices[0]
        bottom = mesh.vertices[n_rows * n_around]
        seams_txt = tmp_path / "seams.txt"
        seams_txt.write_text(
            " ".join(repr(float(v)) for v in [*top, *bottom]) + "\n"
        )

        tokens = tmp_path / "seam_tokens.jsonl"
        code, out, _ = run_cli(
            [
                "seam",
                "encode",
                "--segments",
                str(seams_txt),
                "--mesh",
                str(mesh_path),
                "--out",
                str(tokens),
            ],
            capsys,
        )
        assert code == 0
        doc = stdout_json(out)
        assert doc["segments"] == 1
        assert doc["tokens"] == 6
        assert doc["ratio"] == pytest.approx(1 / mesh.vertex_count)
        assert doc["ratio_in_range"] is False

        decoded_txt = tmp_path / "decoded.txt"
        code, out, _ = run_cli(
            ["seam", "decode", "--tokens", str(tokens), "--out", str(decoded_txt)],
            capsys,
        )
        assert code == 0
        assert stdout_json(out)["segments"] == 1
        # decoded endpoints re-encode to the same tokens
        code, out, _ = run_cli(
            ["seam", "encode", "--segments", str(decoded_txt)], capsys
        )
        original = json.loads((tokens).read_text())["tokens"]
        assert stdout_json(out)["token_list"] == original

        cut_path = tmp_path / "cut.obj"
        code, out, _ = run_cli(
            [
                "seam",
                "cut",
                "--mesh",
                str(mesh_path),
                "--segments",
                str(seams_txt),
                "--out",
                str(cut_path),
            ],
            capsys,
        )
        assert code == 0
        doc = stdout_json(out)
        assert doc["cut_edges"] == n_rows
        assert doc["faces"] == mesh.face_count

        code, out, _ = run_cli(
            [
                "seam",
                "flatten",
                "--mesh",
                str(cut_path),
                "--out-prefix",
                str(tmp_path / "chart"),
            ],
            capsys,
        )
        assert code == 0
        charts = stdout_json(out)["charts"]
        assert len(charts) == 1
        assert charts[0]["is_disk"] is True
        assert charts[0]["flipped"] == 0
        chart_file = charts[0]["file"]

        code, out, _ = run_cli(["seam", "distort", "--mesh", chart_file], capsys)
        assert code == 0
        doc = stdout_json(out)
        assert doc["infinite"] == 0
        assert doc["mean"] is not None and doc["mean"] >= 0.0

    def test_flatten_reports_non_disk(self, tmp_path, capsys):
        path = tmp_path / "tetra.obj"
        save_obj(make_tetrahedron(), path)
        code, out, err = run_cli(
            [
                "seam",
                "flatten",
                "--mesh",
                str(path),
                "--out-prefix",
                str(tmp_path / "chart"),
            ],
            capsys,
        )
        assert code == 0
        charts = stdout_json(out)["charts"]
        assert charts[0]["is_disk"] is False
        assert charts[0]["file"] is None
        assert "not a disk" in err

    def test_distort_requires_uv(self, tmp_path, capsys):
        path = tmp_path / "plain.obj"
        save_obj(make_tetrahedron(), path)
        code, _, err = run_cli(["seam", "distort", "--mesh", str(path)], capsys)
        assert code == 2
        assert "uv" in err


class TestSubprocessEntry:
    def test_module_invocation(self, tmp_path):
        mesh_path = tmp_path / "tetra.obj"
        save_obj(make_tetrahedron(), mesh_path)
        proc = subprocess.run(
            [sys.executable, "-m", "meshtopo.cli", "tokenize", "--mesh", str(mesh_path)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        doc = json.loads(proc.stdout)
        assert doc["tokens"] == 16

    def test_missing_file_returncode(self, tmp_path):
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "meshtopo.cli",
                "tokenize",
                "--mesh",
                str(tmp_path / "no.obj"),
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 2
        assert proc.stdout == ""
        assert "error" in proc.stderr
