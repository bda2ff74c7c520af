import json

import numpy as np
import pytest

from chaoscrack import cli, dataset, evaluate, synthdigits
from chaoscrack.cipher import STATIC_KEY, CipherKey, GrayImage, encrypt

STATIC_KEY_FLAG = "4,7,5,-10.058,0.368,37.368,35,3,28"


def run(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def idx_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("idx")
    synthdigits.generate(path, n_train=30, n_test=10, seed=1)
    return path


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory, idx_dir):
    out = tmp_path_factory.mktemp("corpus")
    code = cli.main([
        "gen-dataset", "--mnist-dir", str(idx_dir), "--out-dir", str(out),
        "--mode", "static", "--side", "32", "--seed", "5",
        "--limit-train", "24", "--limit-test", "8"])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def model_ckpt(tmp_path_factory, corpus_dir):
    path = tmp_path_factory.mktemp("ckpt") / "model.ckpt"
    code = cli.main([
        "train", "--corpus", str(corpus_dir), "--out-checkpoint",
        str(path), "--epochs", "2", "--batch", "8", "--seed", "3"])
    assert code == 0
    return path


@pytest.fixture(scope="module")
def classifier_ckpt(tmp_path_factory, idx_dir):
    path = tmp_path_factory.mktemp("clf") / "clf.ckpt"
    code = cli.main([
        "train-classifier", "--mnist-dir", str(idx_dir),
        "--out-checkpoint", str(path), "--epochs", "1", "--seed", "2"])
    assert code == 0
    return path


class TestKeyParsing:
    def test_full_nine_fields(self):
        key = cli.parse_key(STATIC_KEY_FLAG)
        assert key == STATIC_KEY

    def test_six_fields_use_default_system_parameters(self):
        key = cli.parse_key("1,2,3,0.5,-0.5,1.5")
        assert (key.a, key.b, key.c) == (35.0, 3.0, 28.0)
        assert (key.p, key.q, key.n) == (1, 2, 3)

    @pytest.mark.parametrize("bad", ["1,2,3", "1,2,3,4,5,6,7",
                                     "x,2,3,4,5,6", "1.5,2,3,4,5,6"])
    def test_bad_keys_rejected(self, bad):
        with pytest.raises(ValueError):
            cli.parse_key(bad)

    def test_key_record_line(self):
        line = ("index=3 replica=1 label=7 p=4 q=7 n=5 x0=-10.058 "
                "y0=0.368 z0=37.368 a=35.0 b=3.0 c=28.0")
        assert cli.parse_key_record(line) == STATIC_KEY

    def test_key_record_missing_field(self):
        with pytest.raises(ValueError, match="missing"):
            cli.parse_key_record("p=1 q=2")


class TestBoundsParsing:
    def test_default_style(self):
        bounds = cli.parse_bounds("1..9,1..9,1..8")
        assert bounds.p_range == (1, 9)
        assert bounds.n_range == (1, 8)

    @pytest.mark.parametrize("bad", ["1..9,1..9", "1-9,1-9,1-8",
                                     "a..9,1..9,1..8"])
    def test_bad_bounds(self, bad):
        with pytest.raises(ValueError):
            cli.parse_bounds(bad)


class TestSubseed:
    def test_deterministic_and_distinct(self):
        assert cli.subseed(7, "dataset") == cli.subseed(7, "dataset")
        assert cli.subseed(7, "dataset") != cli.subseed(7, "model")
        assert cli.subseed(7, "dataset") != cli.subseed(8, "dataset")
        assert 0 <= cli.subseed(0, "x") < 2 ** 63


class TestEncryptDecrypt:
    def test_round_trip(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        img = GrayImage(rng.integers(0, 256, (32, 32), dtype=np.uint8))
        plain_path = tmp_path / "plain.png"
        cipher_path = tmp_path / "cipher.png"
        back_path = tmp_path / "back.png"
        dataset.write_png(plain_path, img)

        code, out, err = run(capsys, "encrypt", "--in", str(plain_path),
                             "--out", str(cipher_path), "--key",
                             STATIC_KEY_FLAG)
        assert code == 0
        assert "runconfig:" in err
        code, _, _ = run(capsys, "decrypt", "--in", str(cipher_path),
                         "--out", str(back_path), "--key", STATIC_KEY_FLAG)
        assert code == 0
        assert dataset.read_png(back_path) == img
        assert dataset.read_png(cipher_path) != img

    def test_key_record_file(self, tmp_path, capsys):
        img = GrayImage(np.arange(256, dtype=np.uint8).reshape(16, 16))
        plain_path = tmp_path / "p.png"
        cipher_path = tmp_path / "c.png"
        back_path = tmp_path / "b.png"
        dataset.write_png(plain_path, img)
        record = tmp_path / "key.txt"
        record.write_text("p=2 q=3 n=4 x0=-10.058 y0=0.368 z0=37.368\n")

        assert run(capsys, "encrypt", "--in", str(plain_path), "--out",
                   str(cipher_path), "--key-record", str(record))[0] == 0
        assert run(capsys, "decrypt", "--in", str(cipher_path), "--out",
                   str(back_path), "--key-record", str(record))[0] == 0
        assert dataset.read_png(back_path) == img

    def test_missing_input_errors(self, tmp_path, capsys):
        code, _, err = run(capsys, "encrypt", "--in",
                           str(tmp_path / "nope.png"), "--out",
                           str(tmp_path / "o.png"))
        assert code == 1
        assert err.splitlines()[-1].startswith("ERROR: ")


class TestGenDataset:
    def test_counts_and_manifest(self, corpus_dir, capsys):
        manifest = dataset.load_manifest(corpus_dir)
        assert manifest.train_pairs == 24
        assert manifest.test_pairs == 8
        assert manifest.key_mode == "static"
        assert dataset.verify_pairs(corpus_dir, "train") == 24

    def test_static_with_replicas_contradiction(self, idx_dir, tmp_path,
                                                capsys):
        code, _, err = run(capsys, "gen-dataset", "--mnist-dir",
                           str(idx_dir), "--out-dir", str(tmp_path / "x"),
                           "--mode", "static", "--replicas", "4")
        assert code == 1
        assert "ERROR: config contradiction" in err

    def test_dynamic_replication(self, idx_dir, tmp_path, capsys):
        out = tmp_path / "dyn"
        code, stdout, _ = run(capsys, "gen-dataset", "--mnist-dir",
                              str(idx_dir), "--out-dir", str(out),
                              "--mode", "dynamic", "--replicas", "3",
                              "--limit-train", "5", "--limit-test", "2",
                              "--side", "16", "--seed", "1")
        assert code == 0
        assert "train: 15 pairs" in stdout
        assert "test: 6 pairs" in stdout
        assert "corpus digest:" in stdout

    def test_missing_idx_dir(self, tmp_path, capsys):
        code, _, err = run(capsys, "gen-dataset", "--mnist-dir",
                           str(tmp_path / "missing"), "--out-dir",
                           str(tmp_path / "o"))
        assert code == 1
        assert "ERROR:" in err


class TestTrain:
    def test_checkpoint_written_and_loadable(self, model_ckpt):
        from chaoscrack import attack
        model, meta = attack.load_checkpoint(model_ckpt)
        assert model.config.side == 32
        assert meta["epochs"] == 2
        assert "corpus_digest" in meta

    def test_deterministic_checkpoints(self, corpus_dir, tmp_path, capsys):
        digests = []
        for name in ("a.ckpt", "b.ckpt"):
            path = tmp_path / name
            code, stdout, _ = run(capsys, "train", "--corpus",
                                  str(corpus_dir), "--out-checkpoint",
                                  str(path), "--epochs", "1", "--batch",
                                  "8", "--seed", "11")
            assert code == 0
            digests.append(path.read_bytes()[-8:].hex())
            assert f"checkpoint digest: {digests[-1]}" in stdout
        assert digests[0] == digests[1]

    def test_scale_contradiction(self, corpus_dir, tmp_path, capsys):
        code, _, err = run(capsys, "train", "--corpus", str(corpus_dir),
                           "--out-checkpoint", str(tmp_path / "x.ckpt"),
                           "--scale", "full", "--epochs", "1")
        assert code == 1
        assert "ERROR: config contradiction" in err


class TestAttack:
    def test_learned_decryption_output(self, model_ckpt, corpus_dir,
                                       tmp_path, capsys):
        plain_path, cipher_path = dataset.pair_paths(corpus_dir, "test",
                                                     0, 0)
        out_path = tmp_path / "recovered.png"
        code, stdout, _ = run(capsys, "attack", "--checkpoint",
                              str(model_ckpt), "--in", str(cipher_path),
                              "--out", str(out_path))
        assert code == 0
        recovered = dataset.read_png(out_path)
        assert recovered.side == 32

    def test_wrong_side_input(self, model_ckpt, tmp_path, capsys):
        small = tmp_path / "small.png"
        dataset.write_png(small, GrayImage(np.zeros((16, 16),
                                                    dtype=np.uint8)))
        code, _, err = run(capsys, "attack", "--checkpoint",
                           str(model_ckpt), "--in", str(small), "--out",
                           str(tmp_path / "o.png"))
        assert code == 1
        assert "ERROR:" in err


class TestKeysearch:
    @pytest.fixture()
    def pairs_dir(self, tmp_path):
        key = CipherKey(p=3, q=5, n=2, x0=-10.058, y0=0.368, z0=37.368)
        rng = np.random.default_rng(6)
        for i in range(3):
            plain = GrayImage(rng.integers(0, 256, (16, 16),
                                           dtype=np.uint8))
            dataset.write_png(tmp_path / f"{i}_0_plain.png", plain)
            dataset.write_png(tmp_path / f"{i}_0_cipher.png",
                              encrypt(plain, key))
        return tmp_path

    def test_recovers_and_writes_record(self, pairs_dir, tmp_path, capsys):
        record_path = tmp_path / "found.txt"
        code, stdout, _ = run(capsys, "keysearch", "--pairs",
                              str(pairs_dir), "--bounds", "1..9,1..9,1..8",
                              "--out-record", str(record_path))
        assert code == 0
        assert "result: p=3 q=5 n=2" in stdout
        assert "keystream sha256:" in stdout
        record = record_path.read_text()
        assert "p=3 q=5 n=2" in record
        assert "keystream=" in record

    def test_none_result(self, tmp_path, capsys):
        rng = np.random.default_rng(7)
        for i in range(2):
            dataset.write_png(
                tmp_path / f"{i}_0_plain.png",
                GrayImage(rng.integers(0, 256, (16, 16), dtype=np.uint8)))
            dataset.write_png(
                tmp_path / f"{i}_0_cipher.png",
                GrayImage(rng.integers(0, 256, (16, 16), dtype=np.uint8)))
        code, stdout, _ = run(capsys, "keysearch", "--pairs", str(tmp_path))
        assert code == 0
        assert "result: none" in stdout

    def test_too_few_pairs(self, tmp_path, capsys):
        dataset.write_png(tmp_path / "0_0_plain.png",
                          GrayImage(np.zeros((8, 8), dtype=np.uint8)))
        code, _, err = run(capsys, "keysearch", "--pairs", str(tmp_path))
        assert code == 1
        assert "need >= 2" in err


class TestEval:
    def test_report_emitted(self, model_ckpt, classifier_ckpt, corpus_dir,
                            tmp_path, capsys):
        report_path = tmp_path / "report.jsonl"
        code, stdout, _ = run(capsys, "eval", "--checkpoint",
                              str(model_ckpt), "--corpus", str(corpus_dir),
                              "--classifier", str(classifier_ckpt),
                              "--report", str(report_path))
        assert code == 0
        assert "corpus:            plain" in stdout
        assert "decrypted-static" in stdout
        lines = report_path.read_text().splitlines()
        assert len(lines) == 2
        records = [json.loads(line) for line in lines]
        assert records[0]["corpus"] == "plain"
        assert records[0]["mse"] == 0.0
        assert records[1]["corpus"] == "decrypted-static"
        assert all(r["corpus_digest"] for r in records)
        assert all(r["checkpoint_digest"] for r in records)


class TestParser:
    def test_unknown_command_exits_nonzero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code != 0

    def test_missing_required_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["train", "--epochs", "1"])
        assert exc.value.code != 0
