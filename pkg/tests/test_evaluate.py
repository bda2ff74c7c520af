import json

import numpy as np
import pytest

from chaoscrack import evaluate, synthdigits
from chaoscrack.checkpoint import file_digest
from chaoscrack.errors import CheckpointError


@pytest.fixture(scope="module")
def digits():
    train_x, train_y = synthdigits.generate_arrays(3000, seed=1)
    test_x, test_y = synthdigits.generate_arrays(500, seed=2)
    return train_x, train_y, test_x, test_y


@pytest.fixture(scope="module")
def trained(digits):
    train_x, train_y, _, _ = digits
    cfg = evaluate.ClassifierConfig(epochs=3, seed=0)
    clf, history = evaluate.train_classifier(cfg, train_x, train_y)
    return clf, history


class TestClassifierConfig:
    def test_default_shape_arithmetic(self):
        cfg = evaluate.ClassifierConfig()
        assert cfg.pooled_side == 5
        assert cfg.flat_features == 400

    def test_side_32_shape_arithmetic(self):
        cfg = evaluate.ClassifierConfig(side=32)
        assert cfg.pooled_side == 6
        assert cfg.flat_features == 576

    def test_rejects_non_ten_way(self):
        with pytest.raises(ValueError):
            evaluate.ClassifierConfig(classes=12)

    def test_rejects_incompatible_side(self):
        with pytest.raises(ValueError):
            evaluate.ClassifierConfig(side=27)

    def test_dict_round_trip(self):
        cfg = evaluate.ClassifierConfig(seed=5, epochs=7)
        assert evaluate.ClassifierConfig.from_dict(cfg.to_dict()) == cfg


class TestTraining:
    def test_trained_beats_chance_by_wide_margin(self, trained, digits):
        _, _, test_x, test_y = digits
        clf, history = trained
        acc = evaluate.accuracy(clf, test_x, test_y)
        assert acc >= 0.9  # >= 9x the 10-class chance level
        assert history[-1] < history[0]

    def test_untrained_is_chance_level(self, digits):
        _, _, test_x, test_y = digits
        fresh = evaluate.DigitClassifier(evaluate.ClassifierConfig(seed=3))
        acc = evaluate.accuracy(fresh, test_x, test_y)
        assert 0.05 <= acc <= 0.20

    def test_same_seed_same_accuracy(self, digits):
        train_x, train_y, test_x, test_y = digits
        cfg = evaluate.ClassifierConfig(epochs=1, seed=4)
        accs = []
        for _ in range(2):
            clf, _ = evaluate.train_classifier(cfg, train_x[:600],
                                               train_y[:600])
            accs.append(evaluate.accuracy(clf, test_x, test_y))
        assert accs[0] == accs[1]

    def test_count_mismatch_rejected(self):
        cfg = evaluate.ClassifierConfig(epochs=1)
        with pytest.raises(ValueError, match="mismatch"):
            evaluate.train_classifier(
                cfg, np.zeros((4, 28, 28), dtype=np.uint8), np.zeros(3))


class TestScore:
    def test_self_consistency_on_plain(self, trained, digits):
        _, _, test_x, test_y = digits
        clf, _ = trained
        report = evaluate.score(clf, test_x, test_y, test_x)
        assert report.accuracy == evaluate.accuracy(clf, test_x, test_y)
        assert report.mse == 0.0
        assert np.isinf(report.psnr)
        assert report.samples == len(test_x)

    def test_noise_is_chance_level(self, trained):
        clf, _ = trained
        rng = np.random.default_rng(7)
        noise = rng.integers(0, 256, (500, 28, 28), dtype=np.uint8)
        labels = rng.integers(0, 10, 500)
        report = evaluate.score(clf, noise, labels, noise, corpus="noise")
        assert 0.05 <= report.accuracy <= 0.20

    def test_pure_function(self, trained, digits):
        _, _, test_x, test_y = digits
        clf, _ = trained
        a = evaluate.score(clf, test_x[:100], test_y[:100], test_x[:100])
        b = evaluate.score(clf, test_x[:100], test_y[:100], test_x[:100])
        assert a == b

    def test_native_side_resize_for_classification(self, trained):
        # 32x32 inputs are resized for the classifier but metrics stay
        # at 32x32
        clf, _ = trained
        rng = np.random.default_rng(8)
        imgs = rng.integers(0, 256, (10, 32, 32), dtype=np.uint8)
        report = evaluate.score(clf, imgs, np.zeros(10, dtype=int), imgs)
        assert report.mse == 0.0

    def test_count_mismatch(self, trained):
        clf, _ = trained
        with pytest.raises(ValueError, match="mismatch"):
            evaluate.score(clf, np.zeros((4, 28, 28), dtype=np.uint8),
                           np.zeros(5), np.zeros((4, 28, 28),
                                                 dtype=np.uint8))


class TestPixelMetrics:
    def test_identical_gives_zero_and_sentinel(self):
        imgs = np.full((3, 8, 8), 200, dtype=np.uint8)
        mse, psnr = evaluate.pixel_metrics(imgs, imgs.copy())
        assert mse == 0.0
        assert np.isinf(psnr)

    def test_known_offset(self):
        a = np.full((2, 4, 4), 128, dtype=np.uint8)
        b = np.zeros((2, 4, 4), dtype=np.uint8)
        mse, psnr = evaluate.pixel_metrics(a, b)
        expect = (128 / 255) ** 2
        assert mse == pytest.approx(expect)
        assert psnr == pytest.approx(-10 * np.log10(expect))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            evaluate.pixel_metrics(np.zeros((2, 8, 8), dtype=np.uint8),
                                   np.zeros((2, 9, 9), dtype=np.uint8))


class TestEvalReport:
    def report(self):
        return evaluate.EvalReport(
            corpus="decrypted-static", samples=200, accuracy=0.815,
            mse=0.0123, psnr=19.1, corpus_digest="f" * 64,
            checkpoint_digest="a" * 16)

    def test_text_rendering(self):
        text = self.report().to_text()
        assert "decrypted-static" in text
        assert "0.8150" in text
        assert "19.10 dB" in text
        assert "f" * 64 in text

    def test_json_line_parses(self):
        record = json.loads(self.report().to_json_line())
        assert record["accuracy"] == 0.815
        assert record["samples"] == 200

    def test_infinite_psnr_is_null_in_json(self):
        report = evaluate.EvalReport(corpus="plain", samples=1,
                                     accuracy=1.0, mse=0.0,
                                     psnr=float("inf"))
        record = json.loads(report.to_json_line())
        assert record["psnr"] is None
        assert "inf" in report.to_text()

    def test_invalid_fields(self):
        with pytest.raises(ValueError):
            evaluate.EvalReport(corpus="x", samples=0, accuracy=0.5,
                                mse=0.0, psnr=1.0)
        with pytest.raises(ValueError):
            evaluate.EvalReport(corpus="x", samples=1, accuracy=1.5,
                                mse=0.0, psnr=1.0)


class TestClassifierCheckpoint:
    def test_round_trip_preserves_predictions(self, trained, digits,
                                              tmp_path):
        _, _, test_x, _ = digits
        clf, _ = trained
        path = tmp_path / "clf.ckpt"
        evaluate.save_classifier(clf, path, meta={"epochs": 3})
        loaded, meta = evaluate.load_classifier(path)
        assert meta == {"epochs": 3}
        assert np.array_equal(evaluate.predict(clf, test_x[:50]),
                              evaluate.predict(loaded, test_x[:50]))

    def test_kind_guard(self, trained, tmp_path):
        from chaoscrack import attack
        clf, _ = trained
        path = tmp_path / "clf.ckpt"
        evaluate.save_classifier(clf, path)
        with pytest.raises(CheckpointError, match="kind"):
            attack.load_checkpoint(path)

    def test_file_digest_format(self, trained, tmp_path):
        clf, _ = trained
        path = tmp_path / "clf.ckpt"
        evaluate.save_classifier(clf, path)
        digest = file_digest(path)
        assert len(digest) == 16
        assert all(ch in "0123456789abcdef" for ch in digest)
