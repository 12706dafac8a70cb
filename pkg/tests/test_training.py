import numpy as np
import pytest

from qot.autograd import ContractError, Var, no_grad
from qot.harness.config import PRESETS
from qot.harness.metrics import accuracy, confusion_matrix, format_confusion
from qot.harness.optim import SGD, Adam, make_optimizer
from qot.harness.synth import load_split, nearest_centroid_accuracy, synth_dataset
from qot.harness.train import TrainingError, evaluate, load_model, predict_logits, save_model, train
from qot.model import build_model
from qot.qnn.losses import orthogonal_loss

TINY = PRESETS["tiny"]


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    m = synth_dataset(root / "train", 7, 6, seed=0)
    return load_split(m)


@pytest.fixture(scope="module")
def balanced_test(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth100")
    train_m = synth_dataset(root / "train", 7, 100, seed=0)
    test_m = synth_dataset(root / "test", 7, 100, seed=1)
    return root, train_m, test_m


class TestOptim:
    def test_sgd_plain_step(self):
        p = Var(np.array([1.0, -2.0]), requires_grad=True)
        p.grad = np.array([0.5, 0.25])
        SGD({"p": p}, lr=1.0).step()
        np.testing.assert_array_equal(p.value, [0.5, -2.25])

    def test_sgd_zero_grad_is_noop(self):
        p = Var(np.array([1.0, 2.0]), requires_grad=True)
        p.grad = np.zeros(2)
        SGD({"p": p}, lr=0.3).step()
        np.testing.assert_array_equal(p.value, [1.0, 2.0])

    def test_sgd_momentum(self):
        p = Var(np.array([0.0]), requires_grad=True)
        opt = SGD({"p": p}, lr=0.1, momentum=0.9)
        for _ in range(2):
            p.grad = np.array([1.0])
            opt.step()
        # v1 = 1, v2 = 0.9 + 1
        assert p.value[0] == pytest.approx(-0.1 * (1 + 1.9))

    def test_adam_first_step_by_hand(self):
        g, lr, b1, b2, eps = 0.3, 0.01, 0.9, 0.999, 1e-8
        m = (1 - b1) * g
        v = (1 - b2) * g * g
        m_hat, v_hat = m / (1 - b1), v / (1 - b2)
        expected = 2.0 - lr * m_hat / (v_hat**0.5 + eps)
        p = Var(np.array([2.0]), requires_grad=True)
        p.grad = np.array([g])
        Adam({"p": p}, lr=lr).step()
        assert p.value[0] == pytest.approx(expected, abs=1e-15)
        assert p.value[0] == pytest.approx(2.0 - lr, abs=1e-7)

    def test_adam_second_step_by_hand(self):
        gs, lr, b1, b2, eps = (0.3, -0.1), 0.01, 0.9, 0.999, 1e-8
        x, m, v = 1.0, 0.0, 0.0
        p = Var(np.array([x]), requires_grad=True)
        opt = Adam({"p": p}, lr=lr)
        for t, g in enumerate(gs, 1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            x -= lr * (m / (1 - b1**t)) / ((v / (1 - b2**t)) ** 0.5 + eps)
            p.grad = np.array([g])
            opt.step()
        assert p.value[0] == pytest.approx(x, abs=1e-15)

    def test_shape_mismatch(self):
        p = Var(np.zeros(2), requires_grad=True)
        with pytest.raises(ContractError):
            SGD({"p": p}).step({"p": np.zeros(3)})

    def test_factory(self):
        p = {"p": Var(np.zeros(1), requires_grad=True)}
        assert isinstance(make_optimizer("adam", p, 1e-3), Adam)
        assert isinstance(make_optimizer("sgd", p, 1e-3), SGD)
        with pytest.raises(ValueError):
            make_optimizer("lbfgs", p, 1e-3)
        with pytest.raises(ValueError):
            SGD(p, lr=0.0)


class TestMetrics:
    def test_perfect_predictor(self):
        y = np.array([0, 1, 2, 2, 1])
        cm = confusion_matrix(y, y, 3)
        np.testing.assert_array_equal(cm, np.diag([1, 2, 2]))
        assert accuracy(cm) == 1.0

    def test_constant_predictor(self):
        y = np.array([0, 1, 2, 2, 1, 2])
        cm = confusion_matrix(y, np.full(6, 2), 3)
        assert np.count_nonzero(cm.sum(axis=0)) == 1
        assert accuracy(cm) == pytest.approx(3 / 6)

    def test_rows_are_true_labels(self):
        cm = confusion_matrix([0], [1], 2)
        assert cm[0, 1] == 1

    def test_out_of_range(self):
        with pytest.raises(ContractError):
            confusion_matrix([0, 3], [0, 0], 3)

    def test_entries_sum_to_size(self):
        rng = np.random.default_rng(0)
        y, p = rng.integers(0, 5, 40), rng.integers(0, 5, 40)
        cm = confusion_matrix(y, p, 5)
        assert cm.sum() == 40
        assert accuracy(cm) == pytest.approx(np.mean(y == p))

    def test_format(self):
        text = format_confusion(np.array([[1, 0], [2, 3]]))
        assert text.splitlines()[2] == "1\t2\t3"


class TestSynth:
    def test_counts(self, balanced_test):
        root, train_m, _ = balanced_test
        assert len(list((root / "train" / "images").iterdir())) == 700
        assert len(train_m.read_text().splitlines()) == 700

    def test_deterministic(self, tmp_path):
        a = synth_dataset(tmp_path / "a", 3, 4, seed=5)
        b = synth_dataset(tmp_path / "b", 3, 4, seed=5)
        assert a.read_text() == b.read_text()
        for line in a.read_text().splitlines():
            rel = line.split("\t")[0]
            assert (a.parent / rel).read_bytes() == (b.parent / rel).read_bytes()

    def test_image_format(self, small_data):
        x, y = small_data
        assert x.shape == (42, 56, 56, 1) and x.dtype == np.float32
        assert sorted(set(y.tolist())) == list(range(7))

    def test_nearest_centroid_separability(self, balanced_test):
        _, train_m, test_m = balanced_test
        acc = nearest_centroid_accuracy(*load_split(train_m), *load_split(test_m))
        assert acc >= 0.95

    def test_needs_two_classes(self, tmp_path):
        with pytest.raises(ValueError):
            synth_dataset(tmp_path, 1, 3)

    def test_empty_manifest(self, tmp_path):
        (tmp_path / "m.tsv").write_text("")
        with pytest.raises(ValueError, match="empty"):
            load_split(tmp_path / "m.tsv")


class TestTrain:
    def test_deterministic_metrics(self, small_data):
        x, y = small_data
        a = train(TINY, x, y, seed=3)
        b = train(TINY, x, y, seed=3)
        assert [r.line() for r in a.metrics] == [r.line() for r in b.metrics]
        assert len(a.metrics) == TINY.epochs_ortho + TINY.epochs_qvit

    def test_stage_selection(self, small_data):
        x, y = small_data
        res = train(TINY, x, y, seed=0, stage="ortho")
        assert {r.split for r in res.metrics} == {"ortho"}
        res = train(TINY, x, y, seed=0, stage="joint")
        assert {r.split for r in res.metrics} == {"joint"}
        with pytest.raises(ValueError):
            train(TINY, x, y, stage="warmup")

    def test_validation_rows(self, small_data):
        x, y = small_data
        res = train(TINY.with_overrides(epochs_ortho=1, epochs_qvit=1), x, y, val=(x, y))
        assert [r.split for r in res.metrics] == ["ortho", "train", "val"]

    def test_qvit_stage_freezes_feature_extractor(self, small_data):
        x, y = small_data
        model = build_model(TINY, seed=0)
        before = {k: v.value.copy() for k, v in [*model.backbone.named_parameters(), *model.head.named_parameters()]}
        train(TINY, x, y, stage="qvit", model=model)
        for k, v in [*model.backbone.named_parameters(), *model.head.named_parameters()]:
            np.testing.assert_array_equal(v.value, before[k])

    def test_large_lambda_lowers_ortho_term(self, small_data):
        x, y = small_data
        cfg = TINY.with_overrides(lam=100.0, epochs_ortho=3, dtype="float64")
        model = build_model(cfg, seed=1)
        xs = model.cast_input(x)

        def ortho():
            with no_grad():
                return orthogonal_loss(*model.decompose(xs).vectors).item()

        start = ortho()
        train(cfg, x, y, seed=1, stage="ortho", model=model)
        assert ortho() < start

    def test_nan_input_names_the_failure(self, small_data):
        x, y = small_data
        x = x.copy()
        x[0, 0, 0, 0] = np.nan
        with pytest.raises(TrainingError, match="non-finite loss"):
            train(TINY, x, y)

    def test_empty_input(self):
        with pytest.raises(ValueError):
            train(TINY, np.zeros((0, 56, 56, 1)), np.zeros(0, dtype=int))

    def test_checkpoint_preserves_logits(self, small_data, tmp_path):
        x, y = small_data
        res = train(TINY, x, y, seed=2)
        save_model(tmp_path / "m.qckpt", res.model, seed=2, steps=res.steps)
        loaded, header = load_model(tmp_path / "m.qckpt")
        assert header["steps"] == str(res.steps)
        assert loaded.cfg == res.model.cfg
        assert predict_logits(loaded, x).tobytes() == predict_logits(res.model, x).tobytes()

    def test_random_model_is_at_chance(self, balanced_test):
        _, _, test_m = balanced_test
        x, y = load_split(test_m)
        acc, cm = evaluate(build_model(TINY, seed=11), x, y)
        assert cm.sum() == 700
        assert abs(acc - 1 / 7) <= 0.05
