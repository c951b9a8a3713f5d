import numpy as np
import pytest

from mucos.kg import DatasetSplits, Triple, generate_synthetic
from mucos.model import EncoderModel
from mucos.pipeline import ConfigError, TrainConfig, load_config, parse_config_text
from mucos.sequence import TokenVocab
from mucos.train import TrainingError, train

FAST = dict(task="tail", n=1, k=1, max_len=32, lr=1e-2, dim=8, ff_dim=8)


class TestDefaults:
    def test_reference_hyperparameters(self):
        cfg = TrainConfig()
        assert (cfg.lr, cfg.batch_size, cfg.epochs, cfg.max_len, cfg.n, cfg.k) == (5e-5, 16, 50, 128, 15, 10)
        assert cfg.weight_decay == 0.01 and cfg.mode == "sampled"

    def test_text_round_trip(self):
        cfg = TrainConfig(n=None, encoder="attn", filtered=True)
        assert load_config(**parse_config_text(cfg.to_text())) == cfg

    @pytest.mark.parametrize(
        "text",
        ["bogus=1\n", "lr=abc\n", "task=head\n", "n=0\n", "no equals sign\n", "filtered=maybe\n"],
    )
    def test_bad_config_text(self, text):
        with pytest.raises(ConfigError):
            load_config(**parse_config_text(text))

    def test_file_then_overrides(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nlr = 0.001\nn=inf\nepochs=3\n")
        cfg = load_config(path, epochs=7)
        assert (cfg.lr, cfg.n, cfg.epochs) == (0.001, None, 7)
        with pytest.raises(ConfigError):
            load_config(path, nonsense=1)


class TestTrain:
    @pytest.mark.parametrize("encoder", ["mean", "attn"])
    def test_same_seed_same_losses(self, g0, encoder):
        graph, splits = g0
        cfg = TrainConfig(epochs=4, encoder=encoder, **FAST)
        a = train(graph, splits, cfg)
        b = train(graph, splits, cfg)
        assert a[1].epoch_losses == b[1].epoch_losses
        for name in a[0].params:
            np.testing.assert_array_equal(a[0].params[name], b[0].params[name])

    def test_different_seed_differs(self, g0):
        graph, splits = g0
        cfg = TrainConfig(epochs=2, **FAST)
        assert train(graph, splits, cfg)[1].epoch_losses != train(graph, splits, cfg.replace(seed=1))[1].epoch_losses

    @pytest.mark.parametrize("task", ["relation", "tail"])
    def test_loss_drops_in_first_five_epochs(self, g0, task):
        graph, splits = g0
        report = train(graph, splits, TrainConfig(epochs=5, **(FAST | {"task": task})))[1]
        assert len(report.epoch_losses) == 5
        assert report.epoch_losses[4] < report.epoch_losses[0]
        assert all(np.isfinite(report.epoch_losses))

    def test_leaked_evaluation_triple_rejected(self, g0):
        graph, splits = g0
        leaky = DatasetSplits(splits.train, [splits.train[0]], [], splits.drug_target_relation_ids)
        with pytest.raises(TrainingError, match="evaluation triple"):
            train(graph, leaky, TrainConfig(epochs=1, **FAST))

    def test_empty_drug_target_training_set(self, g0):
        graph, splits = g0
        with pytest.raises(TrainingError):
            train(graph, splits, TrainConfig(epochs=1, subtask="drug-target", **FAST))

    def test_checkpoints_written_and_reloadable(self, tmp_path):
        graph, splits = generate_synthetic(20, 3, 200, seed=2)
        cfg = TrainConfig(epochs=3, **FAST)
        model, report = train(graph, splits, cfg, out_dir=tmp_path)
        assert (tmp_path / "last.npz").exists() and (tmp_path / "best.npz").exists()
        assert len(report.valid_mrr) == 3
        assert report.best_valid_mrr == max(report.valid_mrr)
        last, extra = EncoderModel.load(tmp_path / "last.npz", len(TokenVocab.for_graph(graph)), graph.num_entities)
        assert extra["epoch"] == 3 and extra["config"]["lr"] == cfg.lr
        for name in model.params:
            np.testing.assert_array_equal(last.params[name], model.params[name])
        best, extra = EncoderModel.load(tmp_path / "best.npz", len(TokenVocab.for_graph(graph)), graph.num_entities)
        assert extra["epoch"] == report.best_epoch

    def test_drug_target_training_uses_only_marked_relations(self):
        graph, splits = generate_synthetic(20, 4, 200, seed=2, drug_target_fraction=0.5)
        report = train(graph, splits, TrainConfig(epochs=1, subtask="drug-target", **FAST))[1]
        assert report.examples == len(splits.drug_target("train")) < len(splits.train)
