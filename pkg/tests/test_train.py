import math

import numpy as np
import pytest

from deblur import checkpoint, dataset, train
from deblur.dataset import DatasetSpec
from deblur.train import RunConfig, TrainingError


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    dataset.make_dataset(dataset.PROCEDURAL, root / "train", DatasetSpec(size=16), 6, np.random.default_rng(0))
    dataset.make_dataset(dataset.PROCEDURAL, root / "val", DatasetSpec(size=16), 2, np.random.default_rng(1))
    return root


def tiny(data, out, **kw):
    base = dict(seed=3, train_dir=str(data / "train"), val_dir=str(data / "val"), out_dir=str(out),
                arch="deblurgan", base_channels=4, res_blocks=1, disc_widths=(4, 8), patch_size=16,
                batch_size=2, steps=4)
    base.update(kw)
    return RunConfig(**base)


def test_same_seed_same_bytes(data, tmp_path):
    a = train.train(tiny(data, tmp_path / "a"))
    b = train.train(tiny(data, tmp_path / "b"))
    assert a.read_bytes() == b.read_bytes()
    for name in ("val_report.tsv", "val_baseline.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    strip = lambda p: [l for l in p.read_text().splitlines() if not l.startswith("#")]
    assert strip(tmp_path / "a" / "train_log.tsv") == strip(tmp_path / "b" / "train_log.tsv")
    assert train.train(tiny(data, tmp_path / "c", seed=4)).read_bytes() != a.read_bytes()


def test_zero_objective_leaves_generator_unchanged(data, tmp_path):
    cfg = tiny(data, tmp_path, lambda_classical=0.0, adversarial_weight=0.0, steps=3)
    (b, s) = dataset.load_pairs(cfg.train_dir)[1:]
    trainer = train.Trainer(cfg, (b, s))
    before = {k: v.copy() for k, v in trainer.generator.state_dict().items()}
    d_before = {k: v.copy() for k, v in trainer.discriminator.state_dict().items()}
    for _ in range(3):
        trainer.train_step()
    after = trainer.generator.state_dict()
    for k in before:
        if "running" in k:
            continue  # batch-norm statistics move with the data, not the objective
        assert np.array_equal(before[k], after[k]), k
    assert any(not np.array_equal(d_before[k], v) for k, v in trainer.discriminator.state_dict().items())


def test_resume_matches_unbroken_run(data, tmp_path):
    full = train.train(tiny(data, tmp_path / "full", checkpoint_interval=2))
    mid = tmp_path / "full" / "ckpt_000002.dbgn"
    resumed = train.train(tiny(data, tmp_path / "resumed", resume=str(mid)))
    assert resumed.read_bytes() == full.read_bytes()


def test_resume_rejects_other_config(data, tmp_path):
    ck = train.train(tiny(data, tmp_path / "a", steps=1))
    with pytest.raises(TrainingError, match="different run configuration"):
        train.train(tiny(data, tmp_path / "b", lr=1e-3, resume=str(ck)))


def test_checkpoint_metadata(data, tmp_path):
    ck = train.train(tiny(data, tmp_path, steps=3))
    tensors, meta = checkpoint.load(ck)
    assert meta["step"] == 3 and meta["epoch"] == 1 and meta["adam_t"] == [3, 3]
    assert meta["config_hash"] == checkpoint.config_hash(meta["run_config"])
    assert {k.split("/")[0] for k in tensors} == {"g", "d", "opt_g", "opt_d"}
    model, gcfg = train.load_generator(ck)
    assert gcfg.arch == "deblurgan" and model.num_parameters() > 0


def test_non_finite_loss_names_parameter(data, tmp_path):
    cfg = tiny(data, tmp_path)
    trainer = train.Trainer(cfg, dataset.load_pairs(cfg.train_dir)[1:])
    trainer.g_params["tail.weight"].data[0, 0, 0, 0] = np.inf
    with pytest.raises(TrainingError, match="tail.weight"):
        trainer.train_step()


def test_edge_channel_trains(data, tmp_path):
    ck = train.train(tiny(data, tmp_path, use_edge_channel=True, steps=2))
    model, gcfg = train.load_generator(ck)
    assert gcfg.in_channels == 4
    rep = (tmp_path / "val_report.tsv").read_text()
    assert "mean_psnr" in rep


def test_batch_larger_than_data(data, tmp_path):
    with pytest.raises(TrainingError, match="batch_size"):
        train.Trainer(tiny(data, tmp_path, batch_size=10), dataset.load_pairs(data / "train")[1:])


def test_adam_matches_reference():
    from deblur.tensor import Tensor

    p = Tensor(np.array([1.0, -2.0]))
    opt = train.Adam({"p": p}, lr=0.1, beta1=0.5, beta2=0.9, eps=1e-8)
    g = np.array([0.3, -0.1])
    m = v = np.zeros(2)
    ref = np.array([1.0, -2.0])
    for t in range(1, 4):
        opt.step({"p": g * t})
        m = 0.5 * m + 0.5 * g * t
        v = 0.9 * v + 0.1 * (g * t) ** 2
        ref = ref - 0.1 * (m / (1 - 0.5**t)) / (np.sqrt(v / (1 - 0.9**t)) + 1e-8)
    np.testing.assert_allclose(p.data, ref, rtol=1e-6)


class TestConfigFile:
    def test_parse_and_resolve(self, tmp_path):
        (tmp_path / "run.cfg").write_text("# desk run\nseed = 7\ntrain_dir = data/train  # relative\n"
                                          "use_self_attention = yes\ndisc_widths = 8, 16\nlr = 1e-3\n")
        cfg = train.load_run_config(tmp_path / "run.cfg", {"steps": "12"})
        assert cfg.seed == 7 and cfg.use_self_attention and cfg.disc_widths == (8, 16)
        assert cfg.lr == 1e-3 and cfg.steps == 12
        assert cfg.train_dir == str((tmp_path / "data" / "train").resolve())

    @pytest.mark.parametrize("text,match", [
        ("steps = 3\n", "seed"),
        ("seed = 1\nbogus = 2\n", "unknown"),
        ("seed = 1\njust words\n", "key = value"),
        ("seed = 1\nuse_spectral_norm = maybe\n", "boolean"),
    ])
    def test_errors(self, tmp_path, text, match):
        (tmp_path / "run.cfg").write_text(text)
        with pytest.raises(ValueError, match=match):
            train.load_run_config(tmp_path / "run.cfg")

    def test_loss_weight_defaults(self):
        assert RunConfig(seed=0).loss_weights().lambda_classical == 100
        assert RunConfig(seed=0, classical_loss="perceptual").loss_weights().lambda_classical == 10
        assert math.isclose(RunConfig(seed=0, lambda_classical=5).loss_weights().lambda_classical, 5)
