import pytest

from mabeam import config as cf


def test_defaults_match_reference_setup():
    cfg = cf.ExperimentConfig()
    assert cfg.points_per_side == 7  # 49 grid points
    assert cfg.m == 6
    assert cfg.users == 4
    assert cfg.embed_dim == 128
    assert cfg.ctx_dim == 256
    assert cfg.heads == 8
    assert cfg.clip == 8.0
    assert cfg.bf_dim == 64 and cfg.bf_layers == 3
    assert cfg.batch_size == 1024 and cfg.lr == 1e-4
    assert cfg.epochs == 100 and cfg.steps_per_epoch == 50


def test_parse_text_with_comments_and_lists():
    text = """
    # channel geometry
    points_per_side = 4
    users = 2
    p_max_dbm = 5, 10, 20
    methods = strongest+wmmse, random+wmmse
    m_list = 2,3
    lr = 3e-4
    """
    cfg = cf.parse_config_text(text)
    assert cfg.points_per_side == 4
    assert cfg.p_max_dbm == [5.0, 10.0, 20.0]
    assert cfg.methods == ["strongest+wmmse", "random+wmmse"]
    assert cfg.sweep_m() == [2, 3]
    assert cfg.lr == 3e-4


def test_parse_rejects_unknown_key():
    with pytest.raises(ValueError, match="unknown key"):
        cf.parse_config_text("granularity = 3\n")


def test_parse_rejects_bad_value():
    with pytest.raises(ValueError, match="bad value"):
        cf.parse_config_text("points_per_side = seven\n")


def test_parse_rejects_bad_method():
    with pytest.raises(ValueError, match="unknown method"):
        cf.parse_config_text("methods = proposed, fp-c\n")


def test_overrides_win():
    cfg = cf.parse_config_text("seed = 3\n", overrides={"seed": 9})
    assert cfg.seed == 9


def test_summary_round_trips():
    cfg = cf.ExperimentConfig(points_per_side=5, p_max_dbm=[5.0, 15.0],
                              methods=["strongest+zf"], seed=7)
    back = cf.parse_config_text(cf.config_summary(cfg))
    assert back == cfg


def test_sub_config_builders():
    cfg = cf.ExperimentConfig(points_per_side=4, users=2, train_p_max_dbm=20.0)
    ccfg = cfg.channel_config()
    assert ccfg.n_points == 16 and ccfg.users == 2
    assert cfg.policy_config().embed_dim == 128
    assert cfg.bf_config().dim == 64
    assert cfg.train_config().p_max_w == pytest.approx(0.1)
    assert cfg.wmmse_config().max_iter == 200
