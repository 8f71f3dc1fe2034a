"""Flat key=value experiment configuration with a typed schema.

One file drives dataset generation, training, evaluation and benchmarks, so a
run is fully described by (config, seeds).  Unknown keys are rejected to catch
typos; every key has a documented default (see README).
"""

from dataclasses import dataclass, field, fields

from .beamforming import BfConfig
from .channel import ChannelConfig, dbm_to_watts
from .positioning import PolicyConfig
from .solvers import WmmseConfig
from .training import TrainConfig

ALL_METHODS = ("proposed", "random+wmmse", "strongest+wmmse", "strongest+zf",
               "oracle")


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


@dataclass
class ExperimentConfig:
    # channel / grid
    wavelength: float = 0.06
    side: float = 0.12
    points_per_side: int = 7
    paths: int = 16
    ref_loss_db: float = 34.5
    path_loss_exp: float = 3.67
    user_dist_min: float = 100.0
    user_dist_max: float = 200.0
    noise_dbm: float = -100.0
    users: int = 4
    d_min: float = 0.03
    seed: int = 1
    count: int = 1000
    # problem
    m: int = 6
    p_max_dbm: list[float] = field(default_factory=lambda: [20.0])
    # networks
    embed_dim: int = 128
    ctx_dim: int = 256
    heads: int = 8
    enc_layers: int = 3
    clip: float = 8.0
    bf_dim: int = 64
    bf_layers: int = 3
    # training
    epochs: int = 100
    steps_per_epoch: int = 50
    batch_size: int = 1024
    lr: float = 1e-4
    baseline: str = "none"
    eval_every: int = 50
    grad_clip: float = 10.0
    train_p_max_dbm: float = 20.0
    # harness
    methods: list[str] = field(default_factory=lambda: list(ALL_METHODS[:4]))
    m_list: list[int] = field(default_factory=list)  # empty -> [m]
    points_per_side_list: list[int] = field(default_factory=list)
    oracle_budget: int = 200_000
    timing_samples: int = 100
    best_of: int = 0
    wmmse_max_iter: int = 200
    wmmse_rate_tol: float = 1e-6
    wmmse_mu_tol: float = 1e-10

    def __post_init__(self):
        for method in self.methods:
            if method not in ALL_METHODS:
                raise ValueError(f"unknown method '{method}'")
        if not self.methods:
            raise ValueError("at least one method is required")

    def channel_config(self, points_per_side: int | None = None) -> ChannelConfig:
        return ChannelConfig(
            wavelength=self.wavelength, side=self.side,
            points_per_side=points_per_side or self.points_per_side,
            paths=self.paths, ref_loss_db=self.ref_loss_db,
            path_loss_exp=self.path_loss_exp,
            d_range=(self.user_dist_min, self.user_dist_max),
            noise_dbm=self.noise_dbm, users=self.users, seed=self.seed,
            d_min=self.d_min)

    def policy_config(self) -> PolicyConfig:
        return PolicyConfig(embed_dim=self.embed_dim, ctx_dim=self.ctx_dim,
                            heads=self.heads, enc_layers=self.enc_layers,
                            clip=self.clip)

    def bf_config(self) -> BfConfig:
        return BfConfig(dim=self.bf_dim, layers=self.bf_layers)

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, steps_per_epoch=self.steps_per_epoch,
                           batch_size=self.batch_size, lr=self.lr,
                           baseline=self.baseline,
                           p_max_w=dbm_to_watts(self.train_p_max_dbm), m=self.m,
                           seed=self.seed, eval_every=self.eval_every,
                           grad_clip=self.grad_clip)

    def wmmse_config(self) -> WmmseConfig:
        return WmmseConfig(max_iter=self.wmmse_max_iter,
                           rate_tol=self.wmmse_rate_tol, mu_tol=self.wmmse_mu_tol)

    def sweep_m(self) -> list[int]:
        return self.m_list or [self.m]

    def sweep_points_per_side(self) -> list[int]:
        return self.points_per_side_list or [self.points_per_side]


_LIST_PARSERS = {"p_max_dbm": _float_list, "methods": _str_list,
                 "m_list": _int_list, "points_per_side_list": _int_list}


def _schema() -> dict:
    out = {}
    for f in fields(ExperimentConfig):
        if f.name in _LIST_PARSERS:
            out[f.name] = _LIST_PARSERS[f.name]
        elif f.type in (int, "int"):
            out[f.name] = int
        elif f.type in (float, "float"):
            out[f.name] = float
        else:
            out[f.name] = str
    return out


def parse_config_text(text: str, overrides: dict | None = None) -> ExperimentConfig:
    schema = _schema()
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in schema:
            raise ValueError(f"config line {lineno}: unknown key '{key}'")
        try:
            values[key] = schema[key](val)
        except ValueError as exc:
            raise ValueError(f"config line {lineno}: bad value for '{key}'") from exc
    if overrides:
        values.update(overrides)
    return ExperimentConfig(**values)


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig(**(overrides or {}))
    with open(path) as fh:
        return parse_config_text(fh.read(), overrides)


def config_summary(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        val = getattr(cfg, f.name)
        if isinstance(val, list):
            val = ",".join(str(v) for v in val)
        lines.append(f"{f.name} = {val}")
    return "\n".join(lines) + "\n"
