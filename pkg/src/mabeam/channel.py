"""Multipath field-response channels between a planar sampling grid and users.

Each user's channel to grid point n is a sum of L propagation paths: a
circularly-symmetric Gaussian gain times a unit-modulus phase that depends on
the point's position and the path's departure angles.  The receive side is a
single fixed antenna, so its per-path phase is absorbed into the gain without
changing the gain's distribution.
"""

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .rng import DOMAIN_SAMPLE, derived_rng


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass
class ChannelConfig:
    wavelength: float = 0.06  # meters
    side: float = 0.12  # transmit region side, meters
    points_per_side: int = 7
    paths: int = 16
    ref_loss_db: float = 34.5  # path loss at 1 m reference distance
    path_loss_exp: float = 3.67
    d_range: tuple[float, float] = (100.0, 200.0)  # user distance, meters
    noise_dbm: float = -100.0
    users: int = 4
    seed: int = 1
    d_min: float = 0.03  # antenna spacing constraint, meters

    def __post_init__(self):
        if self.points_per_side < 2:
            raise ValueError("points_per_side must be >= 2")
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.d_range[0] <= 0 or self.d_range[1] < self.d_range[0]:
            raise ValueError(f"bad distance range {self.d_range}")

    @property
    def n_points(self) -> int:
        return self.points_per_side ** 2

    @property
    def noise_watts(self) -> float:
        return dbm_to_watts(self.noise_dbm)


@dataclass
class SamplingGrid:
    coords: np.ndarray  # (N, 2) meters
    d_min: float
    _pair_ok: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def side(self) -> float:
        return float(self.coords.max())

    def pair_ok(self) -> np.ndarray:
        """(N, N) bool: True where two points may be selected together."""
        if self._pair_ok is None:
            diff = self.coords[:, None, :] - self.coords[None, :, :]
            self._pair_ok = (diff * diff).sum(-1) >= self.d_min ** 2 - 1e-15
        return self._pair_ok


def build_grid(cfg: ChannelConfig) -> SamplingGrid:
    """Uniform square grid with one corner at the origin."""
    pps = cfg.points_per_side
    spacing = cfg.side / (pps - 1)
    axis = np.arange(pps) * spacing
    xs, ys = np.meshgrid(axis, axis, indexing="ij")
    coords = np.stack([xs.ravel(), ys.ravel()], axis=1)
    return SamplingGrid(coords=coords, d_min=cfg.d_min)


@dataclass
class PathParams:
    theta: np.ndarray  # (K, L) elevation departure angles, radians
    phi: np.ndarray  # (K, L) azimuth departure angles, radians
    gains: np.ndarray  # (K, L) complex path gains
    dist: np.ndarray  # (K,) user distances, meters


def sample_aods(rng: np.random.Generator, users: int, paths: int):
    """Elevation with density cos(theta)/2 (inverse CDF), azimuth uniform."""
    theta = np.arcsin(2.0 * rng.random((users, paths)) - 1.0)
    phi = rng.uniform(-np.pi / 2, np.pi / 2, size=(users, paths))
    return theta, phi


def path_gain_variance(dist, ref_loss_db: float, path_loss_exp: float):
    return 10.0 ** (-ref_loss_db / 10.0) * np.asarray(dist, float) ** (-path_loss_exp)


def sample_path_gains(rng: np.random.Generator, dist: float, paths: int,
                      ref_loss_db: float, path_loss_exp: float) -> np.ndarray:
    """L i.i.d. circularly-symmetric complex Gaussian gains for one user."""
    if dist <= 0:
        raise ValueError("distance must be positive")
    var = path_gain_variance(dist, ref_loss_db, path_loss_exp)
    std = math.sqrt(var / 2.0)
    return std * (rng.standard_normal(paths) + 1j * rng.standard_normal(paths))


def steering_phase(coords, theta, phi, wavelength: float) -> np.ndarray:
    """Unit-modulus phase exp(j*2*pi/lambda*rho) with rho = x cos(t) sin(p) + y sin(t).

    coords (..., 2), theta/phi broadcastable against coords[..., 0].
    """
    coords = np.asarray(coords, dtype=np.float64)
    rho = coords[..., 0] * np.cos(theta) * np.sin(phi) + coords[..., 1] * np.sin(theta)
    return np.exp(1j * (2.0 * np.pi / wavelength) * rho)


def build_channel(grid: SamplingGrid, paths: PathParams, wavelength: float) -> np.ndarray:
    """(N, K) complex channel: per-entry sum over paths of gain * phase."""
    coords = grid.coords[:, None, None, :]  # (N, 1, 1, 2)
    phase = steering_phase(coords, paths.theta[None], paths.phi[None], wavelength)
    return np.einsum("kl,nkl->nk", paths.gains, phase)


@dataclass
class ChannelDataset:
    grid: SamplingGrid
    h: np.ndarray  # (count, N, K) complex
    noise_w: np.ndarray  # (count, K) watts

    def __len__(self) -> int:
        return self.h.shape[0]

    @property
    def users(self) -> int:
        return self.h.shape[2]


def sample_paths(cfg: ChannelConfig, rng: np.random.Generator) -> PathParams:
    dist = rng.uniform(cfg.d_range[0], cfg.d_range[1], size=cfg.users)
    theta, phi = sample_aods(rng, cfg.users, cfg.paths)
    gains = np.stack([
        sample_path_gains(rng, dist[k], cfg.paths, cfg.ref_loss_db, cfg.path_loss_exp)
        for k in range(cfg.users)
    ])
    return PathParams(theta=theta, phi=phi, gains=gains, dist=dist)


def generate_dataset(cfg: ChannelConfig, count: int) -> ChannelDataset:
    """count independent realizations; sample i depends only on (seed, i)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    grid = build_grid(cfg)
    h = np.empty((count, grid.n, cfg.users), dtype=np.complex128)
    for i in range(count):
        rng = derived_rng(cfg.seed, DOMAIN_SAMPLE, i)
        h[i] = build_channel(grid, sample_paths(cfg, rng), cfg.wavelength)
    noise = np.full((count, cfg.users), cfg.noise_watts)
    return ChannelDataset(grid=grid, h=h, noise_w=noise)


# ---------------------------------------------------------------------------
# Dataset file format (little-endian):
#   magic "MACH", u32 version=1, u32 N, u32 K, u32 count, u32 points_per_side,
#   2N float64 grid coordinates (x, y pairs),
#   per sample: 2*N*K float64 channel entries (re, im interleaved, row-major
#   n-then-k), then K float64 noise powers in watts.
# ---------------------------------------------------------------------------

_MAGIC = b"MACH"


def save_dataset(ds: ChannelDataset, path) -> None:
    count, n, k = ds.h.shape
    pps = int(round(math.sqrt(n)))
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIII", 1, n, k, count, pps))
        fh.write(ds.grid.coords.astype("<f8").tobytes())
        for i in range(count):
            inter = np.empty((n, k, 2), dtype="<f8")
            inter[..., 0] = ds.h[i].real
            inter[..., 1] = ds.h[i].imag
            fh.write(inter.tobytes())
            fh.write(ds.noise_w[i].astype("<f8").tobytes())


def load_dataset(path, d_min: float = 0.03) -> ChannelDataset:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a channel dataset file")
        version, n, k, count, _pps = struct.unpack("<IIIII", fh.read(20))
        if version != 1:
            raise ValueError(f"{path}: unsupported dataset version {version}")
        coords = np.frombuffer(fh.read(16 * n), dtype="<f8").reshape(n, 2).copy()
        h = np.empty((count, n, k), dtype=np.complex128)
        noise = np.empty((count, k))
        for i in range(count):
            inter = np.frombuffer(fh.read(16 * n * k), dtype="<f8").reshape(n, k, 2)
            h[i] = inter[..., 0] + 1j * inter[..., 1]
            noise[i] = np.frombuffer(fh.read(8 * k), dtype="<f8")
    return ChannelDataset(grid=SamplingGrid(coords=coords, d_min=d_min), h=h, noise_w=noise)
