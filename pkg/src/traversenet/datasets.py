"""Synthetic manifolds with paired clean/noisy samples, plus file formats.

All generators draw from two independent Philox streams keyed by (seed, lane):
lane 0 for surface parameters, lane 1 for noise. Identical (generator, args,
seed) therefore reproduces bit-identical datasets, and the recipe is portable
to any environment with a Philox4x64 implementation.

The binary dataset format (little-endian) is:
    magic "MTDS", u32 version=1, u64 n, u32 D, u32 dHint, f64 sigma,
    n*D f64 clean row-major, n*D f64 noisy row-major.
"""
from __future__ import annotations

import csv
import functools
import os
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"MTDS"
FORMAT_VERSION = 1

_PARAM_LANE = 0
_NOISE_LANE = 1


@dataclass
class LabeledDataset:
    clean: np.ndarray
    noisy: np.ndarray
    sigma: float
    intrinsic_dim_hint: int
    name: str

    @property
    def n(self) -> int:
        return self.clean.shape[0]

    @property
    def ambient_dim(self) -> int:
        return self.clean.shape[1]


def _stream(seed: int, lane: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed), lane]))


def _assemble(clean, sigma, seed, d_hint, name):
    clean = np.ascontiguousarray(clean, dtype=np.float64)
    noise = _stream(seed, _NOISE_LANE).standard_normal(clean.shape)
    return LabeledDataset(
        clean=clean,
        noisy=clean + sigma * noise,
        sigma=float(sigma),
        intrinsic_dim_hint=d_hint,
        name=name,
    )


# -- surface parameterizations (pure functions of their parameters) --------

def swiss_roll_points(t: np.ndarray, h: np.ndarray) -> np.ndarray:
    """(t cos t, h, t sin t) scaled so the surface diameter is about 2."""
    s = _swiss_scale()
    return np.column_stack([t * np.cos(t), h, t * np.sin(t)]) / s


@functools.lru_cache(maxsize=1)
def _swiss_scale() -> float:
    # Half the bounding-box diagonal of a dense parameter grid.
    t = np.linspace(1.5 * np.pi, 4.5 * np.pi, 200)
    h = np.linspace(0.0, 21.0, 60)
    tt, hh = np.meshgrid(t, h)
    pts = np.column_stack([
        (tt * np.cos(tt)).ravel(), hh.ravel(), (tt * np.sin(tt)).ravel()])
    diag = np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))
    return float(diag / 2.0)


def mobius_points(u: np.ndarray, w: np.ndarray) -> np.ndarray:
    r = 1.0 + (w / 2.0) * np.cos(u / 2.0)
    return np.column_stack([r * np.cos(u), r * np.sin(u), (w / 2.0) * np.sin(u / 2.0)])


def sphere_points(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Unit sphere via colatitude theta in [0, pi) and longitude phi."""
    st = np.sin(theta)
    return np.column_stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)])


def torus_points(u: np.ndarray, v: np.ndarray, big_r: float = 1.0,
                 small_r: float = 0.35) -> np.ndarray:
    ring = big_r + small_r * np.cos(v)
    return np.column_stack([ring * np.cos(u), ring * np.sin(u), small_r * np.sin(v)])


def chirp_waveform(m1: float, m2: float, n_samples: int = 2048) -> np.ndarray:
    """Unit-norm frequency-sweep waveform for a mass pair.

    One second sampled at n_samples Hz. The sweep rate is set by the pair's
    chirp mass through a coalescence time slightly past the window, and a
    second harmonic weighted by the mass asymmetry gives the family its
    second intrinsic dimension. Purely a function of (m1, m2).
    """
    fs = float(n_samples)
    t = np.arange(n_samples) / fs
    mc = (m1 * m2) ** 0.6 / (m1 + m2) ** 0.2
    t_c = 1.0 + 0.05 * (45.0 / mc) ** (5.0 / 3.0)
    u = 1.0 - t / t_c
    f0 = 30.0
    phase = f0 * t_c * (8.0 / 5.0) * (1.0 - u ** (5.0 / 8.0))
    amp = u ** (-0.25)
    beta = abs(m1 - m2) / (m1 + m2)
    w = amp * (np.sin(2.0 * np.pi * phase) + beta * np.sin(4.0 * np.pi * phase))
    return w / np.linalg.norm(w)


# -- generators -------------------------------------------------------------

def swiss_roll(n: int, sigma: float, seed: int) -> LabeledDataset:
    rng = _stream(seed, _PARAM_LANE)
    t = rng.uniform(1.5 * np.pi, 4.5 * np.pi, n)
    h = rng.uniform(0.0, 21.0, n)
    return _assemble(swiss_roll_points(t, h), sigma, seed, 2, "swiss")


def mobius_strip(n: int, sigma: float, seed: int) -> LabeledDataset:
    rng = _stream(seed, _PARAM_LANE)
    u = rng.uniform(0.0, 2.0 * np.pi, n)
    w = rng.uniform(-0.4, 0.4, n)
    return _assemble(mobius_points(u, w), sigma, seed, 2, "mobius")


def sphere(n: int, sigma: float, seed: int) -> LabeledDataset:
    rng = _stream(seed, _PARAM_LANE)
    g = rng.standard_normal((n, 3))
    clean = g / np.linalg.norm(g, axis=1, keepdims=True)
    return _assemble(clean, sigma, seed, 2, "sphere")


def torus(n: int, sigma: float, seed: int) -> LabeledDataset:
    rng = _stream(seed, _PARAM_LANE)
    u = rng.uniform(0.0, 2.0 * np.pi, n)
    v = rng.uniform(0.0, 2.0 * np.pi, n)
    return _assemble(torus_points(u, v), sigma, seed, 2, "torus")


def chirp_manifold(n: int, sigma: float, seed: int, ambient_dim: int = 2048) -> LabeledDataset:
    """Two-parameter waveform family in high dimension.

    Masses are drawn from a Gaussian (mean 35, sd 15) and rejection-sampled
    into [20, 50]; every clean row has unit l2 norm.
    """
    rng = _stream(seed, _PARAM_LANE)
    clean = np.empty((n, ambient_dim))
    for i in range(n):
        m1 = _draw_mass(rng)
        m2 = _draw_mass(rng)
        clean[i] = chirp_waveform(m1, m2, ambient_dim)
    return _assemble(clean, sigma, seed, 2, "chirp")


def _draw_mass(rng, mean=35.0, sd=15.0, lo=20.0, hi=50.0) -> float:
    while True:
        m = mean + sd * rng.standard_normal()
        if lo <= m <= hi:
            return float(m)


GENERATORS = {
    "swiss": swiss_roll,
    "mobius": mobius_strip,
    "sphere": sphere,
    "torus": torus,
    "chirp": chirp_manifold,
}


# -- file formats ------------------------------------------------------------

def save_mtds(dataset: LabeledDataset, path) -> None:
    n, dim = dataset.clean.shape
    header = (
        MAGIC
        + struct.pack("<I", FORMAT_VERSION)
        + struct.pack("<Q", n)
        + struct.pack("<I", dim)
        + struct.pack("<I", dataset.intrinsic_dim_hint)
        + struct.pack("<d", dataset.sigma)
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(dataset.clean, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(dataset.noisy, dtype="<f8").tobytes())


def load_mtds(path) -> LabeledDataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version = struct.unpack_from("<I", blob, 4)[0]
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset version {version}")
    n = struct.unpack_from("<Q", blob, 8)[0]
    dim = struct.unpack_from("<I", blob, 16)[0]
    d_hint = struct.unpack_from("<I", blob, 20)[0]
    sigma = struct.unpack_from("<d", blob, 24)[0]
    offset = 32
    count = n * dim
    expected = offset + 2 * count * 8
    if len(blob) != expected:
        raise ValueError(f"file length {len(blob)} does not match header "
                         f"(expected {expected})")
    clean = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
    noisy = np.frombuffer(blob, dtype="<f8", count=count, offset=offset + count * 8)
    import os
    name = os.path.splitext(os.path.basename(str(path)))[0]
    return LabeledDataset(
        clean=clean.reshape(n, dim).copy(),
        noisy=noisy.reshape(n, dim).copy(),
        sigma=float(sigma),
        intrinsic_dim_hint=int(d_hint),
        name=name,
    )


def export_csv(dataset: LabeledDataset, path) -> None:
    """Side-by-side clean/noisy CSV for manual inspection."""
    dim = dataset.ambient_dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"clean_{j}" for j in range(dim)]
                        + [f"noisy_{j}" for j in range(dim)])
        for i in range(dataset.n):
            writer.writerow([repr(float(v)) for v in dataset.clean[i]]
                            + [repr(float(v)) for v in dataset.noisy[i]])
