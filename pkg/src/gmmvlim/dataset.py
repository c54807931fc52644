"""Scattered-field datasets: container, canonical text format and noise.

The data matrix is stored as a dense ``(n_receivers, P*I)`` complex array
whose column ``k = i*P + p`` holds the field of source ``p`` at frequency
``i`` over the whole receiver catalogue, zero where the pair is not
measured.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .core import FrequencySet, MeasurementConfig
from .errors import DatasetError, DimensionError

FORMAT_VERSION = "GMMVDS/1"


@dataclass(frozen=True)
class ScatterDataset:
    frequencies: FrequencySet
    config: MeasurementConfig
    Y: np.ndarray
    noise: dict = field(default_factory=lambda: {"snr_db": math.inf, "norm_u": 0.0, "seed": None})

    def __post_init__(self):
        Y = np.array(self.Y, dtype=complex)
        expected = (self.config.n_receivers, self.config.P * self.frequencies.I)
        if Y.shape != expected:
            raise DimensionError(f"data matrix has shape {Y.shape}, expected {expected}")
        mask = self.mask()
        Y[~mask] = 0.0
        Y.setflags(write=False)
        object.__setattr__(self, "Y", Y)

    @property
    def P(self):
        return self.config.P

    @property
    def I(self):
        return self.frequencies.I

    @property
    def n_columns(self):
        return self.P * self.I

    def column_index(self, p, i):
        return i * self.P + p

    def mask(self, rows: str = "all"):
        """``(n_receivers, P*I)`` boolean mask for ``rows`` in {all, recon, cv}."""
        rows = rows.lower()
        if rows == "all":
            m = self.config.active_mask()
        elif rows == "recon":
            m = self.config.recon_mask()
        elif rows == "cv":
            m = self.config.cv_mask()
        else:
            raise ValueError(f"unknown row class {rows!r}")
        return np.tile(m, (1, self.I))

    def column(self, p, i):
        """Measured vector ``y_{p,i}`` in the source's local receiver order."""
        return self.Y[self.config.links[p], self.column_index(p, i)]

    def frequency_block(self, i):
        """``(n_receivers, P)`` slice of the data matrix for frequency ``i``."""
        return self.Y[:, i * self.P:(i + 1) * self.P]

    def norm(self, rows="all"):
        return float(np.linalg.norm(self.Y[self.mask(rows)]))

    def with_data(self, Y, noise=None) -> "ScatterDataset":
        return replace(self, Y=Y, noise=self.noise if noise is None else noise)

    def with_config(self, config: MeasurementConfig) -> "ScatterDataset":
        return replace(self, config=config)

    def subset_frequencies(self, indices) -> "ScatterDataset":
        idx = np.asarray(indices, dtype=int)
        cols = np.concatenate([np.arange(i * self.P, (i + 1) * self.P) for i in idx])
        return ScatterDataset(self.frequencies.subset(idx), self.config, self.Y[:, cols], dict(self.noise))


def add_noise(ds: ScatterDataset, snr_db: float, seed: Optional[int] = None) -> ScatterDataset:
    """Add circularly-symmetric complex Gaussian noise to the measured entries.

    The per-entry variance is chosen so that ``E||U||_F^2 =
    10**(-snr_db/10) ||Y||_F^2``; the realised ``||U||_F`` is recorded in
    the returned dataset's ``noise`` metadata.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return ds.with_data(ds.Y, {"snr_db": math.inf, "norm_u": 0.0, "seed": seed})
    mask = ds.mask("all")
    m = int(mask.sum())
    ratio = 10.0 ** (-snr_db / 20.0)
    std = ratio * np.linalg.norm(ds.Y[mask]) / math.sqrt(m)
    rng = np.random.default_rng(seed)
    u = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) * (std / math.sqrt(2.0))
    U = np.zeros_like(ds.Y)
    U[mask] = u
    return ds.with_data(ds.Y + U, {"snr_db": float(snr_db), "norm_u": float(np.linalg.norm(u)),
                                   "seed": seed})


# --------------------------------------------------------------------------
# GMMVDS/1 text format


def _fmt(x: float) -> str:
    return repr(float(x))


def dumps_dataset(ds: ScatterDataset) -> str:
    cfg = ds.config
    out = io.StringIO()
    w = out.write
    w(f"{FORMAT_VERSION}\n")
    w("# scattered-field dataset; positions in m, frequencies in Hz, fields in V/m\n")
    w(f"P {cfg.P}\nQ {cfg.n_receivers}\nI {ds.I}\n")
    w("frequencies " + " ".join(_fmt(f) for f in ds.frequencies.freqs) + "\n")
    for p, (x, y) in enumerate(cfg.sources):
        w(f"source {p} {_fmt(x)} {_fmt(y)}\n")
    for q, (x, y) in enumerate(cfg.receivers):
        w(f"receiver {q} {_fmt(x)} {_fmt(y)}\n")
    for p, links in enumerate(cfg.links):
        flags = cfg.cv[p] if cfg.cv is not None else np.zeros(links.size, bool)
        w(f"links {p} " + " ".join(f"{q}{'c' if c else 'r'}" for q, c in zip(links, flags)) + "\n")
    snr = ds.noise.get("snr_db", math.inf)
    seed = ds.noise.get("seed")
    w(f"noise {_fmt(snr)} {_fmt(ds.noise.get('norm_u', 0.0))} {'none' if seed is None else int(seed)}\n")
    n_rec = cfg.n_active() * ds.I
    w(f"records {n_rec}\n")
    for i in range(ds.I):
        for p, links in enumerate(cfg.links):
            col = ds.Y[:, i * cfg.P + p]
            for q in links:
                v = col[q]
                w(f"{i} {p} {q} {_fmt(v.real)} {_fmt(v.imag)}\n")
    w("end\n")
    return out.getvalue()


def write_dataset(ds: ScatterDataset, path) -> Path:
    """Write ``ds`` in the ``GMMVDS/1`` format. Identical datasets give
    identical bytes."""
    path = Path(path)
    path.write_text(dumps_dataset(ds))
    return path


def loads_dataset(text: str) -> ScatterDataset:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or lines[0] != FORMAT_VERSION:
        got = lines[0] if lines else "<empty>"
        raise DatasetError(f"expected {FORMAT_VERSION}, got {got!r}", code="VERSION_MISMATCH")
    it = iter(enumerate(lines[1:], start=2))

    def expect(key):
        try:
            ln_no, ln = next(it)
        except StopIteration:
            raise DatasetError(f"file truncated before {key!r}") from None
        parts = ln.split()
        if parts[0] != key:
            raise DatasetError(f"line {ln_no}: expected {key!r}, got {parts[0]!r}")
        return parts[1:]

    try:
        P = int(expect("P")[0])
        Q = int(expect("Q")[0])
        I = int(expect("I")[0])
        freqs = [float(v) for v in expect("frequencies")]
        sources = np.array([[float(v) for v in expect("source")[1:3]] for _ in range(P)])
        receivers = np.array([[float(v) for v in expect("receiver")[1:3]] for _ in range(Q)])
        links, cv = [], []
        for _ in range(P):
            toks = expect("links")[1:]
            links.append(np.array([int(t[:-1]) for t in toks], dtype=int))
            cv.append(np.array([t[-1] == "c" for t in toks], dtype=bool))
        nz = expect("noise")
        noise = {"snr_db": float(nz[0]), "norm_u": float(nz[1]),
                 "seed": None if nz[2] == "none" else int(nz[2])}
        n_rec = int(expect("records")[0])
    except (ValueError, IndexError) as exc:
        raise DatasetError(f"malformed header: {exc}") from exc
    if len(freqs) != I:
        raise DatasetError("frequency count does not match I")

    cfg = MeasurementConfig(sources, receivers, tuple(links),
                            tuple(cv) if any(c.any() for c in cv) else None)
    active = cfg.active_mask()
    Y = np.zeros((Q, P * I), dtype=complex)
    seen = np.zeros((Q, P * I), dtype=bool)
    for _ in range(n_rec):
        try:
            ln_no, ln = next(it)
        except StopIteration:
            raise DatasetError("file truncated inside the records block") from None
        parts = ln.split()
        try:
            if len(parts) != 5:
                raise ValueError("expected 5 fields")
            i, p, q = int(parts[0]), int(parts[1]), int(parts[2])
            v = complex(float(parts[3]), float(parts[4]))
        except ValueError as exc:
            raise DatasetError(f"line {ln_no}: bad record ({exc})") from exc
        if not (0 <= i < I and 0 <= p < P and 0 <= q < Q) or not active[q, p]:
            raise DatasetError(f"line {ln_no}: record ({i}, {p}, {q}) is not an active triple")
        k = i * P + p
        if seen[q, k]:
            raise DatasetError(f"line {ln_no}: duplicate record ({i}, {p}, {q})", code="DUPLICATE_TRIPLE")
        seen[q, k] = True
        Y[q, k] = v
    try:
        _, ln = next(it)
    except StopIteration:
        raise DatasetError("file truncated: missing 'end'") from None
    if ln != "end":
        raise DatasetError(f"expected 'end', got {ln!r}")
    if not np.array_equal(seen, np.tile(active, (1, I))):
        raise DatasetError("some measured triples are missing")
    return ScatterDataset(FrequencySet(freqs), cfg, Y, noise)


def read_dataset(path):
    """Read a ``GMMVDS/1`` file. Returns ``(dataset, measurement_config)``."""
    ds = loads_dataset(Path(path).read_text())
    return ds, ds.config
