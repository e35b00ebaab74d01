"""Per-host feature engineering: flow-size, beaconing, and distributional blocks.

Each host/day aggregate maps to one fixed-width vector of three blocks:

* flow_size: volume totals, rates, bytes-per-packet, initiation fraction,
  and per-port flow fractions for a tracked well-known port list.
* beaconing: inter-arrival gap statistics over successive flow start times.
  Short, routine, near-periodic traffic shows as a small gap spread and a
  high periodicity score.
* distributional: for each per-flow variable (packets, bytes,
  bytes-per-packet) the mean, the sample standard deviation, and n
  nearest-rank quantiles. Quantiles summarize the shape of the per-host
  distribution and stay well-defined even for hosts with very few flows,
  where a standard deviation alone is uninformative.

With the default config (16 tracked ports, n=20 quantiles) the width is
9 + 17 + 5 + 3*(2+20) = 97.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .aggregate import HostAggregate
from .configio import parse_kv_file

# Guard for rates and coefficients of variation when a denominator is 0.
EPS_SECONDS = 1e-3

DEFAULT_TRACKED_PORTS = (21, 22, 23, 25, 53, 80, 110, 123, 143, 443, 445, 587, 993, 995, 3389, 8080)

DISTRIBUTION_VARIABLES = ("packets", "bytes", "bpp")


@dataclass(frozen=True)
class FeatureConfig:
    """Featurization knobs; defaults give the 97-wide layout."""

    n_quantiles: int = 20
    tracked_ports: tuple[int, ...] = DEFAULT_TRACKED_PORTS
    beacon_tolerance: float = 0.1

    def __post_init__(self):
        if self.n_quantiles < 1:
            raise ValueError("n_quantiles must be >= 1")
        if len(set(self.tracked_ports)) != len(self.tracked_ports):
            raise ValueError("tracked_ports must be distinct")
        if not 0 <= self.beacon_tolerance:
            raise ValueError("beacon_tolerance must be non-negative")

    @property
    def quantile_levels(self) -> tuple[float, ...]:
        """Strictly increasing levels i/n for i=1..n; last level is 100%."""
        n = self.n_quantiles
        return tuple(i / n for i in range(1, n + 1))

    @classmethod
    def from_file(cls, path: str | Path) -> "FeatureConfig":
        raw = parse_kv_file(path)
        kwargs = {}
        if "n_quantiles" in raw:
            kwargs["n_quantiles"] = int(raw["n_quantiles"])
        if "tracked_ports" in raw:
            kwargs["tracked_ports"] = tuple(int(p) for p in raw["tracked_ports"].split(",") if p.strip())
        if "beacon_tolerance" in raw:
            kwargs["beacon_tolerance"] = float(raw["beacon_tolerance"])
        known = {"n_quantiles", "tracked_ports", "beacon_tolerance"}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValueError(f"{path}: unknown feature config key(s): {', '.join(unknown)}")
        return cls(**kwargs)


@dataclass(frozen=True)
class FeatureVector:
    """One host/day's features, names aligned 1:1 with values."""

    host_ip: str
    window_date: dt.date
    values: np.ndarray
    names: tuple[str, ...]
    blocks: Mapping[str, range]

    def value(self, name: str) -> float:
        return float(self.values[self.names.index(name)])


@dataclass(frozen=True)
class FlowVariableSample:
    """Per-flow variable vectors for one host: packets, bytes, bytes/packets."""

    packets_per_flow: np.ndarray
    bytes_per_flow: np.ndarray
    bpp_ratio: np.ndarray

    def __post_init__(self):
        n = len(self.packets_per_flow)
        if n < 1:
            raise ValueError("sample needs at least one flow")
        if len(self.bytes_per_flow) != n or len(self.bpp_ratio) != n:
            raise ValueError("sample vectors must have equal length")

    @classmethod
    def from_aggregate(cls, agg: HostAggregate) -> "FlowVariableSample":
        packets = np.array([f.packets for f in agg.flows], dtype=float)
        nbytes = np.array([f.bytes for f in agg.flows], dtype=float)
        return cls(packets_per_flow=packets, bytes_per_flow=nbytes, bpp_ratio=nbytes / packets)


def _pct_label(level: float) -> str:
    pct = level * 100.0
    rounded = round(pct)
    if abs(pct - rounded) < 1e-9:
        return str(int(rounded))
    return f"{pct:g}"


def flow_size_feature_names(cfg: FeatureConfig) -> tuple[str, ...]:
    base = (
        "total_bytes",
        "total_packets",
        "total_duration",
        "flow_count",
        "device_count",
        "mean_bpp",
        "byte_rate",
        "packet_rate",
        "host_initiated_fraction",
    )
    ports = tuple(f"port_{p}" for p in cfg.tracked_ports) + ("port_other",)
    return base + ports


def beaconing_feature_names() -> tuple[str, ...]:
    return ("mean_gap", "sd_gap", "cv_gap", "periodicity_score", "sd_packets")


def distributional_feature_names(cfg: FeatureConfig) -> tuple[str, ...]:
    names: list[str] = []
    for var in DISTRIBUTION_VARIABLES:
        names.append(f"{var}_mean")
        names.append(f"{var}_sd")
        names.extend(f"{var}_q{_pct_label(level)}" for level in cfg.quantile_levels)
    return tuple(names)


def feature_names(cfg: FeatureConfig) -> tuple[str, ...]:
    return flow_size_feature_names(cfg) + beaconing_feature_names() + distributional_feature_names(cfg)


def block_ranges(cfg: FeatureConfig) -> dict[str, range]:
    n_fs = len(flow_size_feature_names(cfg))
    n_bc = len(beaconing_feature_names())
    n_di = len(distributional_feature_names(cfg))
    return {
        "flow_size": range(0, n_fs),
        "beaconing": range(n_fs, n_fs + n_bc),
        "distributional": range(n_fs + n_bc, n_fs + n_bc + n_di),
    }


def _sample_sd(values: np.ndarray) -> float:
    """Sample standard deviation (n-1 denominator); singleton sd is 0."""
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1))


def flow_size_features(agg: HostAggregate, cfg: FeatureConfig) -> np.ndarray:
    """Volume, rate, initiation, and port-fraction features for one host."""
    if not agg.flows:
        raise ValueError("aggregate has no flows")
    nbytes = np.array([f.bytes for f in agg.flows], dtype=float)
    packets = np.array([f.packets for f in agg.flows], dtype=float)
    durations = np.array([(f.end_time - f.start_time) / 1000.0 for f in agg.flows])
    n = len(agg.flows)

    total_bytes = float(nbytes.sum())
    total_packets = float(packets.sum())
    total_duration = float(durations.sum())
    mean_bpp = float(np.mean(nbytes / packets))
    byte_rate = total_bytes / max(total_duration, EPS_SECONDS)
    packet_rate = total_packets / max(total_duration, EPS_SECONDS)
    host_initiated = sum(1 for f in agg.flows if f.initiated_by_host) / n

    port_index = {p: i for i, p in enumerate(cfg.tracked_ports)}
    port_fracs = np.zeros(len(cfg.tracked_ports) + 1)
    for f in agg.flows:
        idx = port_index.get(f.device_port, len(cfg.tracked_ports))
        port_fracs[idx] += 1.0
    port_fracs /= n

    head = np.array(
        [
            total_bytes,
            total_packets,
            total_duration,
            float(n),
            float(agg.device_count),
            mean_bpp,
            byte_rate,
            packet_rate,
            host_initiated,
        ]
    )
    return np.concatenate([head, port_fracs])


def beaconing_features(agg: HostAggregate, cfg: FeatureConfig) -> np.ndarray:
    """Gap statistics over successive start times, plus packet-count spread.

    periodicity_score is the fraction of gaps within
    +-beacon_tolerance * median_gap of the median gap; hosts with fewer
    than two flows score 0 on every entry.
    """
    if not agg.flows:
        raise ValueError("aggregate has no flows")
    packets = np.array([f.packets for f in agg.flows], dtype=float)
    if len(agg.flows) < 2:
        return np.zeros(5)
    starts = np.array([f.start_time for f in agg.flows], dtype=np.int64)
    gaps = np.diff(starts) / 1000.0
    mean_gap = float(np.mean(gaps))
    sd_gap = _sample_sd(gaps)
    cv_gap = sd_gap / max(mean_gap, EPS_SECONDS)
    median_gap = float(np.median(gaps))
    tolerance = cfg.beacon_tolerance * median_gap
    periodicity = float(np.mean(np.abs(gaps - median_gap) <= tolerance))
    return np.array([mean_gap, sd_gap, cv_gap, periodicity, _sample_sd(packets)])


def quantile_transform(values: Sequence[float] | np.ndarray, levels: Sequence[float]) -> np.ndarray:
    """Nearest-rank quantiles: level q of m values picks sorted[ceil(q*m)-1].

    The rank index is computed as ceil(q*m - 1e-9); the tolerance snaps
    float noise in q*m back onto exact rank boundaries (e.g. level 0.55 of
    100 values picks rank 55, not 56). Every output is an element of the
    input, the output is non-decreasing across increasing levels, and the
    100% level is the maximum.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("empty distribution")
    ordered = np.sort(arr)
    m = arr.size
    out = np.empty(len(levels))
    for i, level in enumerate(levels):
        rank = math.ceil(level * m - 1e-9)
        rank = min(max(rank, 1), m)
        out[i] = ordered[rank - 1]
    return out


def distributional_features(sample: FlowVariableSample, cfg: FeatureConfig) -> np.ndarray:
    """[mean, sd, q...] per variable distribution, concatenated."""
    levels = cfg.quantile_levels
    parts = []
    for values in (sample.packets_per_flow, sample.bytes_per_flow, sample.bpp_ratio):
        head = np.array([float(np.mean(values)), _sample_sd(values)])
        parts.append(np.concatenate([head, quantile_transform(values, levels)]))
    return np.concatenate(parts)


def build_feature_vector(agg: HostAggregate, cfg: FeatureConfig) -> FeatureVector:
    """Assemble the full fixed-width vector for one host/day."""
    values = np.concatenate(
        [
            flow_size_features(agg, cfg),
            beaconing_features(agg, cfg),
            distributional_features(FlowVariableSample.from_aggregate(agg), cfg),
        ]
    )
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise AssertionError(f"non-finite feature {feature_names(cfg)[bad]} for host {agg.host_ip}")
    return FeatureVector(
        host_ip=agg.host_ip,
        window_date=agg.window_date,
        values=values,
        names=feature_names(cfg),
        blocks=block_ranges(cfg),
    )


def write_feature_matrix(
    path: str | Path,
    vectors: Sequence[FeatureVector],
    labels: Mapping[str, int] | None = None,
    drop_block: str | None = None,
) -> None:
    """Write one row per (host_ip, window_date) as delimited text.

    ``labels`` maps host_ip to 1 (malicious) / 0 (unknown-benign); when
    given it must cover every host. ``drop_block`` omits one named block,
    used for the distributional-feature ablation.
    """
    path = Path(path)
    if not vectors:
        raise ValueError("no feature vectors to write")
    names = vectors[0].names
    keep = list(range(len(names)))
    if drop_block is not None:
        blocks = vectors[0].blocks
        if drop_block not in blocks:
            raise ValueError(f"unknown block {drop_block!r}")
        dropped = set(blocks[drop_block])
        keep = [i for i in keep if i not in dropped]
    header = ["host_ip", "window_date"]
    if labels is not None:
        header.append("label")
    header.extend(names[i] for i in keep)

    lines = [",".join(header)]
    for vec in vectors:
        if vec.names != names:
            raise ValueError("feature vectors disagree on names")
        row = [vec.host_ip, vec.window_date.isoformat()]
        if labels is not None:
            if vec.host_ip not in labels:
                raise ValueError(f"no label for host {vec.host_ip}")
            row.append(str(int(labels[vec.host_ip])))
        row.extend(repr(float(vec.values[i])) for i in keep)
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def featurize_aggregates(
    aggregates: Iterable[HostAggregate], cfg: FeatureConfig
) -> list[FeatureVector]:
    """Feature vectors for aggregates, ordered by (date, numeric host IP)."""
    import ipaddress

    vecs = [build_feature_vector(agg, cfg) for agg in aggregates]
    vecs.sort(key=lambda v: (v.window_date.isoformat(), int(ipaddress.ip_address(v.host_ip))))
    return vecs
