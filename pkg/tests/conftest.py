import datetime as dt

import numpy as np
import pytest

from c2sift.aggregate import DirectedFlow, HostAggregate
from c2sift.learners import LabeledDataset

DAY0_MS = 1_641_772_800_000  # 2022-01-10T00:00:00Z
DAY0 = dt.date(2022, 1, 10)


def make_flow(
    start_s: float = 0.0,
    *,
    nbytes: int = 300,
    packets: int = 2,
    duration_s: float = 1.0,
    host="198.18.1.1",
    device="10.0.0.5",
    device_port=50000,
    host_port=443,
    initiated_by_host=False,
) -> DirectedFlow:
    start = DAY0_MS + round(start_s * 1000)
    return DirectedFlow(
        host_ip=host,
        device_ip=device,
        host_port=host_port,
        device_port=device_port,
        bytes=nbytes,
        packets=packets,
        start_time=start,
        end_time=start + round(duration_s * 1000),
        initiated_by_host=initiated_by_host,
    )


def make_aggregate(flows, host="198.18.1.1") -> HostAggregate:
    return HostAggregate.build(host, DAY0, flows)


def random_aggregate(rng: np.random.Generator, n_flows: int | None = None) -> HostAggregate:
    n = n_flows or int(rng.integers(1, 40))
    starts = np.sort(rng.integers(0, 86_400_000, size=n))
    flows = []
    for i in range(n):
        packets = int(rng.integers(1, 20))
        flows.append(
            DirectedFlow(
                host_ip="198.18.1.1",
                device_ip=f"10.0.0.{int(rng.integers(1, 200))}",
                host_port=443,
                device_port=int(rng.choice([443, 80, 50000, 51000])),
                bytes=packets + int(rng.integers(0, 5000)),
                packets=packets,
                start_time=DAY0_MS + int(starts[i]),
                end_time=DAY0_MS + int(starts[i]) + int(rng.integers(0, 120_000)),
                initiated_by_host=bool(rng.random() < 0.3),
            )
        )
    return make_aggregate(flows)


def make_dataset(
    n: int = 200,
    d: int = 8,
    seed: int = 0,
    coefs: dict[int, float] | None = None,
) -> LabeledDataset:
    """Logistic data with planted coefficients (index -> weight)."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    logits = np.zeros(n)
    for j, w in (coefs or {0: 2.0, 1: -1.5}).items():
        logits += w * X[:, j]
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-logits))).astype(int)
    if y.min() == y.max():  # force both classes for degenerate draws
        y[0] = 1 - y[0]
    return LabeledDataset(
        X=X,
        y=y,
        feature_names=tuple(f"f{i}" for i in range(d)),
        row_keys=tuple((f"198.18.0.{i % 250 + 1}", "2022-01-10") for i in range(n)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
