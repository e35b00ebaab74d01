"""Host-centric aggregation: group boundary flows per external host and day.

The unit of prediction downstream is (host_ip, window_date). A flow belongs
to the calendar day (UTC) of its start time; flows straddling midnight stay
with the start day. Traffic that does not cross the internal/external
boundary carries no host/device signature and is excluded but counted.
"""
from __future__ import annotations

import datetime as dt
import ipaddress
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .flows import FlowRecord


class InternalSpace:
    """The set of internal ("device") addresses, defined by CIDR prefixes.

    Prefixes need not be disjoint; membership is any-match. Lookups are
    memoized per address string since flow data repeats endpoints heavily.
    """

    def __init__(self, cidrs: Iterable[str]):
        networks = [ipaddress.ip_network(c.strip(), strict=False) for c in cidrs]
        if not networks:
            raise ValueError("internal space needs at least one CIDR prefix")
        self.networks = tuple(networks)
        self._memo: dict[str, bool] = {}

    @classmethod
    def from_file(cls, path: str | Path) -> "InternalSpace":
        """One CIDR per line, ``#`` comments allowed."""
        cidrs = []
        for raw in Path(path).read_text(encoding="utf-8").splitlines():
            line = raw.split("#", 1)[0].strip()
            if line:
                cidrs.append(line)
        return cls(cidrs)

    def contains(self, ip: str) -> bool:
        hit = self._memo.get(ip)
        if hit is None:
            addr = ipaddress.ip_address(ip)
            hit = any(addr.version == net.version and addr in net for net in self.networks)
            self._memo[ip] = hit
        return hit


@dataclass(frozen=True, slots=True)
class DirectedFlow:
    """A boundary flow re-keyed as (external host, internal device)."""

    host_ip: str
    device_ip: str
    host_port: int
    device_port: int
    bytes: int
    packets: int
    start_time: int
    end_time: int
    initiated_by_host: bool


@dataclass(frozen=True)
class HostAggregate:
    """All flows for one external host within one UTC calendar day.

    ``flows`` is sorted by start_time, ties broken by (device_ip,
    device_port); ``device_count`` is the number of distinct device IPs.
    """

    host_ip: str
    window_date: dt.date
    flows: tuple[DirectedFlow, ...]
    device_count: int

    @classmethod
    def build(cls, host_ip: str, window_date: dt.date, flows: Iterable[DirectedFlow]) -> "HostAggregate":
        ordered = tuple(sorted(flows, key=lambda f: (f.start_time, f.device_ip, f.device_port)))
        if not ordered:
            raise ValueError("aggregate needs at least one flow")
        for flow in ordered:
            if flow.host_ip != host_ip:
                raise ValueError(f"flow host {flow.host_ip} != aggregate host {host_ip}")
            if window_day(flow.start_time) != window_date:
                raise ValueError(f"flow start {flow.start_time} outside window {window_date}")
        devices = {flow.device_ip for flow in ordered}
        return cls(host_ip=host_ip, window_date=window_date, flows=ordered, device_count=len(devices))


def window_day(start_time_ms: int) -> dt.date:
    """UTC calendar day owning a start timestamp."""
    return dt.datetime.fromtimestamp(start_time_ms // 1000, tz=dt.timezone.utc).date()


def split_direction(record: FlowRecord, space: InternalSpace) -> DirectedFlow | None:
    """Resolve a flow into host/device roles, or None when non-boundary.

    The external endpoint becomes the host; ``initiated_by_host`` is True
    exactly when the external endpoint is the flow's source.
    """
    src_internal = space.contains(record.src_ip)
    dst_internal = space.contains(record.dst_ip)
    if src_internal == dst_internal:
        return None
    if src_internal:
        host_ip, host_port = record.dst_ip, record.dst_port
        device_ip, device_port = record.src_ip, record.src_port
        initiated_by_host = False
    else:
        host_ip, host_port = record.src_ip, record.src_port
        device_ip, device_port = record.dst_ip, record.dst_port
        initiated_by_host = True
    return DirectedFlow(
        host_ip=host_ip,
        device_ip=device_ip,
        host_port=host_port,
        device_port=device_port,
        bytes=record.bytes,
        packets=record.packets,
        start_time=record.start_time,
        end_time=record.end_time,
        initiated_by_host=initiated_by_host,
    )


def group_daily(
    records: Iterable[FlowRecord], space: InternalSpace
) -> tuple[dict[tuple[str, dt.date], HostAggregate], int]:
    """Group boundary records into per-(host, day) aggregates.

    Returns the aggregate map plus the count of excluded non-boundary
    records. Output is independent of input ordering.
    """
    buckets: dict[tuple[str, dt.date], list[DirectedFlow]] = {}
    non_boundary = 0
    for record in records:
        directed = split_direction(record, space)
        if directed is None:
            non_boundary += 1
            continue
        key = (directed.host_ip, window_day(directed.start_time))
        buckets.setdefault(key, []).append(directed)
    aggregates = {
        key: HostAggregate.build(key[0], key[1], flows) for key, flows in sorted(buckets.items(), key=lambda kv: (str(kv[0][1]), kv[0][0]))
    }
    return aggregates, non_boundary


def build_aggregates(
    records: Iterable[FlowRecord], space: InternalSpace, date: dt.date
) -> tuple[dict[str, HostAggregate], int]:
    """Group one stated day's records per host.

    Every boundary record lands in exactly one aggregate; a record whose
    start time falls outside ``date`` is a caller bug and raises.
    """
    daily, non_boundary = group_daily(records, space)
    out: dict[str, HostAggregate] = {}
    for (host_ip, day), agg in daily.items():
        if day != date:
            raise ValueError(f"record(s) for host {host_ip} start on {day}, outside window {date}")
        out[host_ip] = agg
    return out, non_boundary


def conservation_totals(aggregates: Mapping) -> tuple[int, int, int]:
    """(flow count, bytes, packets) summed over aggregates, for checks."""
    flows = nbytes = packets = 0
    for agg in aggregates.values():
        flows += len(agg.flows)
        nbytes += sum(f.bytes for f in agg.flows)
        packets += sum(f.packets for f in agg.flows)
    return flows, nbytes, packets
