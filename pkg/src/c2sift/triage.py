"""Post-model triage: list filtering plus analyst-style rules.

Flagged hosts are checked against curated IP lists first (deny, allow,
CDN/cloud, sinkhole), then the survivors go through rule review. Outcome
precedence is known_malicious > suppressed_* > candidate; a host is a
candidate only when every enabled rule passes. Hosts failing rule review
get the suppressed_rules outcome so every flagged host receives exactly
one decision.
"""
from __future__ import annotations

import datetime as dt
import ipaddress
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .configio import parse_kv_file

LIST_KINDS = ("deny", "allow", "cdn_cloud", "sinkhole")

OUTCOME_KNOWN_MALICIOUS = "known_malicious"
OUTCOME_SUPPRESSED_ALLOW = "suppressed_allowlist"
OUTCOME_SUPPRESSED_CDN = "suppressed_cdn"
OUTCOME_SUPPRESSED_SINKHOLE = "suppressed_sinkhole"
OUTCOME_SUPPRESSED_RULES = "suppressed_rules"
OUTCOME_CANDIDATE = "candidate"

# list kind -> (outcome, precedence position); deny wins over every allow-side list
_SUPPRESS_ORDER = (
    ("deny", OUTCOME_KNOWN_MALICIOUS),
    ("allow", OUTCOME_SUPPRESSED_ALLOW),
    ("cdn_cloud", OUTCOME_SUPPRESSED_CDN),
    ("sinkhole", OUTCOME_SUPPRESSED_SINKHOLE),
)


@dataclass
class IpListSource:
    """A named list of addresses and CIDR blocks of one kind."""

    name: str
    kind: str
    addresses: frozenset[str]
    networks: tuple
    loaded_at: str
    invalid_lines: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in LIST_KINDS:
            raise ValueError(f"unknown list kind {self.kind!r}")

    @property
    def entry_count(self) -> int:
        return len(self.addresses) + len(self.networks)

    def contains(self, ip: str) -> bool:
        addr = ipaddress.ip_address(ip)
        if str(addr) in self.addresses:
            return True
        return any(addr.version == net.version and addr in net for net in self.networks)


def load_ip_list(path: str | Path, kind: str, name: str | None = None) -> IpListSource:
    """One entry per line; ``#`` comments and blanks skipped.

    Invalid lines are kept on the source for reporting, never silently
    dropped; duplicates collapse.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValueError(f"cannot read IP list {path}: {exc}") from exc
    addresses: set[str] = set()
    networks: dict[str, object] = {}
    invalid: list[str] = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if "/" in line:
                net = ipaddress.ip_network(line, strict=False)
                networks[str(net)] = net
            else:
                addresses.add(str(ipaddress.ip_address(line)))
        except ValueError:
            invalid.append(line)
    return IpListSource(
        name=name or path.stem,
        kind=kind,
        addresses=frozenset(addresses),
        networks=tuple(networks[k] for k in sorted(networks)),
        loaded_at=dt.datetime.now(dt.timezone.utc).isoformat(),
        invalid_lines=tuple(invalid),
    )


@dataclass(frozen=True)
class Rule:
    """Pure predicate over (feature row, score); True means "looks like C2"."""

    name: str
    predicate: Callable[[Mapping[str, float], float], bool]
    enabled: bool = True


@dataclass(frozen=True)
class TriageConfig:
    threshold: float = 0.5
    min_devices: int = 1
    min_periodicity: float = 0.0

    @classmethod
    def from_file(cls, path: str | Path) -> "TriageConfig":
        raw = parse_kv_file(path)
        known = {"threshold", "min_devices", "min_periodicity"}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValueError(f"{path}: unknown triage config key(s): {', '.join(unknown)}")
        kwargs = {}
        if "threshold" in raw:
            kwargs["threshold"] = float(raw["threshold"])
        if "min_devices" in raw:
            kwargs["min_devices"] = int(raw["min_devices"])
        if "min_periodicity" in raw:
            kwargs["min_periodicity"] = float(raw["min_periodicity"])
        return cls(**kwargs)


def build_rules(cfg: TriageConfig) -> tuple[Rule, ...]:
    """The shipped review rules, thresholds from config."""
    return (
        Rule("min_score", lambda row, score: score >= cfg.threshold),
        Rule("min_devices", lambda row, score: row["device_count"] >= cfg.min_devices),
        Rule("min_periodicity", lambda row, score: row["periodicity_score"] >= cfg.min_periodicity),
    )


@dataclass(frozen=True)
class TriageDecision:
    host_ip: str
    window_date: str
    score: float
    outcome: str
    matched_rules: tuple[str, ...] = ()


def _list_outcome(host_ip: str, lists: Sequence[IpListSource]) -> str | None:
    for kind, outcome in _SUPPRESS_ORDER:
        for source in lists:
            if source.kind == kind and source.contains(host_ip):
                return outcome
    return None


def triage(
    flagged: Iterable[tuple[str, str, float]],
    lists: Sequence[IpListSource],
    rules: Sequence[Rule],
    feature_rows: Mapping[tuple[str, str], Mapping[str, float]],
) -> list[TriageDecision]:
    """Decide each flagged (host_ip, window_date, score) exactly once.

    Rules run only on hosts that survive list suppression; a candidate
    must pass every enabled rule and records the rules it matched.
    """
    decisions: list[TriageDecision] = []
    for host_ip, window_date, score in flagged:
        if not 0.0 <= score <= 1.0:
            raise ValueError(f"score {score} for host {host_ip} outside [0, 1]")
        outcome = _list_outcome(host_ip, lists)
        if outcome is not None:
            decisions.append(TriageDecision(host_ip, window_date, score, outcome))
            continue
        row = feature_rows.get((host_ip, window_date))
        if row is None:
            raise KeyError(f"no feature row for host {host_ip} on {window_date}")
        matched = []
        all_pass = True
        for rule in rules:
            if not rule.enabled:
                continue
            if rule.predicate(row, score):
                matched.append(rule.name)
            else:
                all_pass = False
        outcome = OUTCOME_CANDIDATE if all_pass else OUTCOME_SUPPRESSED_RULES
        decisions.append(TriageDecision(host_ip, window_date, score, outcome, tuple(matched)))
    return decisions


def write_decisions(path: str | Path, decisions: Sequence[TriageDecision]) -> None:
    lines = ["host_ip,window_date,score,outcome,matched_rules"]
    for d in sorted(decisions, key=lambda d: (d.window_date, d.host_ip)):
        lines.append(
            ",".join([d.host_ip, d.window_date, repr(float(d.score)), d.outcome, ";".join(d.matched_rules)])
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
