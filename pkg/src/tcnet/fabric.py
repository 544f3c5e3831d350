"""OpenFlow-style switch model.

Rules match on exact-or-wildcard header fields and carry an ordered action
list. A table miss falls back to a deterministic MAC-learning switch, which
stands in for the reactive controller the migration rules override.

Flow-mods are read and written in the ovs-ofctl-like text form used for the
migration plan::

    cookie=9998,in_port=serverPORT,dl_type=0x0800,... actions=output:sw1LinkPORT
    del-flows sw2Name cookie=9997/-1

Symbolic names (``serverPORT``, ``transcoder1MAC`` ...) are resolved through
a bindings mapping.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from typing import Iterable, Mapping

log = logging.getLogger(__name__)

IPV4 = 0x0800
ARP = 0x0806
ETH_TYPES = (IPV4, ARP)
BROADCAST = "ff:ff:ff:ff:ff:ff"
ALL_ONES = (1 << 64) - 1
DEFAULT_PRIORITY = 1000
ARP_REQUEST, ARP_REPLY = 1, 2


class FlowModError(ValueError):
    pass


@dataclass(frozen=True)
class PacketHeader:
    in_port: int | None
    eth_type: int
    src_mac: str
    dst_mac: str
    src_ip: str
    dst_ip: str
    seq: int = 0
    stream_id: str = ""
    arp_op: int = 0

    def __post_init__(self):
        if self.eth_type not in ETH_TYPES:
            raise ValueError(f"unsupported eth_type {self.eth_type:#06x}")


@dataclass(frozen=True)
class Match:
    """Exact-or-wildcard match; ``None`` is a wildcard."""

    in_port: int | None = None
    dl_type: int | None = None
    dl_src: str | None = None
    dl_dst: str | None = None
    nw_src: str | None = None
    nw_dst: str | None = None

    def matches(self, pkt: PacketHeader) -> bool:
        return (
            (self.in_port is None or self.in_port == pkt.in_port)
            and (self.dl_type is None or self.dl_type == pkt.eth_type)
            and (self.dl_src is None or self.dl_src == pkt.src_mac)
            and (self.dl_dst is None or self.dl_dst == pkt.dst_mac)
            and (self.nw_src is None or self.nw_src == pkt.src_ip)
            and (self.nw_dst is None or self.nw_dst == pkt.dst_ip)
        )

    @property
    def specificity(self) -> int:
        return sum(getattr(self, f.name) is not None for f in fields(self))


@dataclass(frozen=True)
class Output:
    port: int


@dataclass(frozen=True)
class ModDstMac:
    mac: str


@dataclass(frozen=True)
class Drop:
    pass


@dataclass(frozen=True)
class FlowRule:
    cookie: int
    match: Match
    actions: tuple = ()
    priority: int = DEFAULT_PRIORITY
    name: str | None = field(default=None, compare=False)

    @property
    def drops(self) -> bool:
        return not any(isinstance(a, Output) for a in self.actions)


@dataclass(frozen=True)
class DeleteFlows:
    switch: str
    cookie: int
    mask: int = ALL_ONES
    name: str | None = field(default=None, compare=False)


class FlowTable:
    def __init__(self, rules: Iterable[FlowRule] = ()):
        self._rules: list[FlowRule] = []
        for r in rules:
            self.install(r)

    def __iter__(self):
        return iter(self._rules)

    def __len__(self):
        return len(self._rules)

    def install(self, rule: FlowRule) -> None:
        for i, old in enumerate(self._rules):
            if old.match == rule.match and old.priority == rule.priority:
                self._rules[i] = rule
                return
        self._rules.append(rule)

    def lookup(self, pkt: PacketHeader) -> FlowRule | None:
        best, best_key = None, None
        for i, r in enumerate(self._rules):
            if r.match.matches(pkt):
                key = (r.priority, r.match.specificity, -r.cookie, -i)
                if best_key is None or key > best_key:
                    best, best_key = r, key
        return best

    def delete_by_cookie(self, cookie: int, mask: int = ALL_ONES) -> int:
        want = cookie & mask
        keep = [r for r in self._rules if r.cookie & mask != want]
        removed = len(self._rules) - len(keep)
        self._rules = keep
        return removed


@dataclass
class Port:
    enabled: bool = True
    peer: str | None = None


@dataclass
class Forwarding:
    """Outcome of one packet arriving at a switch."""

    rule: FlowRule | None
    emitted: list  # [(port, header)] to enabled ports
    discarded: list  # [(port, header, reason)]

    @property
    def dropped(self) -> bool:
        return not self.emitted and not self.discarded


class SwitchModel:
    def __init__(self, name: str, ports: Mapping[int, Port], mac_table: Mapping[str, int] | None = None):
        self.name = name
        self.ports = dict(ports)
        self.table = FlowTable()
        self.mac_table = dict(mac_table or {})
        self.warnings: list[str] = []

    def install_flow(self, rule: FlowRule) -> None:
        self.table.install(rule)

    def delete_by_cookie(self, cookie: int, mask: int = ALL_ONES) -> int:
        return self.table.delete_by_cookie(cookie, mask)

    def set_port(self, port: int, enabled: bool) -> None:
        if port not in self.ports:
            raise KeyError(f"{self.name}: unknown port {port!r}")
        self.ports[port].enabled = enabled

    def _warn(self, msg: str) -> None:
        self.warnings.append(msg)
        log.warning("%s: %s", self.name, msg)

    def default_actions(self, pkt: PacketHeader) -> tuple:
        """Learning-switch behaviour on a table miss: known unicast out its port, else flood."""
        out = self.mac_table.get(pkt.dst_mac) if pkt.dst_mac != BROADCAST else None
        if out is not None:
            return () if out == pkt.in_port else (Output(out),)
        return tuple(Output(p) for p in sorted(self.ports) if p != pkt.in_port and self.ports[p].enabled)

    def receive(self, pkt: PacketHeader) -> Forwarding:
        port = self.ports.get(pkt.in_port)
        if port is None or not port.enabled:
            return Forwarding(None, [], [(pkt.in_port, pkt, "ingress port disabled")])
        self.mac_table[pkt.src_mac] = pkt.in_port
        rule = match_packet(self.table, pkt)
        actions = rule.actions if rule is not None else self.default_actions(pkt)
        emitted, discarded = [], []
        for p, h in apply_actions(self, pkt, actions):
            if self.ports[p].enabled:
                emitted.append((p, h))
            else:
                discarded.append((p, h, "egress port disabled"))
        return Forwarding(rule, emitted, discarded)


def match_packet(table: FlowTable, pkt: PacketHeader) -> FlowRule | None:
    return table.lookup(pkt)


def apply_actions(switch: SwitchModel, pkt: PacketHeader, actions: Iterable) -> list:
    """Apply ``actions`` in order; a MAC rewrite affects only later outputs."""
    out = []
    hdr = pkt
    for act in actions:
        if isinstance(act, Output):
            if act.port not in switch.ports:
                switch._warn(f"output to unknown port {act.port!r} discarded")
                continue
            out.append((act.port, replace(hdr, in_port=None)))
        elif isinstance(act, ModDstMac):
            hdr = replace(hdr, dst_mac=act.mac)
        elif isinstance(act, Drop):
            break
        else:
            raise TypeError(f"unknown action {act!r}")
    return out


def install_flow(switch: SwitchModel, rule: FlowRule) -> None:
    switch.install_flow(rule)


def delete_by_cookie(switch: SwitchModel, cookie: int, mask: int = ALL_ONES) -> int:
    return switch.delete_by_cookie(cookie, mask)


def set_port(switch: SwitchModel, port: int, enabled: bool) -> None:
    switch.set_port(port, enabled)


# -- text form ----------------------------------------------------------------

_MATCH_KEYS = ("in_port", "dl_type", "dl_src", "dl_dst", "nw_src", "nw_dst")
_MAC_RE = re.compile(r"^[0-9a-f]{2}(:[0-9a-f]{2}){5}$")


def _resolve(token: str, bindings: Mapping[str, object]):
    return bindings.get(token, token)


def _as_port(token: str, bindings) -> int:
    v = _resolve(token, bindings)
    try:
        return int(v)
    except (TypeError, ValueError):
        raise FlowModError(f"cannot resolve port {token!r}") from None


def _as_mac(token: str, bindings) -> str:
    v = str(_resolve(token, bindings)).lower()
    if not _MAC_RE.match(v):
        raise FlowModError(f"cannot resolve MAC {token!r}")
    return v


def _as_int(token: str) -> int:
    return int(token, 0)


def parse_flow_mod(text: str, bindings: Mapping[str, object] | None = None):
    """Parse one rule (``FlowRule``) or ``del-flows`` command (``DeleteFlows``)."""
    bindings = bindings or {}
    text = " ".join(text.split())
    if text.startswith("del-flows"):
        m = re.fullmatch(r"del-flows\s+(\S+)\s+cookie=(\S+?)(?:/(\S+))?", text)
        if not m:
            raise FlowModError(f"malformed del-flows: {text!r}")
        mask = ALL_ONES if m.group(3) in (None, "-1") else _as_int(m.group(3))
        return DeleteFlows(str(_resolve(m.group(1), bindings)), _as_int(m.group(2)), mask)

    head, sep, acts = text.partition("actions=")
    if not sep:
        raise FlowModError(f"missing actions= in {text!r}")
    cookie = None
    priority = DEFAULT_PRIORITY
    match: dict = {}
    for tok in filter(None, (t.strip() for t in re.split(r"[,\s]+", head))):
        key, eq, val = tok.partition("=")
        if not eq:
            raise FlowModError(f"bad match token {tok!r}")
        if key == "cookie":
            cookie = _as_int(val)
        elif key == "priority":
            priority = _as_int(val)
        elif key == "in_port":
            match["in_port"] = _as_port(val, bindings)
        elif key == "dl_type":
            match["dl_type"] = _as_int(val)
        elif key in ("dl_src", "dl_dst"):
            match[key] = _as_mac(val, bindings)
        elif key in ("nw_src", "nw_dst"):
            match[key] = str(_resolve(val, bindings))
        else:
            raise FlowModError(f"unsupported match field {key!r}")
    if cookie is None:
        raise FlowModError(f"missing cookie in {text!r}")

    actions = []
    for tok in filter(None, (t.strip() for t in acts.split(","))):
        if tok.startswith("output:"):
            actions.append(Output(_as_port(tok[7:], bindings)))
        elif tok.startswith("mod_dl_dst:"):
            actions.append(ModDstMac(_as_mac(tok[11:], bindings)))
        elif tok == "drop":
            actions.append(Drop())
        else:
            raise FlowModError(f"unsupported action {tok!r}")
    return FlowRule(cookie, Match(**match), tuple(actions), priority)


def format_flow_mod(mod, bindings: Mapping[str, object] | None = None) -> str:
    """Inverse of ``parse_flow_mod``; values bound in ``bindings`` print symbolically."""
    reverse: dict = {}
    for sym, val in (bindings or {}).items():
        kind = "port" if isinstance(val, int) else "str"
        reverse.setdefault((kind, str(val).lower() if kind == "str" else val), sym)

    def port(p):
        return reverse.get(("port", p), str(p))

    def sym(v):
        return reverse.get(("str", str(v).lower()), v)

    if isinstance(mod, DeleteFlows):
        mask = "-1" if mod.mask == ALL_ONES else hex(mod.mask)
        return f"del-flows {sym(mod.switch)} cookie={mod.cookie}/{mask}"
    parts = [f"cookie={mod.cookie}"]
    if mod.priority != DEFAULT_PRIORITY:
        parts.append(f"priority={mod.priority}")
    m = mod.match
    for key in _MATCH_KEYS:
        v = getattr(m, key)
        if v is None:
            continue
        if key == "in_port":
            v = port(v)
        elif key == "dl_type":
            v = f"0x{v:04x}"
        else:
            v = sym(v)
        parts.append(f"{key}={v}")
    acts = []
    for a in mod.actions:
        if isinstance(a, Output):
            acts.append(f"output:{port(a.port)}")
        elif isinstance(a, ModDstMac):
            acts.append(f"mod_dl_dst:{sym(a.mac)}")
        else:
            acts.append("drop")
    return ",".join(parts) + " actions=" + ",".join(acts)


@dataclass(frozen=True)
class PlanStep:
    """One numbered line of a flow-mod plan file."""

    number: int
    switch: str
    mod: object  # FlowRule | DeleteFlows


def parse_plan(text: str, bindings: Mapping[str, object] | None = None) -> list[PlanStep]:
    """Parse ``<n> add-flow <switch> <rule>`` / ``<n> del-flows <switch> cookie=..`` lines."""
    bindings = bindings or {}
    steps = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.match(r"(\d+)\s+(add-flow|del-flows)\s+(\S+)\s+(.*)$", line)
        if not m:
            raise FlowModError(f"line {lineno}: cannot parse {raw!r}")
        num, verb, sw, rest = int(m.group(1)), m.group(2), m.group(3), m.group(4)
        name = f"flow{num}"
        try:
            if verb == "del-flows":
                mod = replace(parse_flow_mod(f"del-flows {sw} {rest}", bindings), name=name)
            else:
                mod = replace(parse_flow_mod(rest, bindings), name=name)
        except FlowModError as exc:
            raise FlowModError(f"line {lineno}: {exc}") from None
        steps.append(PlanStep(num, str(_resolve(sw, bindings)), mod))
    return steps


def load_plan(name: str = "migration.flows", bindings: Mapping[str, object] | None = None) -> list[PlanStep]:
    """Load a plan shipped with the package (``migration.flows`` or ``table2.flows``)."""
    text = resources.files("tcnet.data").joinpath(name).read_text()
    return parse_plan(text, bindings)
