"""Discrete-event simulation of live transcoder migration.

Testbed: the server and transcoder 1 hang off switch 1, transcoder 2 and the
client hang off switch 2, and the two switches share one long link. Both
transcoders answer for the same IP address with different MACs. The client
tells the two streams apart by source MAC, and the switchover gap is the time
from the last old-MAC packet to the first new-MAC packet at the client.

Time is kept in integer microseconds. Events at equal timestamps run in the
order they were scheduled.
"""

from __future__ import annotations

import csv
import heapq
import io
import itertools
import json
import math
import random
import statistics
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, NamedTuple, Sequence

from .fabric import (
    ARP,
    ARP_REPLY,
    ARP_REQUEST,
    BROADCAST,
    IPV4,
    DeleteFlows,
    FlowRule,
    PacketHeader,
    Port,
    SwitchModel,
    format_flow_mod,
    load_plan,
)

US = 1_000_000
MIGRATION_TYPES = ("of", "standard", "arp-flush-of", "arp-flush-standard")


class IncompleteMigrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    link_rtt: float = 125.0  # ms, inter-switch round trip
    packet_rate: float = 100.0  # server packets/s
    output_rate: float | None = None  # transcoder packets/s; None keeps packet_rate
    arp_timeout: float = 30.0
    arp_refresh: float = 2.0  # period of the server's unicast ARP probe
    arp_retry: float = 1.0  # broadcast ARP retry while unresolved
    arp_residual_seed: int = 0
    wait1: float = 1.0
    wait2: float = 5.0
    transcoder_startup: float = 2.8
    sim_duration: float = 60.0
    migration_start: float = 1.0
    access_latency: float = 0.0001  # host <-> switch, one way
    # "switch1": controller sits at switch 1, so its commands reach switch 2
    # one link latency later. "colocated": both switches act in the same tick.
    control_path: str = "switch1"
    tail: float = 0.5  # seconds simulated after the first new-MAC packet
    overlap_threshold: int = 20

    def __post_init__(self):
        for name in ("packet_rate", "arp_timeout", "arp_refresh", "arp_retry", "sim_duration"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("link_rtt", "wait1", "wait2", "transcoder_startup", "migration_start", "access_latency", "tail"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.output_rate is not None and not 0 < self.output_rate <= self.packet_rate:
            raise ValueError("output_rate must lie in (0, packet_rate]")
        if self.control_path not in ("switch1", "colocated"):
            raise ValueError(f"unknown control_path {self.control_path!r}")

    @property
    def unsafe_switchover(self) -> bool:
        return self.wait2 < self.transcoder_startup


# -- testbed ------------------------------------------------------------------

@dataclass
class Endpoint:
    role: str
    mac: str
    ip: str
    switch: str
    port: int
    arp_cache: dict = field(default_factory=dict)  # ip -> (mac, expiry_us)
    up: bool = True


@dataclass
class TranscoderProc:
    state: str = "off"  # off | buffering | streaming
    buffer_fill_started: int | None = None
    output_rate: float = 0.0
    credit: float = 0.0


@dataclass
class Testbed:
    switches: dict
    endpoints: dict
    procs: dict
    bindings: dict
    link: tuple  # ((sw, port), (sw, port))


SERVER_IP = "10.0.0.1"
TRANSCODER_IP = "10.0.0.10"
CLIENT_IP = "10.0.0.20"
MACS = {
    "server": "02:00:00:00:00:01",
    "transcoder1": "02:00:00:00:00:11",
    "transcoder2": "02:00:00:00:00:12",
    "client": "02:00:00:00:00:21",
}


def default_testbed(config: SimConfig | None = None) -> Testbed:
    """Two switches, four hosts, transcoder 1 streaming and transcoder 2 off."""
    config = config or SimConfig()
    bindings = {
        "sw1Name": "sw1",
        "sw2Name": "sw2",
        "serverPORT": 1,
        "transcoder1PORT": 2,
        "sw1LinkPORT": 3,
        "sw2LinkPORT": 4,
        "transcoder2PORT": 5,
        "clientPORT": 6,
        "serverIP": SERVER_IP,
        "transcoderIP": TRANSCODER_IP,
        "clientIP": CLIENT_IP,
        "serverMAC": MACS["server"],
        "transcoder1MAC": MACS["transcoder1"],
        "transcoder2MAC": MACS["transcoder2"],
        "clientMAC": MACS["client"],
    }
    b = bindings
    sw1 = SwitchModel(
        "sw1",
        {b["serverPORT"]: Port(True, "server"), b["transcoder1PORT"]: Port(True, "transcoder1"), b["sw1LinkPORT"]: Port(True, "sw2")},
        {MACS["server"]: 1, MACS["transcoder1"]: 2, MACS["transcoder2"]: 3, MACS["client"]: 3},
    )
    sw2 = SwitchModel(
        "sw2",
        {b["sw2LinkPORT"]: Port(True, "sw1"), b["transcoder2PORT"]: Port(False, "transcoder2"), b["clientPORT"]: Port(True, "client")},
        {MACS["server"]: 4, MACS["transcoder1"]: 4, MACS["transcoder2"]: 5, MACS["client"]: 6},
    )
    endpoints = {
        "server": Endpoint("server", MACS["server"], SERVER_IP, "sw1", b["serverPORT"]),
        "transcoder1": Endpoint("transcoder1", MACS["transcoder1"], TRANSCODER_IP, "sw1", b["transcoder1PORT"]),
        "transcoder2": Endpoint("transcoder2", MACS["transcoder2"], TRANSCODER_IP, "sw2", b["transcoder2PORT"], up=False),
        "client": Endpoint("client", MACS["client"], CLIENT_IP, "sw2", b["clientPORT"]),
    }
    out_rate = config.output_rate or config.packet_rate
    procs = {
        "transcoder1": TranscoderProc("streaming", 0, out_rate),
        "transcoder2": TranscoderProc("off", None, out_rate),
    }
    for name in ("transcoder1", "transcoder2"):
        endpoints[name].arp_cache[CLIENT_IP] = (MACS["client"], math.inf)
    return Testbed({"sw1": sw1, "sw2": sw2}, endpoints, procs, bindings, (("sw1", 3), ("sw2", 4)))


# -- trace --------------------------------------------------------------------

class Event(NamedTuple):
    t_us: int
    kind: str
    where: str
    detail: dict


@dataclass
class MigrationTrace:
    events: list = field(default_factory=list)
    client_log: list = field(default_factory=list)  # (t_us, src_mac, seq)
    meta: dict = field(default_factory=dict)
    in_flight: list = field(default_factory=list)  # copy ids still travelling at the end

    def to_jsonl(self) -> str:
        lines = []
        for ev in self.events:
            detail = {k: (_hdr_dict(v) if isinstance(v, PacketHeader) else v) for k, v in ev.detail.items()}
            lines.append(json.dumps({"t_us": ev.t_us, "kind": ev.kind, "where": ev.where, "detail": detail}, sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")

    def client_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t_us", "src_mac", "seq"))
        w.writerows(self.client_log)
        return buf.getvalue()

    def packet_deltas(self) -> list:
        """(t_us, delta_us, src_mac) between consecutive client packets."""
        log = self.client_log
        return [(log[i][0], log[i][0] - log[i - 1][0], log[i][1]) for i in range(1, len(log))]


def _hdr_dict(h: PacketHeader) -> dict:
    d = asdict(h)
    d["eth_type"] = f"0x{h.eth_type:04x}"
    return d


@dataclass(frozen=True)
class GapReport:
    gap: float  # s; inf when the new stream never arrived
    overlap_packets: int
    max_interpacket_delta: float  # s
    last_old_us: int | None = None
    first_new_us: int | None = None
    note: str = ""

    def __post_init__(self):
        if self.gap < 0 and self.overlap_packets == 0:
            raise ValueError("negative gap without overlap")


def measure_gap(trace: MigrationTrace, old_mac: str | None = None, new_mac: str | None = None) -> GapReport:
    """Gap between the last old-transcoder and first new-transcoder packet at the client."""
    old_mac = old_mac or trace.meta.get("old_mac", MACS["transcoder1"])
    new_mac = new_mac or trace.meta.get("new_mac", MACS["transcoder2"])
    log = trace.client_log
    old_t = [t for t, mac, _ in log if mac == old_mac]
    new_t = [t for t, mac, _ in log if mac == new_mac]
    if not old_t or not new_t:
        seen = "old" if old_t else "new" if new_t else "no"
        raise IncompleteMigrationError(f"client log holds {seen} transcoder packets only")
    first_new = new_t[0]
    last_old = old_t[-1]
    overlap = sum(1 for t in old_t if t > first_new)
    deltas = [log[i][0] - log[i - 1][0] for i in range(1, len(log))]
    return GapReport(
        gap=(first_new - last_old) / US,
        overlap_packets=overlap,
        max_interpacket_delta=max(deltas, default=0) / US,
        last_old_us=last_old,
        first_new_us=first_new,
    )


def _gap_or_inf(trace: MigrationTrace) -> GapReport:
    try:
        return measure_gap(trace)
    except IncompleteMigrationError as exc:
        return GapReport(math.inf, 0, 0.0, note=str(exc))


# -- simulator ----------------------------------------------------------------

class Simulation:
    def __init__(self, config: SimConfig, testbed: Testbed):
        self.config = config
        self.tb = testbed
        self.now = 0
        self._queue: list = []
        self._order = itertools.count()
        self._copy = itertools.count(1)
        self._flying: dict = {}
        self._stopped = False
        self.trace = MigrationTrace()
        self.rng = random.Random(config.arp_residual_seed)
        self.link_us = round(config.link_rtt * 1000 / 2)
        self.access_us = round(config.access_latency * US)
        self.interval_us = round(US / config.packet_rate)
        self.stop_at: int | None = None
        self.new_mac = MACS["transcoder2"]
        self._arp_pending = False
        self._seq = 0
        self._stop_on_new = False
        self.trace.meta.update(old_mac=MACS["transcoder1"], new_mac=self.new_mac)

    # event plumbing
    def at(self, t_us: int, fn: Callable, *args) -> None:
        heapq.heappush(self._queue, (t_us, next(self._order), fn, args))

    def log(self, kind: str, where: str, **detail) -> None:
        self.trace.events.append(Event(self.now, kind, where, detail))

    def run(self, until_us: int) -> MigrationTrace:
        q = self._queue
        while q and not self._stopped:
            t, _, fn, args = q[0]
            if t > until_us or (self.stop_at is not None and t > self.stop_at):
                break
            heapq.heappop(q)
            self.now = t
            fn(*args)
        self.trace.in_flight = sorted(self._flying)
        self.trace.meta["end_us"] = self.now
        self.trace.meta["final_tables"] = {
            name: [_rule_text(r, self.tb.bindings) for r in sw.table] for name, sw in self.tb.switches.items()
        }
        self.trace.meta["final_flow_names"] = {
            name: sorted((r.name or "?") for r in sw.table) for name, sw in self.tb.switches.items()
        }
        self.trace.meta["warnings"] = [w for sw in self.tb.switches.values() for w in sw.warnings]
        return self.trace

    # wire
    def _launch(self, hdr: PacketHeader, parent: int | None, kind: str, where: str, dest: tuple, delay: int) -> None:
        cid = next(self._copy)
        self._flying[cid] = True
        self.log(kind, where, copy=cid, parent=parent, pkt=hdr)
        self.at(self.now + delay, self._arrive, cid, hdr, dest)

    def send(self, ep_name: str, hdr: PacketHeader) -> None:
        ep = self.tb.endpoints[ep_name]
        self._launch(hdr, None, "tx", ep_name, ("switch", ep.switch, ep.port), self.access_us)

    def _arrive(self, cid: int, hdr: PacketHeader, dest: tuple) -> None:
        del self._flying[cid]
        if dest[0] == "switch":
            self._switch_in(cid, dest[1], replace(hdr, in_port=dest[2]))
        else:
            self._endpoint_in(cid, dest[1], hdr)

    def _peer(self, sw_name: str, port: int) -> tuple:
        (s1, p1), (s2, p2) = self.tb.link
        if (sw_name, port) == (s1, p1):
            return ("switch", s2, p2), self.link_us
        if (sw_name, port) == (s2, p2):
            return ("switch", s1, p1), self.link_us
        return ("endpoint", self.tb.switches[sw_name].ports[port].peer), self.access_us

    def _switch_in(self, cid: int, sw_name: str, hdr: PacketHeader) -> None:
        sw = self.tb.switches[sw_name]
        res = sw.receive(hdr)
        rule = res.rule.name if res.rule is not None else None
        if res.discarded and res.discarded[0][2] == "ingress port disabled":
            self.log("discard", sw_name, copy=cid, reason="ingress port disabled", pkt=hdr)
            return
        self.log("switch", sw_name, copy=cid, rule=rule, out=[p for p, _ in res.emitted])
        for port, _, reason in res.discarded:
            self.log("discard", sw_name, parent=cid, port=port, reason=reason, pkt=hdr)
        if res.dropped:
            self.log("drop", sw_name, copy=cid, rule=rule, pkt=hdr)
        for port, out in res.emitted:
            dest, delay = self._peer(sw_name, port)
            self._launch(out, cid, "fwd", sw_name, dest, delay)

    def _endpoint_in(self, cid: int, name: str, hdr: PacketHeader) -> None:
        ep = self.tb.endpoints[name]
        if not ep.up:
            self.log("discard", name, copy=cid, reason="endpoint down", pkt=hdr)
            return
        self.log("rx", name, copy=cid, pkt=hdr)
        if hdr.eth_type == ARP:
            self._handle_arp(ep, hdr)
        elif name == "client":
            if hdr.src_ip == TRANSCODER_IP:
                self.trace.client_log.append((self.now, hdr.src_mac, hdr.seq))
                if hdr.src_mac == self.new_mac and self.stop_at is None and self._stop_on_new:
                    self.stop_at = self.now + round(self.config.tail * US)
        elif name in self.tb.procs:
            self._transcode(name, ep, hdr)

    # hosts
    def _handle_arp(self, ep: Endpoint, hdr: PacketHeader) -> None:
        if hdr.arp_op == ARP_REQUEST and hdr.dst_ip == ep.ip:
            if ep.role in self.tb.procs and self.tb.procs[ep.role].state == "off":
                return
            reply = PacketHeader(None, ARP, ep.mac, hdr.src_mac, ep.ip, hdr.src_ip, arp_op=ARP_REPLY)
            self.send(ep.role, reply)
        elif hdr.arp_op == ARP_REPLY and hdr.dst_ip == ep.ip:
            expiry = self.now + round(self.config.arp_timeout * US)
            ep.arp_cache[hdr.src_ip] = (hdr.src_mac, expiry)
            if ep.role == "server":
                self._arp_pending = False
                self.log("arp_update", ep.role, ip=hdr.src_ip, mac=hdr.src_mac, expiry_us=expiry)

    def _server_lookup(self) -> str | None:
        server = self.tb.endpoints["server"]
        entry = server.arp_cache.get(TRANSCODER_IP)
        if entry is not None and self.now >= entry[1]:
            del server.arp_cache[TRANSCODER_IP]
            self.log("arp_expire", "server", ip=TRANSCODER_IP, mac=entry[0])
            entry = None
        return entry[0] if entry else None

    def _arp_broadcast(self) -> None:
        if self._server_lookup() is not None:
            self._arp_pending = False
            return
        server = self.tb.endpoints["server"]
        req = PacketHeader(None, ARP, server.mac, BROADCAST, server.ip, TRANSCODER_IP, arp_op=ARP_REQUEST)
        self.send("server", req)
        self.at(self.now + round(self.config.arp_retry * US), self._arp_broadcast)

    def _server_tick(self) -> None:
        seq = self._seq
        self._seq += 1
        self.at(self.now + self.interval_us, self._server_tick)
        mac = self._server_lookup()
        if mac is None:
            self.log("discard", "server", reason="arp unresolved", seq=seq)
            if not self._arp_pending:
                self._arp_pending = True
                self._arp_broadcast()
            return
        server = self.tb.endpoints["server"]
        self.send("server", PacketHeader(None, IPV4, server.mac, mac, server.ip, TRANSCODER_IP, seq, "source"))

    def _arp_probe(self) -> None:
        self.at(self.now + round(self.config.arp_refresh * US), self._arp_probe)
        mac = self._server_lookup()
        if mac is None:
            return
        server = self.tb.endpoints["server"]
        self.send("server", PacketHeader(None, ARP, server.mac, mac, server.ip, TRANSCODER_IP, arp_op=ARP_REQUEST))

    def _transcode(self, name: str, ep: Endpoint, hdr: PacketHeader) -> None:
        if hdr.eth_type != IPV4 or hdr.dst_mac != ep.mac or hdr.dst_ip != ep.ip:
            return
        proc = self.tb.procs[name]
        if proc.state == "off":
            return
        if proc.state == "buffering":
            if proc.buffer_fill_started is None:
                proc.buffer_fill_started = self.now
                self.log("state", name, state="buffering", first_input=True)
                self.at(self.now + round(self.config.transcoder_startup * US), self._start_streaming, name)
            return
        proc.credit += proc.output_rate / self.config.packet_rate
        if proc.credit >= 1 - 1e-9:
            proc.credit -= 1
            client_mac, _ = ep.arp_cache[CLIENT_IP]
            self.send(name, PacketHeader(None, IPV4, ep.mac, client_mac, ep.ip, CLIENT_IP, hdr.seq, "transcoded"))

    def _start_streaming(self, name: str) -> None:
        proc = self.tb.procs[name]
        if proc.state == "buffering":
            proc.state = "streaming"
            self.log("state", name, state="streaming")

    def set_transcoder(self, name: str, on: bool) -> None:
        proc = self.tb.procs[name]
        ep = self.tb.endpoints[name]
        ep.up = on
        proc.state = "buffering" if on else "off"
        proc.buffer_fill_started = None
        proc.credit = 0.0
        self.log("state", name, state=proc.state)

    # control actions
    def set_port(self, sw_name: str, port: int, enabled: bool) -> None:
        self.tb.switches[sw_name].set_port(port, enabled)
        self.log("port", sw_name, port=port, enabled=enabled)

    def apply_mod(self, sw_name: str, mod) -> None:
        sw = self.tb.switches.get(sw_name)
        if sw is None:
            self.log("abort", sw_name, reason=f"unknown switch for {mod.name}")
            self._stopped = True
            return
        if isinstance(mod, DeleteFlows):
            removed = sw.delete_by_cookie(mod.cookie, mod.mask)
            self.log("flow_del", sw_name, flow=mod.name, cookie=mod.cookie, removed=removed)
        else:
            bad = [a.port for a in mod.actions if hasattr(a, "port") and a.port not in sw.ports]
            if bad or (mod.match.in_port is not None and mod.match.in_port not in sw.ports):
                self.log("abort", sw_name, reason=f"{mod.name} references ports missing on {sw_name}")
                self._stopped = True
                return
            sw.install_flow(mod)
            self.log("flow_add", sw_name, flow=mod.name, rule=_rule_text(mod, self.tb.bindings))

    def control_delay(self, sw_name: str) -> int:
        if self.config.control_path == "switch1" and sw_name != "sw1":
            return self.link_us
        return 0

    def batch(self, t_us: int, sw_name: str, actions: Sequence[Callable[[], None]]) -> None:
        """Run ``actions`` atomically on one switch once the command reaches it."""

        def go():
            for act in actions:
                act()

        self.at(t_us + self.control_delay(sw_name), go)

    def start(self, stop_on_new: bool = False) -> None:
        self._stop_on_new = stop_on_new
        phase = self.rng.randrange(self.interval_us)
        probe_phase = self.rng.randrange(max(1, round(self.config.arp_refresh * US)))
        server = self.tb.endpoints["server"]
        server.arp_cache[TRANSCODER_IP] = (MACS["transcoder1"], round(self.config.arp_timeout * US))
        self.at(phase, self._server_tick)
        self.at(probe_phase, self._arp_probe)
        if self.config.unsafe_switchover:
            self.trace.meta["unsafe_switchover"] = True
            self.log("warning", "sim", reason="wait2 shorter than transcoder startup")


def _rule_text(rule: FlowRule, bindings: dict) -> str:
    return format_flow_mod(rule, bindings)


def _plan_by_number(bindings: dict, plan: str = "migration.flows") -> dict:
    return {step.number: step for step in load_plan(plan, bindings)}


# -- runs ---------------------------------------------------------------------

def run_stream(config: SimConfig, testbed: Testbed | None = None) -> MigrationTrace:
    """Steady streaming through transcoder 1 for ``sim_duration`` seconds."""
    sim = Simulation(config, testbed or default_testbed(config))
    sim.start()
    trace = sim.run(round(config.sim_duration * US))
    trace.meta["type"] = "stream"
    return trace


def run_of_migration(
    config: SimConfig,
    testbed: Testbed | None = None,
    *,
    flush_arp: bool = False,
    plan: str = "migration.flows",
) -> tuple[MigrationTrace, GapReport]:
    """Flow-assisted migration from transcoder 1 to transcoder 2.

    Stage 1 starts transcoder 2 and opens its port; after ``wait1`` the
    duplication/redirect rules go in (flows 1-2 on switch 1, 3-6 on switch 2);
    after ``wait2`` switch 1 cuts transcoder 1, installs flow 9 and deletes
    cookie 9998 while switch 2 installs flow 7 and deletes cookie 9997.
    With ``flush_arp`` the server's ARP cache is flushed once the redirect
    rules are live.
    """
    tb = testbed or default_testbed(config)
    sim = Simulation(config, tb)
    sim.start(stop_on_new=True)
    steps = _plan_by_number(tb.bindings, plan)
    b = tb.bindings
    t0 = round(config.migration_start * US)
    t3 = t0 + round(config.wait1 * US)
    t5 = t3 + round(config.wait2 * US)

    def stage(n):
        return lambda: sim.log("stage", "controller", stage=n)

    def mod(n):
        return lambda: sim.apply_mod(steps[n].switch, steps[n].mod)

    sim.at(t0, stage(1))
    sim.at(t0, sim.set_transcoder, "transcoder2", True)
    sim.batch(t0, "sw2", [lambda: sim.set_port("sw2", b["transcoder2PORT"], True)])
    sim.at(t0, stage(2))
    sim.at(t3, stage(3))
    sim.batch(t3, "sw1", [mod(1), mod(2)])
    sim.batch(t3, "sw2", [mod(3), mod(4), mod(5), mod(6)])
    if flush_arp:
        sim.at(t3 + sim.control_delay("sw2"), _flush_server_arp, sim)
    sim.at(t3, stage(4))
    sim.at(t5, stage(5))
    sim.batch(
        t5,
        "sw1",
        [
            lambda: sim.set_transcoder("transcoder1", False),
            lambda: sim.set_port("sw1", b["transcoder1PORT"], False),
            mod(9),
            mod(10),
        ],
    )
    sim.batch(t5, "sw2", [mod(7), mod(8), lambda: sim.log("switchover", "sw2")])
    trace = sim.run(round(config.sim_duration * US))
    trace.meta.update(type="arp-flush-of" if flush_arp else "of", stage5_us=t5, stage3_us=t3)
    return trace, _gap_or_inf(trace)


def _flush_server_arp(sim: Simulation) -> None:
    sim.tb.endpoints["server"].arp_cache.clear()
    sim.log("arp_flush", "server")


def run_standard_migration(
    config: SimConfig,
    testbed: Testbed | None = None,
    flush_arp: bool = False,
    residual: float | None = None,
) -> tuple[MigrationTrace, GapReport]:
    """Stop-and-start migration with no flow assistance.

    Transcoder 1 dies and transcoder 2 starts at ``migration_start``. The
    server keeps addressing the dead MAC until its ARP entry expires after a
    residual lifetime drawn uniformly from ``[0, arp_timeout)`` (or the fixed
    ``residual`` seconds when given), or re-ARPs at once when ``flush_arp``
    is set.
    """
    tb = testbed or default_testbed(config)
    sim = Simulation(config, tb)
    sim.start(stop_on_new=True)
    b = tb.bindings
    t0 = round(config.migration_start * US)
    drawn = sim.rng.random() * config.arp_timeout
    residual = drawn if residual is None else residual

    def migrate():
        sim.log("stage", "operator", stage="kill-and-start")
        sim.set_transcoder("transcoder1", False)
        sim.set_port("sw1", b["transcoder1PORT"], False)
        sim.set_transcoder("transcoder2", True)
        sim.set_port("sw2", b["transcoder2PORT"], True)
        server = tb.endpoints["server"]
        if flush_arp:
            _flush_server_arp(sim)
        elif TRANSCODER_IP in server.arp_cache:
            mac, _ = server.arp_cache[TRANSCODER_IP]
            expiry = sim.now + round(residual * US)
            server.arp_cache[TRANSCODER_IP] = (mac, expiry)
            sim.log("arp_residual", "server", residual_s=residual, expiry_us=expiry)

    sim.at(t0, migrate)
    trace = sim.run(round(config.sim_duration * US))
    trace.meta.update(type="arp-flush-standard" if flush_arp else "standard", residual_s=0.0 if flush_arp else residual)
    return trace, _gap_or_inf(trace)


def run_migration(kind: str, config: SimConfig) -> tuple[MigrationTrace, GapReport]:
    if kind == "of":
        return run_of_migration(config)
    if kind == "arp-flush-of":
        return run_of_migration(config, flush_arp=True)
    if kind == "standard":
        return run_standard_migration(config)
    if kind == "arp-flush-standard":
        return run_standard_migration(config, flush_arp=True)
    raise ValueError(f"unknown migration type {kind!r}")


# -- invariants -----------------------------------------------------------------

def conservation_violations(trace: MigrationTrace) -> list[str]:
    """Every packet copy put on a wire must be consumed exactly once or still be in flight."""
    created, consumed = {}, {}
    for ev in trace.events:
        cid = ev.detail.get("copy")
        if cid is None:
            continue
        if ev.kind in ("tx", "fwd"):
            created[cid] = created.get(cid, 0) + 1
        elif ev.kind in ("rx", "switch", "discard"):
            consumed[cid] = consumed.get(cid, 0) + 1
    problems = []
    flying = set(trace.in_flight)
    for cid, n in created.items():
        if n != 1:
            problems.append(f"copy {cid} created {n} times")
        used = consumed.get(cid, 0)
        if used + (cid in flying) != 1:
            problems.append(f"copy {cid} consumed {used} times (in flight: {cid in flying})")
    for cid in consumed:
        if cid not in created:
            problems.append(f"copy {cid} consumed but never created")
    return problems


def migration_violations(trace: MigrationTrace, threshold: int | None = None) -> list[str]:
    """Check a flow-assisted run against the migration invariants; empty means clean."""
    problems = []
    threshold = trace.meta.get("overlap_threshold", 20) if threshold is None else threshold
    new_mac, old_mac = trace.meta["new_mac"], trace.meta["old_mac"]
    switchover = next((e.t_us for e in trace.events if e.kind == "switchover"), None)
    t1_down = next(
        (e.t_us for e in trace.events if e.kind == "port" and e.where == "sw1" and not e.detail["enabled"]), None
    )
    if switchover is None or t1_down is None:
        return ["migration did not reach stage 5"]
    early = [t for t, mac, _ in trace.client_log if mac == new_mac and t < switchover]
    if early:
        problems.append(f"{len(early)} new-transcoder packets reached the client before switchover")
    try:
        report = measure_gap(trace)
        if report.overlap_packets > threshold:
            problems.append(f"overlap {report.overlap_packets} exceeds {threshold} packets")
    except IncompleteMigrationError as exc:
        problems.append(str(exc))
    for sw, rules in trace.meta["final_tables"].items():
        if any("mod_dl_dst" in r for r in rules):
            problems.append(f"{sw} still rewrites headers after migration")
    arp_ok = [e.t_us for e in trace.events if e.kind == "arp_update" and e.detail["mac"] == new_mac]
    if not arp_ok or arp_ok[0] >= t1_down:
        problems.append("server ARP did not point at the new transcoder before transcoder 1 was cut")
    survivors = sorted(n for names in trace.meta["final_flow_names"].values() for n in names)
    if survivors != ["flow4", "flow5", "flow7", "flow9"]:
        problems.append(f"unexpected surviving flows {survivors}")
    problems.extend(duplicate_mac_violations(trace))
    problems.extend(conservation_violations(trace))
    return problems


def duplicate_mac_violations(trace: MigrationTrace) -> list[str]:
    """No MAC may be sourced by two different hosts during the run."""
    seen: dict = {}
    for ev in trace.events:
        if ev.kind == "tx":
            seen.setdefault(ev.detail["pkt"].src_mac, set()).add(ev.where)
    return [f"MAC {mac} sent from {sorted(who)}" for mac, who in seen.items() if len(who) > 1]


def dual_feed_ok(trace: MigrationTrace) -> bool:
    """While the duplication rules are live, both transcoders receive the server stream."""
    t_start = next(e.t_us for e in trace.events if e.kind == "flow_add" and e.detail["flow"] == "flow4")
    t_end = trace.meta["stage5_us"]
    got = {"transcoder1": 0, "transcoder2": 0}
    for ev in trace.events:
        if ev.kind == "rx" and ev.where in got and t_start < ev.t_us < t_end:
            if ev.detail["pkt"].eth_type == IPV4:
                got[ev.where] += 1
    return all(n > 0 for n in got.values())


# -- sweeps ---------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    type: str
    mean: float
    ci95: float
    min: float
    max: float
    n: int
    degenerate: bool = False
    link_rtt: float = 0.0
    kind: str = ""

    def csv_row(self) -> dict:
        return {
            "type": self.type,
            "mean": f"{self.mean:.6f}",
            "ci95": f"{self.ci95:.6f}",
            "min": f"{self.min:.6f}",
            "max": f"{self.max:.6f}",
        }


SWEEP_CSV_FIELDS = ("type", "mean", "ci95", "min", "max")


def summarize(label: str, gaps: Sequence[float], **extra) -> SweepRow:
    """Mean, normal-approximation 95% half-width, min and max of ``gaps``."""
    n = len(gaps)
    mean = statistics.fmean(gaps)
    if n < 2:
        return SweepRow(label, mean, 0.0, min(gaps), max(gaps), n, True, **extra)
    half = 1.96 * statistics.stdev(gaps) / math.sqrt(n)
    return SweepRow(label, mean, half, min(gaps), max(gaps), n, False, **extra)


def sweep(
    configs: Iterable[SimConfig],
    repetitions: int,
    types: Sequence[str] = MIGRATION_TYPES,
    base_seed: int = 0,
    on_run: Callable | None = None,
) -> list[SweepRow]:
    """Run every (type, config) cell ``repetitions`` times with seeds ``base_seed + rep``."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    rows = []
    for config in configs:
        for kind in types:
            gaps = []
            for rep in range(repetitions):
                cfg = replace(config, arp_residual_seed=base_seed + rep)
                trace, report = run_migration(kind, cfg)
                gaps.append(report.gap)
                if on_run is not None:
                    on_run(kind, cfg, trace, report)
            rows.append(summarize(f"{config.link_rtt:g}ms {kind}", gaps, link_rtt=config.link_rtt, kind=kind))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], fh) -> None:
    w = csv.DictWriter(fh, fieldnames=SWEEP_CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in sorted(rows, key=lambda r: r.type):
        w.writerow(row.csv_row())


__all__ = [
    "MIGRATION_TYPES",
    "SimConfig",
    "Endpoint",
    "TranscoderProc",
    "Testbed",
    "MigrationTrace",
    "GapReport",
    "IncompleteMigrationError",
    "default_testbed",
    "run_stream",
    "run_of_migration",
    "run_standard_migration",
    "run_migration",
    "measure_gap",
    "sweep",
    "summarize",
    "write_sweep_csv",
    "migration_violations",
    "conservation_violations",
    "dual_feed_ok",
]
