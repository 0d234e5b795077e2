"""Declarative scenarios: parse, validate, and run them on a fresh ledger.

A scenario is a TOML document.  Argument values inside ``[[tx]]`` tables may
use three kinds of reference:

* ``"@label"``     the address of a funded account (``"@committee"`` is the whole committee),
* ``"$name"``      the address of a contract created by the tx called ``name``,
* ``"#name"``      the id of a circuit registered under ``name``.

See README.md for the full format.
"""

from __future__ import annotations

import random
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import circuit as circ
from . import fixtures
from .engine.party import ACTIVATION_POINTS, FaultBehavior, FaultSpec
from .ledger import Ledger, LedgerConfig, eoa_address
from .netsim import Simulation, TxIntent


class ScenarioInvalid(ValueError):
    """Raised with a ``field`` path (and ``line`` when the TOML itself is malformed)."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field, self.line = field, line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(field)
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


@dataclass
class TxSpec:
    name: Optional[str]
    sender: str
    create: Optional[str] = None
    target: Optional[str] = None
    method: Optional[str] = None
    args: list = field(default_factory=list)
    value: int = 0
    gas_limit: int = 100_000
    at: Optional[int] = None
    after: Optional[str] = None
    during: Optional[str] = None
    repeat: int = 1


@dataclass
class Scenario:
    name: str
    seed: int
    n: int
    t: int
    labels: list
    circuits: dict  # name -> (builder, args)
    accounts: dict  # label -> balance
    inputs: dict  # circuit name -> per-party values
    txs: list
    faults: list  # (FaultSpec, at_tick or None)
    expects: list
    latency: object = 1
    block_interval: int = 10
    block_capacity: int = 200
    dispute_timeout: int = 2
    sync: bool = False
    blocks: Optional[int] = None
    max_blocks: int = 3000
    block_seconds: int = 12
    max_parallel_mults: int = 4
    stream: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    def replace(self, **kw) -> "Scenario":
        import dataclasses
        return dataclasses.replace(self, **kw)


# ---------------------------------------------------------------- parsing

def _req(d, key, path, kind=None):
    if key not in d:
        raise ScenarioInvalid("missing required field", f"{path}.{key}" if path else key)
    return _typed(d[key], kind, f"{path}.{key}" if path else key)


def _opt(d, key, path, default, kind=None):
    if key not in d:
        return default
    return _typed(d[key], kind, f"{path}.{key}" if path else key)


def _typed(v, kind, path):
    if kind is None:
        return v
    if kind is int and (isinstance(v, bool) or not isinstance(v, int)):
        raise ScenarioInvalid(f"expected an integer, got {v!r}", path)
    if kind is not int and not isinstance(v, kind):
        raise ScenarioInvalid(f"expected {kind.__name__}, got {type(v).__name__}", path)
    return v


def loads(text: str, name: str = "<string>") -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        line = getattr(e, "lineno", None)
        if line is None:
            import re
            m = re.search(r"line (\d+)", str(e))
            line = int(m.group(1)) if m else None
        raise ScenarioInvalid(str(e), None, line) from None
    doc.setdefault("name", Path(name).stem)
    return from_dict(doc)


def load(path) -> Scenario:
    p = Path(path)
    if not p.exists():
        bundled = resources.files("mpcevm.scenarios").joinpath(p.name if p.suffix else p.name + ".toml")
        if not bundled.is_file():
            raise ScenarioInvalid(f"no such scenario file: {path}")
        return loads(bundled.read_text(), p.stem)
    return loads(p.read_text(), p.stem)


def bundled_names() -> list:
    return sorted(f.name[:-5] for f in resources.files("mpcevm.scenarios").iterdir() if f.name.endswith(".toml"))


def from_dict(doc: dict) -> Scenario:
    name = _opt(doc, "name", "", "scenario", str)
    seed = _opt(doc, "seed", "", 0, int)
    parties = _req(doc, "parties", "", dict)
    n = _req(parties, "n", "parties", int)
    t = _req(parties, "t", "parties", int)
    if t < 0 or n < 3 * t + 1:
        raise ScenarioInvalid(f"need n >= 3t+1, got n={n}, t={t}", "parties")
    labels = _opt(parties, "labels", "parties", [f"p{i}" for i in range(n)], list)
    if len(labels) != n or len(set(labels)) != n:
        raise ScenarioInvalid("labels must be n distinct names", "parties.labels")

    net = _opt(doc, "network", "", {}, dict)
    latency = net.get("latency", 1)
    if isinstance(latency, dict):
        lat = {"default": int(latency.get("default", 1))}
        for k, v in latency.items():
            if k == "default":
                continue
            try:
                a, b = (int(x) for x in k.split("-"))
            except ValueError:
                raise ScenarioInvalid(f"link key must look like 'i-j', got {k!r}", "network.latency") from None
            lat[(a, b)] = int(v)
        latency = lat
    elif not isinstance(latency, int) or latency < 0:
        raise ScenarioInvalid("latency must be a non-negative integer or a table", "network.latency")

    chain = _opt(doc, "chain", "", {}, dict)
    run = _opt(doc, "run", "", {}, dict)

    circuits = {}
    for i, c in enumerate(_opt(doc, "circuits", "", [], list)):
        path = f"circuits[{i}]"
        builder = _req(c, "builder", path, str)
        if builder not in circ.BUILDERS:
            raise ScenarioInvalid(f"unknown builder {builder!r}; have {sorted(circ.BUILDERS)}", path + ".builder")
        cname = _opt(c, "name", path, builder, str)
        circuits[cname] = (builder, list(_opt(c, "args", path, [], list)))

    accounts = {}
    for i, a in enumerate(_opt(doc, "accounts", "", [], list)):
        path = f"accounts[{i}]"
        accounts[_req(a, "label", path, str)] = _opt(a, "balance", path, 10**12, int)
    for lab in labels:
        accounts.setdefault(lab, 10**12)

    inputs = {}
    for i, inp in enumerate(_opt(doc, "inputs", "", [], list)):
        path = f"inputs[{i}]"
        cname = _req(inp, "circuit", path, str)
        if cname not in circuits:
            raise ScenarioInvalid(f"unknown circuit {cname!r}", path + ".circuit")
        values = _req(inp, "values", path, list)
        if len(values) > n:
            raise ScenarioInvalid(f"{len(values)} input rows for {n} parties", path + ".values")
        inputs[cname] = [list(v) if isinstance(v, list) else [v] for v in values]

    txs = []
    for i, tx in enumerate(_opt(doc, "tx", "", [], list)):
        path = f"tx[{i}]"
        spec = TxSpec(
            name=_opt(tx, "name", path, None, str), sender=_req(tx, "sender", path, str),
            create=_opt(tx, "create", path, None, str), target=_opt(tx, "target", path, None, str),
            method=_opt(tx, "method", path, None, str), args=list(_opt(tx, "args", path, [], list)),
            value=_opt(tx, "value", path, 0, int), gas_limit=_opt(tx, "gas_limit", path, 100_000, int),
            at=_opt(tx, "at", path, None, int), after=_opt(tx, "after", path, None, str),
            during=_opt(tx, "during", path, None, str), repeat=_opt(tx, "repeat", path, 1, int))
        if spec.sender not in accounts:
            raise ScenarioInvalid(f"unknown sender {spec.sender!r}", path + ".sender")
        if (spec.create is None) == (spec.target is None):
            raise ScenarioInvalid("exactly one of 'create' and 'target' is required", path)
        if spec.create is not None and spec.create not in fixtures.FILES:
            raise ScenarioInvalid(f"unknown fixture {spec.create!r}", path + ".create")
        if sum(x is not None for x in (spec.at, spec.after, spec.during)) > 1:
            raise ScenarioInvalid("use at most one of 'at', 'after', 'during'", path)
        if spec.repeat < 1:
            raise ScenarioInvalid("repeat must be >= 1", path + ".repeat")
        txs.append(spec)
    names = [s.name for s in txs if s.name]
    if len(names) != len(set(names)):
        raise ScenarioInvalid("tx names must be unique", "tx")
    for i, s in enumerate(txs):
        for key in ("after", "during"):
            ref = getattr(s, key)
            if ref is not None and ref not in names:
                raise ScenarioInvalid(f"refers to unknown tx {ref!r}", f"tx[{i}].{key}")

    faults = []
    for i, f in enumerate(_opt(doc, "faults", "", [], list)):
        path = f"faults[{i}]"
        party = _req(f, "party", path, int)
        if not 0 <= party < n:
            raise ScenarioInvalid(f"party {party} outside 0..{n - 1}", path + ".party")
        try:
            behavior = FaultBehavior(_req(f, "behavior", path, str))
        except ValueError:
            raise ScenarioInvalid(f"unknown behavior; have {[b.value for b in FaultBehavior]}",
                                  path + ".behavior") from None
        act = _opt(f, "activation", path, None, str)
        if act is not None and act not in ACTIVATION_POINTS[behavior]:
            raise ScenarioInvalid(f"{behavior.value} has activation points {ACTIVATION_POINTS[behavior]}",
                                  path + ".activation")
        faults.append((FaultSpec(party, behavior, act), _opt(f, "at_tick", path, None, int)))
    if len({f.party for f, _ in faults}) > t:
        raise ScenarioInvalid(f"more than t={t} faulty parties", "faults")

    expects = []
    for i, e in enumerate(_opt(doc, "expect", "", [], list)):
        path = f"expect[{i}]"
        kind = _req(e, "kind", path, str)
        if kind not in ("receipt", "outcome", "storage", "result", "oracle", "balance"):
            raise ScenarioInvalid(f"unknown expectation kind {kind!r}", path + ".kind")
        if kind in ("receipt", "outcome", "result") and e.get("tx") not in names:
            raise ScenarioInvalid(f"expectation refers to unknown tx {e.get('tx')!r}", path + ".tx")
        expects.append(dict(e))

    stream = dict(_opt(doc, "workload", "", {}, dict))
    sc = Scenario(
        name=name, seed=seed, n=n, t=t, labels=list(labels), circuits=circuits, accounts=accounts,
        inputs=inputs, txs=txs, faults=faults, expects=expects, latency=latency,
        block_interval=_opt(net, "block_interval", "network", 10, int),
        block_capacity=_opt(net, "block_capacity", "network", 200, int),
        dispute_timeout=_opt(net, "dispute_timeout", "network", 2, int),
        sync=_opt(net, "sync", "network", False, bool),
        blocks=_opt(run, "blocks", "run", None, int), max_blocks=_opt(run, "max_blocks", "run", 3000, int),
        block_seconds=_opt(chain, "block_seconds", "chain", 12, int),
        max_parallel_mults=_opt(chain, "max_parallel_mults", "chain", 4, int),
        stream=stream, raw=doc)
    for cname, (builder, args) in circuits.items():
        try:
            c = circ.BUILDERS[builder](*args)
        except (TypeError, circ.InvalidCircuit) as e:
            raise ScenarioInvalid(str(e), f"circuits.{cname}") from None
        rows = inputs.get(cname, [])
        for party in range(c.n_parties):
            need = sum(1 for g in c.gates if isinstance(g, circ.InputSecret) and g.party == party)
            have = len(rows[party]) if party < len(rows) else 0
            if need and have != need:
                raise ScenarioInvalid(f"party {party} needs {need} secret inputs for {cname}, has {have}",
                                      f"inputs.{cname}")
    return sc


# ---------------------------------------------------------------- running

@dataclass
class Run:
    scenario: Scenario
    ledger: Ledger
    sim: Simulation
    addresses: dict  # label -> address
    contracts: dict  # tx name -> contract address
    cids: dict  # circuit name -> cid
    tx_names: dict  # tx name -> list of tx hashes (one per repetition)
    circuit_of: dict  # cid -> circuit name


def build_ledger(sc: Scenario):
    """Genesis: registry, fixtures, funded accounts.  Returns (ledger, addresses, cids)."""
    reg = circ.CircuitRegistry()
    cids = {}
    for cname in sorted(sc.circuits):
        builder, args = sc.circuits[cname]
        cids[cname] = reg.register(circ.BUILDERS[builder](*args))
    cfg = LedgerConfig(block_seconds=sc.block_seconds, max_parallel_mults=sc.max_parallel_mults)
    ledger = Ledger(reg, cfg, fixtures.load_all())
    addresses = {lab: eoa_address(lab) for lab in sorted(sc.accounts)}
    for lab in sorted(sc.accounts):
        ledger.fund(addresses[lab], sc.accounts[lab])
    ledger.default_committee = tuple(addresses[lab] for lab in sc.labels)
    ledger.default_t = sc.t
    return ledger, addresses, cids


class _Resolver:
    def __init__(self, run: "Run"):
        self.run = run

    def value(self, v, path="arg"):
        if isinstance(v, list):
            return tuple(self.value(x, path) for x in v)
        if isinstance(v, str):
            if v == "@committee":
                return tuple(self.run.addresses[lab] for lab in self.run.scenario.labels)
            if v.startswith("@"):
                if v[1:] not in self.run.addresses:
                    raise ScenarioInvalid(f"unknown account {v!r}", path)
                return self.run.addresses[v[1:]]
            if v.startswith("$"):
                if v[1:] not in self.run.contracts:
                    raise ScenarioInvalid(f"contract {v!r} is not deployed yet", path)
                return self.run.contracts[v[1:]]
            if v.startswith("#"):
                if v[1:] not in self.run.cids:
                    raise ScenarioInvalid(f"unknown circuit {v!r}", path)
                return self.run.cids[v[1:]]
        return v


def _stream(sc: Scenario, run: "Run"):
    """Background regular workload: plain transfers and token transfers."""
    per_block = int(sc.stream.get("per_block", 0))
    if per_block <= 0:
        return None
    senders = [run.addresses[s] for s in sc.stream.get("senders", [])]
    token_share = float(sc.stream.get("token_share", 0.0))
    token = sc.stream.get("token")
    token_owner = sc.stream.get("token_owner")
    rng = random.Random(f"{sc.seed}/stream")
    counter = {"i": 0}

    def fill(room, height):
        out = []
        for _ in range(min(room, per_block)):
            i = counter["i"]
            counter["i"] += 1
            use_token = token and token in run.contracts and rng.random() < token_share
            dest = senders[rng.randrange(len(senders))]
            amount = rng.randint(1, 100)
            if use_token:
                out.append(TxIntent("regular", run.addresses[token_owner], run.contracts[token], "transfer",
                                    (dest, amount), gas_limit=2_000))
            else:
                out.append(TxIntent("regular", senders[i % len(senders)], dest, None, (), amount,
                                    gas_limit=100))
        return out
    return fill


def prepare(sc: Scenario, seed: Optional[int] = None, latency=None) -> Run:
    if seed is not None:
        sc = sc.replace(seed=seed)
    if latency is not None:
        sc = sc.replace(latency=latency)
    ledger, addresses, cids = build_ledger(sc)
    circuit_of = {cid: name for name, cid in cids.items()}
    committee = [addresses[lab] for lab in sc.labels]

    run = Run(sc, ledger, None, addresses, {}, cids, {}, circuit_of)

    def inputs_for(info, idx, circuit):
        rows = sc.inputs.get(circuit_of.get(info.cid), [])
        return list(rows[idx]) if idx < len(rows) else []

    sim = Simulation(ledger, committee, sc.t, seed=sc.seed, latency=sc.latency,
                     block_interval=sc.block_interval, block_capacity=sc.block_capacity,
                     inputs_for=inputs_for, dispute_timeout=sc.dispute_timeout, sync_mode=sc.sync)
    run.sim = sim
    sim.stream = _stream(sc, run)
    for fault, at in sc.faults:
        sim.inject(fault, None if at is None else at)
    _install_scheduler(run)
    return run


def _install_scheduler(run: Run):
    sc, sim, ledger = run.scenario, run.sim, run.ledger
    res = _Resolver(run)
    remaining = {i: s.repeat for i, s in enumerate(sc.txs)}
    inflight = {}  # spec index -> tx hash of the latest repetition awaiting completion
    submitted_at = {}

    def done(name) -> bool:
        """A named tx has committed and, if it suspended, its session has ended."""
        hashes = run.tx_names.get(name)
        if not hashes:
            return False
        i = next(k for k, s in enumerate(sc.txs) if s.name == name)
        if remaining[i] or i in inflight:
            return False
        return all(_settled(h) for h in hashes)

    def _settled(h) -> bool:
        out = ledger.session_outcomes.get(h)
        return out is None or out["outcome"] != "pending"

    def locked_now(name) -> bool:
        hashes = run.tx_names.get(name) or []
        return any(ledger.session_outcomes.get(h, {}).get("outcome") == "pending" for h in hashes)

    def submit(i, height):
        s = sc.txs[i]
        path = f"tx[{i}]"
        args = tuple(res.value(a, path + ".args") for a in s.args)
        sender = run.addresses[s.sender]
        if s.create is not None:
            it = TxIntent("create", sender, args=args, value=s.value, gas_limit=s.gas_limit,
                          fixture=s.create, name=f"{i}")
        else:
            it = TxIntent("regular", sender, res.value(s.target, path + ".target"), s.method, args,
                          s.value, s.gas_limit, name=f"{i}")
        sim.submit(it)
        remaining[i] -= 1
        inflight[i] = None
        submitted_at[i] = height

    def ready(i, height) -> bool:
        s = sc.txs[i]
        if i in inflight or not remaining[i]:
            return False
        if s.repeat > 1 and s.name and run.tx_names.get(s.name):
            # a loop: the next call goes out once the previous session has ended
            return all(_settled(h) for h in run.tx_names[s.name])
        if s.at is not None:
            return height + 1 >= s.at
        if s.after is not None:
            return done(s.after)
        if s.during is not None:
            return locked_now(s.during)
        return True

    def hook(sim_, height, txs, receipts, names):
        for tx, r, nm in zip(txs, receipts, names):
            if nm is None:
                continue
            i = int(nm)
            s = sc.txs[i]
            inflight.pop(i, None)
            if s.name:
                run.tx_names.setdefault(s.name, []).append(r.tx_hash)
                if s.create is not None and r.status == "success":
                    run.contracts[s.name] = r.events[0]["address"]
        for i in range(len(sc.txs)):
            if ready(i, height):
                submit(i, height)

    def first(sim_):
        for i in range(len(sc.txs)):
            if ready(i, 0):
                submit(i, 0)

    run._kick = first
    sim.block_hooks.append(hook)
    run._pending_work = lambda: any(remaining.values()) or bool(inflight)


def execute(sc: Scenario, seed: Optional[int] = None, latency=None) -> Run:
    run = prepare(sc, seed, latency)
    sim, ledger = run.sim, run.ledger
    run._kick(sim)
    sim.start_clock()
    target = run.scenario.blocks
    cap = run.scenario.max_blocks

    def stop(s):
        h = ledger.height
        if target is not None:
            return h >= target
        if h >= cap:
            return True
        return h > 0 and not run._pending_work() and not ledger.txmgr.live_sessions() and not s.pending
    sim.run_until(stop)
    return run
