"""Deterministic synthetic chain with complete ground truth.

Actors:

* founders receive the founder reward at one active address at a time,
  rotate at the cap, shield fixed quanta of 100 coinbase outputs in bursts
  every few blocks, and withdraw a fixed quantum to founder-owned addresses;
* pools mine into one address, shield their rewards periodically and pay
  members in z-to-t transactions with many outputs, one back to themselves;
* solo miners shield their rewards and withdraw back to their mining address;
* pool members (individual miners) sometimes shield payouts or sell them;
* exchanges pay users from a hot wallet and sweep per-customer deposit
  addresses into it;
* users buy, pay, sell, shield, unshield and move value inside the pool;
  some make round trips of a fresh, chain-unique value;
* optional planted actors: price-schedule buyers, decoys that look like
  buyers but break one condition, and decoys that withdraw the founder quantum.

Values are jittered so that the only deposit/withdrawal pairs with a
chain-unique value are the planted round trips.
"""

from __future__ import annotations

import hashlib
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Callable, Optional

from ..chain import utc_month
from ..codec import chain_digest, dump_line
from ..model import (
    ZAT_PER_ZEC,
    Block,
    JoinSplit,
    Transaction,
    TxIn,
    TxOut,
    classify_tx,
    format_zec,
    pool_deposit,
    pool_withdrawal,
    TxKind,
)
from .config import ScenarioConfig

MANIFEST_SCHEMA = "zanon-synth-manifest/1"
_B58 = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"

FOUNDER, MINER, OTHER = "founder", "miner", "other"


def _b58(data: bytes) -> str:
    n = int.from_bytes(data, "big")
    out = []
    while n:
        n, r = divmod(n, 58)
        out.append(_B58[r])
    return "".join(reversed(out))


@dataclass
class Actor:
    id: str
    kind: str  # founder | pool | solo | member | exchange | user | buyer | decoy
    category: str  # founder | miner | other
    name: str = ""
    addresses: list[str] = field(default_factory=list)
    zbal: int = 0
    reserved: int = 0  # shielded value promised to a pending withdrawal


@dataclass
class Scenario:
    config: ScenarioConfig
    blocks: list[Block]
    manifest: dict
    founder_addresses: list[str]
    tag_rows: list[tuple[str, str, str, str]]
    schedule_rows: list[tuple[str, str]]

    def write(self, outdir) -> dict[str, Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = {
            "chain": outdir / "chain.ndjson",
            "manifest": outdir / "manifest.json",
            "founders": outdir / "founders.txt",
            "tags": outdir / "tags.csv",
            "schedule": outdir / "schedule.csv",
        }
        with open(paths["chain"], "w", encoding="utf-8") as fh:
            for block in self.blocks:
                fh.write(dump_line(block))
                fh.write("\n")
        paths["manifest"].write_text(json.dumps(self.manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        paths["founders"].write_text("".join(a + "\n" for a in self.founder_addresses), encoding="utf-8")
        with open(paths["tags"], "w", encoding="utf-8") as fh:
            fh.write("address,category,name,source\n")
            for row in self.tag_rows:
                fh.write(",".join(row) + "\n")
        with open(paths["schedule"], "w", encoding="utf-8") as fh:
            fh.write("month,amount_zec\n")
            for month, amount in self.schedule_rows:
                fh.write(f"{month},{amount}\n")
        return paths


class _Generator:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.rng = Random(cfg.seed)
        self.fee = cfg.zat("fee")
        self.founder_reward = cfg.zat("founder_reward")
        self.dq = cfg.zat("founder_deposit_quantum")
        self.wq = cfg.zat("founder_withdrawal_quantum")
        self.cap = cfg.zat("founder_cap")
        self.k = cfg.founder_utxos_per_deposit
        self._n = defaultdict(int)

        self.actors: dict[str, Actor] = {}
        self.owner: dict[str, str] = {}
        self.unspent: dict[str, dict[tuple[str, int], tuple[int, bool]]] = defaultdict(dict)
        self.pending_outputs: list[tuple[str, tuple[str, int], int, bool]] = []
        self.pending_z: list[tuple[Actor, int]] = []
        self.events: dict[int, list[Callable[[int], None]]] = defaultdict(list)

        self.blocks: list[Block] = []
        self.running = False
        self.block_txs: list[Transaction] = []
        self.block_fees = 0
        self.height = 0
        self.time = cfg.genesis_time

        self.dep_values: set[int] = set()
        self.wd_values: set[int] = set()
        self.planted: set[int] = set()
        self.categories: dict[str, str] = {}
        self.round_trips: list[list] = []
        self.h3_decoys: list[str] = []
        self.tsb_buyers: list[dict] = []
        self.tsb_decoys: list[dict] = []
        self.miner_roster: set[str] = set()
        self.payout_recipients: set[str] = set()
        self.founder_deposits: list[tuple[str, int, int]] = []  # (address, height, value)
        self.founder_withdrawals: list[tuple[int, str]] = []
        self.pool_payouts: list[str] = []

        planted = cfg.tsb_buyers + cfg.tsb_decoys + cfg.h3_decoys
        self.float = cfg.zat("exchange_float") if planted else 0
        self.planted_pending = planted
        self._setup_actors()

    # -- identifiers --------------------------------------------------

    def _hash(self, tag: str) -> bytes:
        self._n[tag] += 1
        return hashlib.sha256(f"{self.cfg.seed}/{tag}/{self._n[tag]}".encode()).digest()

    def new_address(self, actor: Actor) -> str:
        while True:
            address = "t1" + _b58(self._hash("addr"))[:33]
            if address not in self.owner:
                break
        self.owner[address] = actor.id
        actor.addresses.append(address)
        return address

    def _actor(self, kind, category, name="") -> Actor:
        aid = f"{kind}-{sum(1 for a in self.actors.values() if a.kind == kind) + 1}"
        actor = Actor(aid, kind, category, name or aid)
        self.actors[aid] = actor
        return actor

    # -- setup --------------------------------------------------------

    def _setup_actors(self):
        cfg, rng = self.cfg, self.rng
        self.founders = self._actor("founder", FOUNDER, "founders")
        self.founder_params = [self.new_address(self.founders) for _ in range(cfg.founder_params)]
        self.active = 0
        self.received = defaultdict(int)
        self.retired: list[str] = []
        self.founder_payout_address: Optional[str] = None
        self.founder_payout_uses = 0
        self.fdep = {"burst": False, "next": 0}
        self.fwd = {"burst": False, "next": 0}

        self.exchanges = [self._actor("exchange", OTHER, f"exchange-{i + 1}") for i in range(cfg.exchanges)]
        self.hot = {ex.id: self.new_address(ex) for ex in self.exchanges}
        self.deposit_address: dict[tuple[str, str], str] = {}  # (customer id, exchange id) -> address
        self.sweepable: dict[str, list[str]] = {ex.id: [] for ex in self.exchanges}

        self.pools = []
        for i in range(cfg.pools):
            pool = self._actor("pool", MINER, f"pool-{i + 1}")
            self.new_address(pool)
            members = []
            for _ in range(cfg.pool_members):
                if self.exchanges and rng.random() < cfg.exchange_member_rate:
                    ex = rng.choice(self.exchanges)
                    members.append(self.new_address(ex))
                else:
                    m = self._actor("member", MINER)
                    members.append(self.new_address(m))
            self.pools.append((pool, members))
        self.solos = [self._actor("solo", MINER) for _ in range(cfg.solo_miners)]
        for s in self.solos:
            self.new_address(s)
        self.users = [self._actor("user", OTHER) for _ in range(cfg.users)]
        for u in self.users:
            self.new_address(u)

        span = cfg.block_count
        for i in range(cfg.tsb_buyers):
            self.schedule(span * (i + 1) // (cfg.tsb_buyers + 1), self._tsb_buyer)
        kinds = ("prior_receipt", "split", "busy")
        for i in range(cfg.tsb_decoys):
            kind = kinds[i % len(kinds)]
            start = span * (2 * i + 1) // (2 * cfg.tsb_decoys + 2)
            self.schedule(start, lambda h, kind=kind: self._tsb_decoy(h, kind))
        for i in range(cfg.h3_decoys):
            self.schedule(span * (i + 1) // (cfg.h3_decoys + 1), self._h3_decoy)

    # -- primitives ---------------------------------------------------

    def schedule(self, height: int, fn: Callable[[int], None]):
        """Run ``fn(height)`` at the start of a later block (never the current one)."""
        if self.running:
            height = max(height, self.height + 1)
        if height < self.cfg.block_count:
            self.events[height].append(fn)

    def balance(self, addresses, coinbase: Optional[bool] = False) -> int:
        """Spendable value; ``coinbase`` None counts both kinds."""
        total = 0
        for a in addresses:
            for value, cb in self.unspent[a].values():
                if coinbase is None or cb == coinbase:
                    total += value
        return total

    def select(self, addresses, amount: int, coinbase: Optional[bool] = False):
        picked, total = [], 0
        for a in addresses:
            for op, (value, cb) in self.unspent[a].items():
                if coinbase is not None and cb != coinbase:
                    continue
                picked.append((a, op, value))
                total += value
                if total >= amount:
                    return picked, total
        return None, total

    def take_all(self, address, coinbase: Optional[bool] = False, limit: Optional[int] = None):
        picked = [
            (address, op, value)
            for op, (value, cb) in self.unspent[address].items()
            if coinbase is None or cb == coinbase
        ]
        return picked[:limit] if limit else picked

    def free_deposit(self, value: int) -> int:
        while value in self.planted or value == self.wq:
            value -= 1
        return value

    def free_withdrawal(self, value: int) -> int:
        while value in self.dep_values or value in self.planted or value == self.wq:
            value -= 1
        return value

    def fresh_value(self, lo: int, hi: int) -> int:
        """A value with a nonzero eighth decimal seen nowhere on the chain so far."""
        while True:
            v = self.rng.randint(lo, hi)
            if v % 10 == 0:
                continue
            if v not in self.dep_values and v not in self.wd_values and v not in self.planted:
                return v

    def emit(self, actor: Actor, inputs, outputs, vpub_old=0, vpub_new=0, n_private=0) -> Transaction:
        txid = self._hash("tx").hex()
        vin = []
        in_total = 0
        for address, op, value in inputs:
            del self.unspent[address][op]
            vin.append(TxIn(op[0], op[1]))
            in_total += value
        vout = tuple(TxOut(a, v, i) for i, (a, v) in enumerate(outputs))
        joinsplits = []
        if vpub_old or vpub_new:
            joinsplits.append(self._joinsplit(vpub_old, vpub_new))
        for _ in range(n_private):
            joinsplits.append(self._joinsplit(0, 0))
        fee = in_total + vpub_new - vpub_old - sum(v for _, v in outputs)
        assert fee >= 0, (actor.id, fee)
        tx = Transaction(txid, self.height, self.time, False, tuple(vin), vout, tuple(joinsplits))
        for out in vout:
            self.pending_outputs.append((out.address, (txid, out.index), out.value, False))
        if vpub_old:
            self.dep_values.add(vpub_old)
            self.pending_z.append((actor, vpub_old))
        if vpub_new:
            self.wd_values.add(vpub_new)
            actor.zbal -= vpub_new
            assert actor.zbal >= 0, actor.id
        if joinsplits and classify_tx(tx) is not TxKind.PRIVATE:
            self.categories[txid] = actor.category
        self.block_fees += fee
        self.block_txs.append(tx)
        return tx

    def _joinsplit(self, vpub_old, vpub_new) -> JoinSplit:
        return JoinSplit(
            vpub_old,
            vpub_new,
            (self._hash("nf"), self._hash("nf")),
            (self._hash("cm"), self._hash("cm")),
        )

    def shield_all(self, actor: Actor, inputs) -> Optional[Transaction]:
        """t-to-z of every listed UTXO; the fee absorbs value jitter."""
        total = sum(v for _, _, v in inputs)
        if total <= 2 * self.fee:
            return None
        value = self.free_deposit(total - self.fee)
        return self.emit(actor, inputs, [], vpub_old=value)

    def unshield(self, actor: Actor, value: int, outputs_to: list[str], planted=False) -> Optional[Transaction]:
        if not planted:
            value = self.free_withdrawal(value)
        net = value - self.fee
        if net < len(outputs_to) or actor.zbal - actor.reserved < value and not planted:
            return None
        return self.emit(actor, [], self.split(net, outputs_to), vpub_new=value)

    def split(self, total: int, addresses: list[str]) -> list[tuple[str, int]]:
        weights = [self.rng.randint(1, 1000) for _ in addresses]
        wsum = sum(weights)
        parts = [max(1, total * w // wsum) for w in weights]
        parts[0] += total - sum(parts)
        if parts[0] < 1:
            parts = [total // len(addresses)] * len(addresses)
            parts[0] += total - sum(parts)
        return list(zip(addresses, parts))

    def pay(self, actor: Actor, sources, amount: int, to: str, change_to: Optional[str] = None):
        inputs, total = self.select(sources, amount + self.fee)
        if inputs is None:
            return None
        change = total - amount - self.fee
        outputs = [(to, amount)]
        if change:
            outputs.append((change_to or inputs[0][0], change))
        return self.emit(actor, inputs, outputs)

    def exchange_address_for(self, customer: Actor, ex: Actor) -> str:
        key = (customer.id, ex.id)
        if key not in self.deposit_address:
            self.deposit_address[key] = self.new_address(ex)
        address = self.deposit_address[key]
        if address not in self.sweepable[ex.id]:
            self.sweepable[ex.id].append(address)
        return address

    # -- block loop ---------------------------------------------------

    def run(self):
        cfg = self.cfg
        self.running = True
        for h in range(cfg.block_count):
            self.height = h
            self.time = cfg.genesis_time + h * cfg.block_interval
            self.block_txs = []
            self.block_fees = 0
            for fn in self.events.pop(h, []):
                fn(h)
            self._founders(h)
            self._pools(h)
            self._solos(h)
            self._exchanges(h)
            self._users(h)
            self._close_block(h)

    def _close_block(self, h):
        cfg = self.cfg
        miner = self._pick_miner()
        active = self.founder_params[self.active]
        txid = self._hash("tx").hex()
        coinbase = Transaction(
            txid, h, self.time, True, (),
            (TxOut(miner, cfg.miner_reward + self.block_fees, 0), TxOut(active, self.founder_reward, 1)),
        )
        self.miner_roster.add(miner)
        for out in coinbase.vout:
            self.pending_outputs.append((out.address, (txid, out.index), out.value, True))
        self.received[active] += self.founder_reward
        if self.received[active] >= self.cap and self.active + 1 < len(self.founder_params):
            self.retired.append(active)
            self.active += 1
        block_hash = self._hash("block").hex()
        self.blocks.append(Block(h, block_hash, self.time, (coinbase, *self.block_txs)))
        for address, op, value, cb in self.pending_outputs:
            self.unspent[address][op] = (value, cb)
        for actor, value in self.pending_z:
            actor.zbal += value
        self.pending_outputs, self.pending_z = [], []

    def _pick_miner(self) -> str:
        if self.pools and (not self.solos or self.rng.random() < self.cfg.pool_share):
            weights = [1 / (i + 1) for i in range(len(self.pools))]
            pool, _ = self.rng.choices(self.pools, weights)[0]
            return pool.addresses[0]
        return self.rng.choice(self.solos).addresses[0]

    # -- founders -----------------------------------------------------

    def _founder_deposit_options(self):
        """(address, utxo count) for deposits available now, retired first."""
        opts = []
        for address in self.retired + [self.founder_params[self.active]]:
            n = len(self.take_all(address, coinbase=True))
            full, rest = divmod(n, self.k)
            opts.extend([(address, self.k)] * full)
            if rest and address in self.retired:
                opts.append((address, rest))
        return opts

    def _founders(self, h):
        cfg, f = self.cfg, self.founders
        opts = self._founder_deposit_options()
        st = self.fdep
        if not st["burst"] and len(opts) >= cfg.founder_burst:
            st["burst"], st["next"] = True, h
        if st["burst"] and h >= st["next"]:
            if not opts:
                st["burst"] = False
            else:
                address, n = opts[0]
                inputs = self.take_all(address, coinbase=True, limit=n)
                tx = self.emit(f, inputs, [], vpub_old=sum(v for *_, v in inputs) - self.fee)
                self.founder_deposits.append((address, h, pool_deposit(tx)))
                st["next"] = h + self.rng.randint(cfg.founder_step_min, cfg.founder_step_max)
                if len(opts) == 1:
                    st["burst"] = False
        st = self.fwd
        avail = f.zbal - f.reserved
        if not st["burst"] and avail >= cfg.founder_burst * self.wq:
            st["burst"], st["next"] = True, h
        if st["burst"] and h >= st["next"]:
            if avail < self.wq:
                st["burst"] = False
            else:
                if self.founder_payout_address is None or self.founder_payout_uses >= cfg.founder_payout_reuse:
                    self.founder_payout_address = self.new_address(f)
                    self.founder_payout_uses = 0
                self.founder_payout_uses += 1
                tx = self.emit(f, [], [(self.founder_payout_address, self.wq - self.fee)], vpub_new=self.wq)
                self.founder_withdrawals.append((h, tx.txid))
                st["next"] = h + self.rng.randint(cfg.founder_step_min, cfg.founder_step_max)

    # -- miners -------------------------------------------------------

    def _pools(self, h):
        cfg, rng = self.cfg, self.rng
        for i, (pool, members) in enumerate(self.pools):
            address = pool.addresses[0]
            if (h + 7 * i) % cfg.pool_deposit_period == 0:
                inputs = self.take_all(address, coinbase=True, limit=500)
                if inputs:
                    self.shield_all(pool, inputs)
            if (h + 11 * i) % cfg.pool_payout_period == 0 and pool.zbal > 0:
                n = rng.randint(cfg.pool_fanout_min, cfg.pool_fanout_max)
                recipients = rng.sample(members, n - 1)
                recipients.insert(rng.randrange(n), address)
                value = pool.zbal * rng.randint(60, 95) // 100
                if value < n * 1000 + self.fee:
                    continue
                tx = self.unshield(pool, value, recipients)
                if tx is None:
                    continue
                self.pool_payouts.append(tx.txid)
                for m in recipients:
                    if m == address:
                        continue
                    self.payout_recipients.add(m)
                    actor = self.actors[self.owner[m]]
                    if actor.kind == "exchange":
                        if m not in self.sweepable[actor.id]:
                            self.sweepable[actor.id].append(m)
                    elif rng.random() < cfg.member_deposit_rate:
                        self.schedule(h + rng.randint(5, 30), lambda hh, a=actor: self._miner_cycle(hh, a))
                    elif rng.random() < cfg.member_sell_rate:
                        self.schedule(h + rng.randint(5, 30), lambda hh, a=actor: self._miner_sell(hh, a))

    def _miner_cycle(self, h, actor: Actor):
        """Shield everything at the miner's address, unshield part of it back later."""
        address = actor.addresses[0]
        inputs = self.take_all(address, coinbase=None, limit=400)
        if not inputs or self.shield_all(actor, inputs) is None:
            return
        self.schedule(h + self.rng.randint(2, 25), lambda hh: self._miner_withdraw(hh, actor))

    def _miner_withdraw(self, h, actor: Actor):
        value = (actor.zbal - actor.reserved) * self.rng.randint(50, 100) // 100
        if value > 2 * self.fee and self.unshield(actor, value, [actor.addresses[0]]) is not None:
            if self.rng.random() < self.cfg.member_sell_rate:
                self.schedule(h + self.rng.randint(2, 25), lambda hh: self._miner_sell(hh, actor))

    def _miner_sell(self, h, actor: Actor):
        if not self.exchanges:
            return
        address = actor.addresses[0]
        inputs = self.take_all(address, coinbase=False, limit=100)
        total = sum(v for *_, v in inputs)
        if total <= self.fee:
            return
        ex = self.exchanges[int(actor.id.rsplit("-", 1)[1]) % len(self.exchanges)]
        self.emit(actor, inputs, [(self.exchange_address_for(actor, ex), total - self.fee)])

    def _solos(self, h):
        for i, solo in enumerate(self.solos):
            if (h + 13 * i) % self.cfg.solo_deposit_period == 0:
                inputs = self.take_all(solo.addresses[0], coinbase=True, limit=500)
                if inputs and self.shield_all(solo, inputs) is not None:
                    self.schedule(h + self.rng.randint(2, 20), lambda hh, s=solo: self._miner_withdraw(hh, s))

    # -- exchanges and users -----------------------------------------

    def _exchanges(self, h):
        for i, ex in enumerate(self.exchanges):
            if (h + 17 * i) % self.cfg.exchange_consolidate_period:
                continue
            inputs = []
            for address in self.sweepable[ex.id]:
                inputs.extend(self.take_all(address, coinbase=False))
                if len(inputs) >= 60:
                    break
            total = sum(v for *_, v in inputs)
            if total > self.fee:
                self.emit(ex, inputs, [(self.hot[ex.id], total - self.fee)])

    def _user_address(self, user: Actor, fresh_rate=0.15) -> str:
        if self.rng.random() < fresh_rate:
            return self.new_address(user)
        return self.rng.choice(user.addresses)

    def _users(self, h):
        cfg, rng = self.cfg, self.rng
        for user in self.users:
            if rng.random() >= cfg.user_activity:
                continue
            tbal = self.balance(user.addresses)
            zfree = user.zbal - user.reserved
            r = rng.random()
            if tbal < ZAT_PER_ZEC and zfree < ZAT_PER_ZEC:
                self._buy(user)
            elif r < cfg.round_trip_rate:
                self._round_trip(h, user, tbal)
            elif r < cfg.round_trip_rate + cfg.private_rate:
                if user.zbal:
                    self.emit(user, [], [], n_private=1 if rng.random() < 0.93 else 2)
                else:
                    self._buy(user)
            else:
                action = rng.choices(("buy", "pay", "sell", "deposit", "withdraw"), (15, 20, 10, 30, 25))[0]
                if action == "withdraw" and zfree > ZAT_PER_ZEC // 10:
                    value = zfree * rng.randint(20, 100) // 100 + rng.randint(0, 99)
                    self.unshield(user, min(value, zfree), [self._user_address(user)])
                elif action == "deposit" and tbal > ZAT_PER_ZEC // 10:
                    self._user_deposit(user)
                elif action == "pay" and tbal > ZAT_PER_ZEC // 10:
                    other = rng.choice(self.users)
                    amount = tbal * rng.randint(5, 50) // 100 + rng.randint(1, 99)
                    self.pay(user, user.addresses, amount, self._user_address(other, 0.3),
                             self._user_address(user, 0.3))
                elif action == "sell" and tbal > ZAT_PER_ZEC // 10 and self.exchanges:
                    ex = rng.choice(self.exchanges)
                    amount = tbal * rng.randint(10, 80) // 100
                    self.pay(user, user.addresses, amount, self.exchange_address_for(user, ex))
                else:
                    self._buy(user)

    def _buy(self, user: Actor, amount: Optional[int] = None, to: Optional[str] = None):
        if not self.exchanges:
            return None
        ex = self.rng.choice(self.exchanges)
        if amount is None:
            amount = self.rng.randint(ZAT_PER_ZEC, 40 * ZAT_PER_ZEC)
        if self.planted_pending and self.balance([self.hot[ex.id]]) < amount + self.float:
            return None
        return self.pay(ex, [self.hot[ex.id]], amount, to or self._user_address(user), self.hot[ex.id])

    def _user_deposit(self, user: Actor):
        rng = self.rng
        if rng.random() < 0.5:
            funded = [a for a in user.addresses if self.unspent[a]]
            addresses = rng.sample(funded, min(len(funded), rng.choice((1, 1, 2))))
            inputs = [i for a in addresses for i in self.take_all(a, limit=50)]
            self.shield_all(user, inputs)
            return
        tbal = self.balance(user.addresses)
        value = self.free_deposit(tbal * rng.randint(20, 80) // 100 + rng.randint(1, 99))
        inputs, total = self.select(user.addresses, value + self.fee)
        if inputs is None or value <= 0:
            return
        change = total - value - self.fee
        outputs = [(self._user_address(user, 0.3), change)] if change else []
        self.emit(user, inputs, outputs, vpub_old=value)

    def _round_trip(self, h, user: Actor, tbal: int):
        hi = min(40 * ZAT_PER_ZEC, tbal * 8 // 10)
        if hi <= ZAT_PER_ZEC // 2:
            self._buy(user)
            return
        v = self.fresh_value(ZAT_PER_ZEC // 2, hi)
        inputs, total = self.select(user.addresses, v + self.fee)
        if inputs is None:
            return
        self.planted.add(v)
        change = total - v - self.fee
        outputs = [(self._user_address(user, 0.3), change)] if change else []
        dep = self.emit(user, inputs, outputs, vpub_old=v)
        user.reserved += v
        gap = self.rng.randint(1, self.cfg.round_trip_gap_max)
        if h + gap >= self.cfg.block_count:
            user.reserved -= v
            return

        def withdraw(hh):
            user.reserved -= v
            wd = self.unshield(user, v, [self._user_address(user)], planted=True)
            self.round_trips.append([v, dep.txid, h, wd.txid, hh])

        self.schedule(h + gap, withdraw)

    # -- planted actors ----------------------------------------------

    def _retry(self, h, fn, tries=400):
        if tries > 0:
            self.schedule(h + 1, lambda hh: fn(hh, tries - 1))
        else:
            self.planted_pending -= 1

    def _price(self) -> int:
        prices = self.cfg.tsb_price_list
        month = utc_month(self.time)
        first = utc_month(self.cfg.genesis_time)
        idx = (int(month[:4]) - int(first[:4])) * 12 + int(month[5:]) - int(first[5:])
        return prices[idx % len(prices)]

    def _funded_exchange(self, amount) -> Optional[Actor]:
        for ex in self.exchanges:
            if self.balance([self.hot[ex.id]]) >= amount + 2 * self.fee:
                return ex
        return None

    def _tsb_buyer(self, h, tries=400):
        price = self._price()
        ex = self._funded_exchange(price + self.fee)
        if ex is None:
            return self._retry(h, self._tsb_buyer, tries)
        self.planted_pending -= 1
        buyer = self._actor("buyer", OTHER)
        address = self.new_address(buyer)
        self.pay(ex, [self.hot[ex.id]], price + self.fee, address, self.hot[ex.id])
        record = {"actor": buyer.id, "addresses": [address], "price_zat": price, "txids": []}
        self.tsb_buyers.append(record)

        def deposit(hh):
            tx = self.emit(buyer, self.take_all(address), [], vpub_old=price)
            record["txids"].append(tx.txid)
            record["period"] = utc_month(tx.block_time)

        self.schedule(h + self.rng.randint(1, 5), deposit)

    def _tsb_decoy(self, h, kind, tries=400):
        price = self._price()
        need = price + (ZAT_PER_ZEC if kind == "prior_receipt" else 0) + 4 * self.fee
        ex = self._funded_exchange(need)
        if ex is None:
            return self._retry(h, lambda hh, t: self._tsb_decoy(hh, kind, t), tries)
        self.planted_pending -= 1
        decoy = self._actor("decoy", OTHER)
        address = self.new_address(decoy)
        record = {"actor": decoy.id, "kind": kind, "addresses": [address], "price_zat": price, "txids": []}
        self.tsb_decoys.append(record)
        if kind == "prior_receipt":
            # The exchange routes the funds through the pool to the decoy.
            inputs, total = self.select([self.hot[ex.id]], need)
            dep_value = self.free_deposit(price + ZAT_PER_ZEC + 3 * self.fee)
            self.emit(ex, inputs, [(self.hot[ex.id], total - dep_value - self.fee)], vpub_old=dep_value)

            ex.reserved += price + 2 * self.fee

            def unshield(hh):
                ex.reserved -= price + 2 * self.fee
                tx = self.unshield(ex, price + 2 * self.fee, [address])
                if tx is not None:
                    record["txids"].append(tx.txid)
                    self.schedule(hh + self.rng.randint(1, 5), lambda h3: self._decoy_deposit(decoy, record))

            self.schedule(h + 1, unshield)
        elif kind == "split":
            self.pay(ex, [self.hot[ex.id]], price + 2 * self.fee, address, self.hot[ex.id])

            def first(hh):
                part = price - 3 * ZAT_PER_ZEC
                inputs = self.take_all(address)
                total = sum(v for *_, v in inputs)
                tx = self.emit(decoy, inputs, [(address, total - part - self.fee)], vpub_old=part)
                record["txids"].append(tx.txid)
                self.schedule(hh + 1, lambda h3: self._decoy_deposit(decoy, record))

            self.schedule(h + 1, first)
        else:
            busy = self.cfg.tsb_busy_txs
            self.pay(ex, [self.hot[ex.id]], price + (busy + 1) * self.fee, address, self.hot[ex.id])

            def churn(hh, left):
                if left == 0:
                    return self._decoy_deposit(decoy, record, exact=price)
                inputs = self.take_all(address)
                total = sum(v for *_, v in inputs)
                self.emit(decoy, inputs, [(address, total - self.fee)])
                self.schedule(hh + 1, lambda h3: churn(h3, left - 1))

            self.schedule(h + 1, lambda hh: churn(hh, busy))

    def _decoy_deposit(self, decoy, record, exact=None):
        inputs = self.take_all(decoy.addresses[0])
        total = sum(v for *_, v in inputs)
        value = exact if exact is not None else self.free_deposit(total - self.fee)
        if not 0 < value <= total:
            return
        tx = self.emit(decoy, inputs, [], vpub_old=value)
        record["txids"].append(tx.txid)
        record["period"] = utc_month(tx.block_time)

    def _h3_decoy(self, h, tries=400):
        need = self.wq + ZAT_PER_ZEC * 10
        ex = self._funded_exchange(need)
        if ex is None:
            return self._retry(h, self._h3_decoy, tries)
        self.planted_pending -= 1
        inputs, total = self.select([self.hot[ex.id]], need + self.fee)
        dep_value = self.free_deposit(need - self.rng.randint(1, 99))
        self.emit(ex, inputs, [(self.hot[ex.id], total - dep_value - self.fee)], vpub_old=dep_value)
        ex.reserved += self.wq

        def withdraw(hh):
            ex.reserved -= self.wq
            tx = self.emit(ex, [], [(self.new_address(ex), self.wq - self.fee)], vpub_new=self.wq)
            self.h3_decoys.append(tx.txid)

        self.schedule(h + self.rng.randint(1, 5), withdraw)

    # -- output -------------------------------------------------------

    def manifest(self) -> dict:
        cfg = self.cfg
        kinds = {k.value: 0 for k in TxKind}
        ledger = []
        balance = 0
        fees_total = 0
        private = js = single = 0
        for block in self.blocks:
            dep = wd = 0
            for tx in block.txs:
                kind = classify_tx(tx)
                kinds[kind.value] += 1
                dep += pool_deposit(tx)
                wd += pool_withdrawal(tx)
                if kind is TxKind.PRIVATE:
                    private += 1
                    js += len(tx.joinsplits)
                    single += len(tx.joinsplits) == 1
            balance += dep - wd
            fees_total += block.txs[0].vout[0].value - cfg.miner_reward
            ledger.append([block.height, dep, wd, balance])
        founder_rows: dict[str, list] = {}
        for address, height, value in self.founder_deposits:
            row = founder_rows.setdefault(address, [address, height, 0, 0, 0])
            row[2] += 1
            row[3] += value
            row[4] += value == self.dq
        exchange_miner = {
            ex.id: sum(1 for a in ex.addresses if a in self.payout_recipients) for ex in self.exchanges
        }
        return {
            "schema": MANIFEST_SCHEMA,
            "config": cfg.as_dict(),
            "digest": chain_digest(self.blocks),
            "kind_counts": kinds,
            "pool_ledger": ledger,
            "fees_total_zat": fees_total,
            "actors": {
                a.id: {"kind": a.kind, "category": a.category, "name": a.name}
                for a in self.actors.values()
            },
            "address_owner": dict(sorted(self.owner.items())),
            "tx_categories": self.categories,
            "round_trips": sorted(self.round_trips, key=lambda r: (r[2], r[1])),
            "h3_decoys": self.h3_decoys,
            "pool_payouts": self.pool_payouts,
            "pools": {p.name: p.addresses[0] for p, _ in self.pools},
            "miner_roster": sorted(self.miner_roster),
            "founder_params": self.founder_params,
            "founder_report": sorted(founder_rows.values(), key=lambda r: (r[1], r[0])),
            "founder_withdrawal_heights": [h for h, _ in self.founder_withdrawals],
            "founder_withdrawal_txids": [t for _, t in self.founder_withdrawals],
            "founder_deposit_heights": [h for _, h, v in self.founder_deposits if v == self.dq],
            "exchange_miner_addresses": exchange_miner,
            "tsb_buyers": [b for b in self.tsb_buyers if b["txids"]],
            "tsb_decoys": [d for d in self.tsb_decoys if d["txids"]],
            "zz": {"private_txs": private, "joinsplits": js, "single_joinsplit_txs": single},
        }


def _schedule_rows(cfg: ScenarioConfig, blocks: list[Block]) -> list[tuple[str, str]]:
    prices = cfg.tsb_price_list
    if not prices or not blocks:
        return []
    first = utc_month(cfg.genesis_time)
    rows = []
    for month in sorted({utc_month(b.time) for b in blocks}):
        idx = (int(month[:4]) - int(first[:4])) * 12 + int(month[5:]) - int(first[5:])
        rows.append((month, format_zec(prices[idx % len(prices)])))
    return rows


def build(config: ScenarioConfig) -> Scenario:
    gen = _Generator(config)
    gen.run()
    tag_rows = []
    for pool, _ in gen.pools:
        tag_rows.append((pool.addresses[0], "pool", pool.name, "csv"))
    for ex in gen.exchanges:
        for a in ex.addresses:
            tag_rows.append((a, "exchange", ex.name, "csv"))
    return Scenario(
        config,
        gen.blocks,
        gen.manifest(),
        gen.founder_params,
        sorted(tag_rows),
        _schedule_rows(config, gen.blocks),
    )


def generate(config: ScenarioConfig, outdir) -> dict[str, Path]:
    """Build the scenario and write chain dump, manifest, founder list,
    tag CSV and price schedule into ``outdir``."""
    return build(config).write(outdir)
