"""Scenario configuration for the synthetic chain generator.

Configs are flat ``key = value`` text files; ``#`` starts a comment. Amounts
are written in ZEC and converted exactly to zat.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

from ..errors import ConfigError
from ..model import zec_to_zat


@dataclass
class ScenarioConfig:
    seed: int = 1
    block_count: int = 5000
    genesis_time: int = 1477641600  # 2016-10-28 08:00 UTC
    block_interval: int = 150

    block_reward: str = "12.5"
    founder_reward: str = "2.5"
    fee: str = "0.0001"

    founder_params: int = 48
    founder_cap: str = "44272.5"
    founder_deposit_quantum: str = "249.9999"
    founder_withdrawal_quantum: str = "250.0001"
    founder_step_min: int = 6
    founder_step_max: int = 10
    founder_burst: int = 4  # deposits (or withdrawals) per burst
    founder_payout_reuse: int = 25  # withdrawals per fresh founder address

    pools: int = 3
    pool_share: float = 0.8  # fraction of blocks mined by pools
    pool_members: int = 220
    pool_fanout_min: int = 110
    pool_fanout_max: int = 180
    pool_deposit_period: int = 25
    pool_payout_period: int = 50
    exchange_member_rate: float = 0.1
    member_deposit_rate: float = 0.05
    member_sell_rate: float = 0.2

    solo_miners: int = 4
    solo_deposit_period: int = 60

    exchanges: int = 2
    exchange_consolidate_period: int = 40
    users: int = 200
    user_activity: float = 0.015  # probability a user acts in a given block
    private_rate: float = 0.08
    round_trip_rate: float = 0.05
    round_trip_gap_max: int = 5

    h3_decoys: int = 0
    tsb_buyers: int = 0
    tsb_decoys: int = 0
    tsb_prices: str = "100,200,500"
    tsb_busy_txs: int = 260
    exchange_float: str = "1200"  # hot-wallet value held back from retail while planted actors wait

    def __post_init__(self):
        self.validate()

    def zat(self, name: str) -> int:
        return zec_to_zat(getattr(self, name))

    @property
    def miner_reward(self) -> int:
        return self.zat("block_reward") - self.zat("founder_reward")

    @property
    def founder_utxos_per_deposit(self) -> int:
        return (self.zat("founder_deposit_quantum") + self.zat("fee")) // self.zat("founder_reward")

    @property
    def tsb_price_list(self) -> list[int]:
        return [zec_to_zat(p.strip()) for p in self.tsb_prices.split(",") if p.strip()]

    def validate(self) -> None:
        try:
            for name in ("block_reward", "founder_reward", "fee", "founder_cap", "exchange_float",
                         "founder_deposit_quantum", "founder_withdrawal_quantum"):
                self.zat(name)
            prices = self.tsb_price_list
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if self.block_count < 1:
            raise ConfigError("block_count must be positive")
        if self.miner_reward <= 0:
            raise ConfigError("founder_reward must be below block_reward")
        if (self.zat("founder_deposit_quantum") + self.zat("fee")) % self.zat("founder_reward"):
            raise ConfigError("founder deposit quantum plus fee must be a whole number of founder rewards")
        if self.zat("founder_cap") < self.zat("founder_deposit_quantum") + self.zat("fee"):
            raise ConfigError("founder_cap is below the founder deposit quantum")
        if self.founder_params < 1:
            raise ConfigError("founder_params must be at least 1")
        for lo, hi in (("founder_step_min", "founder_step_max"), ("pool_fanout_min", "pool_fanout_max")):
            if not 1 <= getattr(self, lo) <= getattr(self, hi):
                raise ConfigError(f"{lo}..{hi} is an empty range")
        if self.pools and self.pool_members < self.pool_fanout_max - 1:
            raise ConfigError("pool_members must cover the largest payout fan-out")
        if self.round_trip_gap_max < 1:
            raise ConfigError("round_trip_gap_max must be at least 1")
        if self.pools < 0 or self.solo_miners < 0 or self.pools + self.solo_miners == 0:
            raise ConfigError("need at least one pool or solo miner")
        if (self.tsb_buyers or self.tsb_decoys) and not prices:
            raise ConfigError("tsb_prices is empty")
        if self.exchanges < 1 and (self.users or self.tsb_buyers or self.tsb_decoys or self.h3_decoys):
            raise ConfigError("users and planted actors need at least one exchange")
        for name in ("pool_share", "exchange_member_rate", "member_deposit_rate", "member_sell_rate",
                     "user_activity", "private_rate", "round_trip_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must be a probability")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "ScenarioConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            f = known.get(key)
            if f is None:
                raise ConfigError(f"unknown scenario key {key!r}")
            kind = f.type if isinstance(f.type, str) else f.type.__name__
            try:
                kwargs[key] = {"int": int, "float": float}.get(kind, str)(raw)
            except ValueError:
                raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
        return cls(**kwargs)

    @classmethod
    def load(cls, path, overrides: Mapping[str, str] = None) -> "ScenarioConfig":
        values = read_key_values(path)
        values.update(overrides or {})
        return cls.from_mapping(values)


def read_key_values(path) -> dict[str, str]:
    """Parse a flat ``key = value`` file."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        values[key.strip()] = value.strip()
    return values
