"""Bundled contract programs in IR assembly."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources

from ..vm import Program, assemble

FILES = {
    "MPCVote": "mpc_vote.asm",
    "MPCAuction": "mpc_auction.asm",
    "C1": "lock_c1.asm",
    "C2": "lock_c2.asm",
    "C3": "lock_c3.asm",
    "Token": "erc20.asm",
    "MPCProbe": "mpc_probe.asm",
}


def source(name: str) -> str:
    return resources.files(__package__).joinpath(FILES[name]).read_text()


@lru_cache(maxsize=None)
def load(name: str) -> Program:
    return assemble(source(name), name)


def load_all() -> dict:
    return {name: load(name) for name in FILES}
