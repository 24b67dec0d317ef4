"""Shared setup: the default synthetic ledger and its all-heuristics network."""

import argparse

from acn.heuristics import HeuristicConfig, build_context
from acn.network import build_network
from acn.synthgen import GeneratorConfig, generate_chain


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--seed", type=int, default=0, help="generator and experiment seed")
    p.add_argument("--tx-count", type=int, default=20_000)
    p.add_argument("--entities", type=int, default=200)
    return p


def default_network(args):
    ledger = generate_chain(GeneratorConfig(entity_count=args.entities, tx_count=args.tx_count,
                                            rng_seed=args.seed))
    cfg = HeuristicConfig()
    ctx = build_context(ledger.chain, cfg)
    net = build_network([t.tx_id for t in ledger.chain], ledger.chain, ctx, cfg, ledger.ground_truth)
    return ledger, net
