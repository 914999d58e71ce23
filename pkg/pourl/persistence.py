"""On-disk artifacts of a run: chain dumps, network snapshots, CSV series and the JSON report.

Chain dump layout (little-endian):

    b"PCHN" | u32 format version | u32 header length | UTF-8 JSON header
    (the oracle header plus "blocks", the record count)
    then per block: u32 record length | canonical block bytes
"""
import csv
import json
import os
import struct
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from pourl.consensus import LedgerEntry
from pourl.environment import Oracle, oracle_from_header
from pourl.errors import DumpFormatError
from pourl.hashchain import Chain, canonical_bytes, decode_block
from pourl.metrics import CSV_HEADER, MetricRow, moving_average
from pourl.mlp import NetworkParams, params_from_snapshot, snapshot_bytes

CHAIN_MAGIC = b"PCHN"
CHAIN_FORMAT_VERSION = 1


def chain_dump_bytes(chain: Chain, oracle: Oracle) -> bytes:
    header = json.dumps(dict(oracle.header(), blocks=len(chain)), sort_keys=True).encode("utf-8")
    parts = [CHAIN_MAGIC, struct.pack("<II", CHAIN_FORMAT_VERSION, len(header)), header]
    for block in chain:
        record = canonical_bytes(block)
        parts.append(struct.pack("<I", len(record)))
        parts.append(record)
    return b"".join(parts)


def parse_chain_dump(data: bytes) -> Tuple[Chain, Dict[str, Any]]:
    """Decode a dump into its blocks and header; nothing is validated beyond the layout."""
    if len(data) < 12 or data[:4] != CHAIN_MAGIC:
        raise DumpFormatError("not a chain dump (missing PCHN magic)")
    version, header_len = struct.unpack_from("<II", data, 4)
    if version != CHAIN_FORMAT_VERSION:
        raise DumpFormatError(f"unsupported chain dump version {version}")
    offset = 12
    if offset + header_len > len(data):
        raise DumpFormatError("header truncated")
    try:
        header = json.loads(data[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DumpFormatError(f"header is not JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise DumpFormatError("header must be a JSON object")
    offset += header_len
    blocks = []
    while offset < len(data):
        if offset + 4 > len(data):
            raise DumpFormatError("record length truncated")
        (size,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if offset + size > len(data):
            raise DumpFormatError(f"record {len(blocks)} truncated")
        blocks.append(decode_block(data[offset:offset + size]))
        offset += size
    if not blocks:
        raise DumpFormatError("dump holds no blocks")
    expected = header.get("blocks")
    if isinstance(expected, bool) or not isinstance(expected, int):
        raise DumpFormatError("header lacks an integer block count")
    if len(blocks) != expected:
        raise DumpFormatError(f"header announces {expected} blocks, dump holds {len(blocks)}")
    return Chain(tuple(blocks)), header


def block_json(block) -> Dict[str, Any]:
    return {
        "height": block.height,
        "author": block.author,
        "action": block.action,
        "reward": block.reward,
        "state": list(block.state),
        "payload": block.payload.hex(),
        "prev_hash": block.prev_hash.hex(),
        "digest": block.digest.hex(),
    }


def chain_json_lines(chain: Chain) -> List[str]:
    return [json.dumps(block_json(b), sort_keys=True) for b in chain]


class ArtifactStore:
    """Everything a run writes lives under one output directory."""

    def __init__(self, out_dir: str) -> None:
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)

    def path(self, *parts: str) -> str:
        return os.path.join(self.out_dir, *parts)

    def _open(self, name: str, mode: str, **kwargs):
        full = self.path(name)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        return open(full, mode, **kwargs)

    # chains

    def save_chain(self, stem: str, chain: Chain, oracle: Oracle) -> str:
        name = os.path.join("chains", f"{stem}.chain")
        with self._open(name, "wb") as f:
            f.write(chain_dump_bytes(chain, oracle))
        return self.path(name)

    def save_chains(self, chains: Dict[str, Chain], oracle: Oracle) -> List[str]:
        return [self.save_chain(stem, chains[stem], oracle) for stem in sorted(chains)]

    # parameters

    def save_params(self, node_id: int, params: NetworkParams) -> str:
        name = os.path.join("params", f"node_{node_id}.qnet")
        with self._open(name, "wb") as f:
            f.write(snapshot_bytes(params))
        return self.path(name)

    # tables

    def save_metrics(self, rows: Iterable[MetricRow]) -> str:
        with self._open("metrics.csv", "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for row in rows:
                writer.writerow(row.as_row())
        return self.path("metrics.csv")

    def save_ledger(self, entries: Sequence[LedgerEntry]) -> str:
        with self._open("ledger.csv", "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(("node_id", "award"))
            for entry in entries:
                writer.writerow((entry.node_id, repr(entry.award)))
        return self.path("ledger.csv")

    def save_curve(self, rewards: Sequence[float], window: int) -> str:
        """Per-block reward with its trailing moving average (blank until a full window exists)."""
        averages = moving_average(rewards, window)
        with self._open("curve.csv", "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(("height", "reward", f"moving_average_{window}"))
            for i, reward in enumerate(rewards):
                k = i - window + 1
                writer.writerow((i + 1, repr(reward), repr(float(averages[k])) if k >= 0 else ""))
        return self.path("curve.csv")

    def save_report(self, report: Dict[str, Any]) -> str:
        with self._open("report.json", "w", encoding="utf-8") as f:
            json.dump(_plain(report), f, indent=2, sort_keys=True, allow_nan=False)
            f.write("\n")
        return self.path("report.json")


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def load_chain(path: str) -> Tuple[Chain, Oracle]:
    """Read a dump and rebuild the oracle named in its header."""
    with open(path, "rb") as f:
        data = f.read()
    chain, header = parse_chain_dump(data)
    try:
        oracle = oracle_from_header(header)
    except (ValueError, TypeError, KeyError) as exc:
        raise DumpFormatError(f"cannot rebuild oracle from header: {exc}") from exc
    return chain, oracle


def load_params(path: str) -> NetworkParams:
    with open(path, "rb") as f:
        return params_from_snapshot(f.read())
