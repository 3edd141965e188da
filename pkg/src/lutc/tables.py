"""Neuron-to-truth-table conversion by exhaustive enumeration.

Each neuron becomes one logical LUT: 2**(input_bits) entries of
output_bits-wide codes.  Address packing puts input 0 in the least
significant bit slice, input j in bits [j*b, (j+1)*b); signed codes are
stored as two's-complement bit patterns.  The emitted RTL uses the same
convention, so simulation and hardware agree bit for bit.
"""

from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass

import numpy as np

from .model import TrainedModel, neuron_eval
from .quantize import decode_bits, encode_bits

# enumerate/evaluate at most this many addresses at a time
CHUNK = 1 << 16


@dataclass
class TruthTable:
    input_bits: int
    output_bits: int
    entries: np.ndarray  # (2**input_bits,) uint32 bit patterns

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.uint32)
        if self.entries.shape != (1 << self.input_bits,):
            raise ValueError(
                f"expected {1 << self.input_bits} entries, got {self.entries.shape}"
            )
        if self.entries.size and int(self.entries.max()) >= (1 << self.output_bits):
            raise ValueError(f"entry exceeds {self.output_bits}-bit range")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TruthTable)
            and self.input_bits == other.input_bits
            and self.output_bits == other.output_bits
            and np.array_equal(self.entries, other.entries)
        )

    def sha256(self) -> str:
        return hashlib.sha256(self.entries.astype("<u4").tobytes()).hexdigest()


def decode_address(addrs: np.ndarray, bits_per_input: int, fan_in: int) -> np.ndarray:
    """Split packed addresses into (n, fan_in) raw bit fields, input 0 at LSB."""
    addrs = np.asarray(addrs, dtype=np.int64)
    fields = np.empty(addrs.shape + (fan_in,), dtype=np.int64)
    mask = (1 << bits_per_input) - 1
    for j in range(fan_in):
        fields[..., j] = (addrs >> (j * bits_per_input)) & mask
    return fields


def pack_address(fields: np.ndarray, bits_per_input: int) -> np.ndarray:
    """Inverse of decode_address: (n, fan_in) raw fields -> packed addresses."""
    fields = np.asarray(fields, dtype=np.int64)
    addrs = np.zeros(fields.shape[:-1], dtype=np.int64)
    for j in range(fields.shape[-1]):
        addrs |= fields[..., j] << (j * bits_per_input)
    return addrs


def tabulate_neuron(model: TrainedModel, layer: int, neuron: int) -> TruthTable:
    """Enumerate every input combination through the bit-exact model path."""
    spec = model.spec
    bits_in = spec.layer_input_bits(layer)
    fan = spec.layer_fan_in(layer)
    addr_bits = bits_in * fan
    if addr_bits > spec.enum_guard:
        raise ValueError(
            f"layer {layer}: {addr_bits} address bits exceed the enumeration "
            f"guard ({spec.enum_guard})"
        )
    qin = model.source_quantizer(layer)
    qout = model.layer_quantizer(layer)
    total = 1 << addr_bits
    entries = np.empty(total, dtype=np.uint32)
    for start in range(0, total, CHUNK):
        addrs = np.arange(start, min(start + CHUNK, total), dtype=np.int64)
        codes_in = decode_bits(decode_address(addrs, bits_in, fan), qin)
        codes_out = neuron_eval(model, layer, neuron, codes_in)
        entries[start : start + addrs.size] = encode_bits(codes_out, qout)
    return TruthTable(input_bits=addr_bits, output_bits=spec.beta, entries=entries)


def tabulate_model(model: TrainedModel) -> list:
    """One table per neuron, grouped per layer."""
    return [
        [tabulate_neuron(model, layer, j) for j in range(width)]
        for layer, width in enumerate(model.spec.layer_widths)
    ]


def verify_table(model: TrainedModel, table: TruthTable, layer: int, neuron: int,
                 sample_count: int = 4096, seed: int = 0) -> np.ndarray:
    """Re-evaluate addresses through the model path; returns mismatching
    addresses.  Exhaustive when the table has at most 2**16 entries."""
    total = table.entries.size
    if total <= (1 << 16):
        addrs = np.arange(total, dtype=np.int64)
    else:
        rng = np.random.default_rng(np.random.PCG64(seed))
        addrs = rng.integers(0, total, size=sample_count, dtype=np.int64)
    bits_in = model.spec.layer_input_bits(layer)
    fan = model.spec.layer_fan_in(layer)
    qin = model.source_quantizer(layer)
    qout = model.layer_quantizer(layer)
    codes_in = decode_bits(decode_address(addrs, bits_in, fan), qin)
    expect = encode_bits(neuron_eval(model, layer, neuron, codes_in), qout)
    return addrs[table.entries[addrs] != expect]


# ---------------------------------------------------------------------------
# Dump format: one text file per layer, header + hex entries


def dump_tables(tables: list, out_dir) -> list:
    """Write layer{l}_tables.txt files; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for layer, layer_tables in enumerate(tables):
        path = os.path.join(out_dir, f"layer{layer}_tables.txt")
        with open(path, "w", encoding="utf-8") as f:
            f.write("lut-tables v1\n")
            f.write(f"layer {layer}\n")
            f.write(f"neurons {len(layer_tables)}\n")
            f.write(f"input_bits {layer_tables[0].input_bits}\n")
            f.write(f"output_bits {layer_tables[0].output_bits}\n")
            for j, table in enumerate(layer_tables):
                f.write(f"neuron {j}\n")
                ent = table.entries
                for start in range(0, ent.size, 16):
                    f.write(" ".join(f"{v:x}" for v in ent[start : start + 16]) + "\n")
        paths.append(path)
    return paths


def load_tables(in_dir) -> list:
    """Read back every layer{l}_tables.txt in layer order."""
    pattern = re.compile(r"layer(\d+)_tables\.txt$")
    found = {}
    for name in os.listdir(in_dir):
        m = pattern.match(name)
        if m:
            found[int(m.group(1))] = os.path.join(in_dir, name)
    if not found:
        raise FileNotFoundError(f"no table dumps found in {in_dir}")
    if sorted(found) != list(range(len(found))):
        raise ValueError(f"non-contiguous layer dumps in {in_dir}: {sorted(found)}")

    tables = []
    for layer in range(len(found)):
        with open(found[layer], "r", encoding="utf-8") as f:
            lines = [ln.strip() for ln in f if ln.strip()]
        if lines[0] != "lut-tables v1":
            raise ValueError(f"{found[layer]}: bad header {lines[0]!r}")
        head = dict(ln.split() for ln in lines[1:5])
        n_neurons = int(head["neurons"])
        input_bits = int(head["input_bits"])
        output_bits = int(head["output_bits"])
        size = 1 << input_bits
        layer_tables = []
        pos = 5
        for j in range(n_neurons):
            if lines[pos] != f"neuron {j}":
                raise ValueError(f"{found[layer]}: expected 'neuron {j}', got {lines[pos]!r}")
            pos += 1
            vals = []
            while len(vals) < size:
                vals.extend(int(v, 16) for v in lines[pos].split())
                pos += 1
            layer_tables.append(
                TruthTable(input_bits=input_bits, output_bits=output_bits,
                           entries=np.array(vals, dtype=np.uint32))
            )
        tables.append(layer_tables)
    return tables
