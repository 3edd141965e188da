"""Architecture description and trained-model container.

A network is a stack of fully-pipelined sparse layers.  Each neuron sees
exactly F predecessor outputs (fixed before training by a seeded mask),
expands them into the monomial basis of degree <= D, applies a weight
vector, batch norm, an activation, and a learned-scale quantizer.  Hidden
layers use quantized ReLU (unsigned codes); the output layer uses batch
norm + identity with a signed quantizer, and classification is argmax
over the output codes.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .basis import MonomialBasis, count_monomials, enumerate_basis, expand
from .quantize import (
    BatchNormParams,
    Quantizer,
    bn_identity,
    dequantize,
    quantize,
)

# Hard cap on beta * fan_in so a single truth table never exceeds 2**24 entries.
ENUM_GUARD_BITS = 24

CHECKPOINT_VERSION = 1

# Benchmark architecture presets plus a desk-scale toy profile.  input_count is the raw
# feature dimension each dataset presents to layer 0.
PROFILES: dict[str, dict] = {
    "jsc-m": dict(layer_widths=[64, 32, 32, 32, 5], beta=3, fan_in=4, degree=2,
                  input_count=16, clock_period_ns=1.6),
    "jsc-m-lite": dict(layer_widths=[64, 32, 5], beta=3, fan_in=4, degree=6,
                       input_count=16, clock_period_ns=1.6),
    "jsc-xl": dict(layer_widths=[128, 64, 64, 64, 5], beta=5, fan_in=3, degree=4,
                   input_count=16, input_beta=7, input_fan_in=2,
                   clock_period_ns=2.0),
    "nid-lite": dict(layer_widths=[686, 147, 98, 49, 1], beta=2, fan_in=7, degree=4,
                     input_count=49, input_beta=1, clock_period_ns=1.6),
    "hdr": dict(layer_widths=[256, 100, 100, 100, 100, 10], beta=2, fan_in=6,
                degree=4, input_count=784, clock_period_ns=2.0),
    "spiral": dict(layer_widths=[8, 8, 2], beta=4, fan_in=2, degree=3,
                   input_count=2, clock_period_ns=1.6),
}


@dataclass(frozen=True)
class NetworkSpec:
    """Compile-time architecture description (one benchmark-table row)."""

    layer_widths: tuple
    beta: int
    fan_in: int
    degree: int
    input_count: int
    input_beta: int | None = None  # layer-0 override for the input code width
    input_fan_in: int | None = None  # layer-0 override for the fan-in
    seed: int = 0
    clock_period_ns: float = 1.6
    enum_guard: int = ENUM_GUARD_BITS

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        violations = validate_spec(self)
        if violations:
            raise ValueError("invalid NetworkSpec: " + "; ".join(violations))

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths)

    def layer_fan_in(self, layer: int) -> int:
        if layer == 0 and self.input_fan_in is not None:
            return self.input_fan_in
        return self.fan_in

    def layer_input_bits(self, layer: int) -> int:
        """Code width of each source feeding this layer."""
        if layer == 0:
            return self.input_beta if self.input_beta is not None else self.beta
        return self.beta

    def prev_width(self, layer: int) -> int:
        return self.input_count if layer == 0 else self.layer_widths[layer - 1]

    def table_address_bits(self, layer: int) -> int:
        return self.layer_input_bits(layer) * self.layer_fan_in(layer)


def validate_spec(spec) -> list[str]:
    """Return every violated invariant (empty list means the spec is valid)."""
    v: list[str] = []
    widths = tuple(spec.layer_widths)
    if len(widths) < 1:
        v.append("at least one layer required")
    if any(w < 1 for w in widths):
        v.append("all layer widths must be >= 1")
    if not (1 <= spec.beta <= 8):
        v.append(f"beta must be in [1, 8], got {spec.beta}")
    if spec.input_beta is not None and not (1 <= spec.input_beta <= 8):
        v.append(f"input_beta must be in [1, 8], got {spec.input_beta}")
    if spec.fan_in < 1:
        v.append(f"fan_in must be >= 1, got {spec.fan_in}")
    if spec.input_fan_in is not None and spec.input_fan_in < 1:
        v.append(f"input_fan_in must be >= 1, got {spec.input_fan_in}")
    if spec.degree < 1:
        v.append(f"degree must be >= 1, got {spec.degree}")
    if spec.input_count < 1:
        v.append(f"input_count must be >= 1, got {spec.input_count}")
    if not (spec.clock_period_ns > 0):
        v.append("clock_period_ns must be positive")
    if not v:
        for layer in range(len(widths)):
            fan = spec.layer_fan_in(layer)
            prev = spec.prev_width(layer)
            if fan > prev:
                v.append(f"layer {layer}: fan_in {fan} exceeds predecessor width {prev}")
            bits = spec.table_address_bits(layer)
            if bits > spec.enum_guard:
                v.append(
                    f"layer {layer}: enumeration guard violated "
                    f"({bits} address bits > cap {spec.enum_guard})"
                )
    return v


def spec_from_profile(name: str, **overrides) -> NetworkSpec:
    if name not in PROFILES:
        raise KeyError(f"unknown profile {name!r}; available: {sorted(PROFILES)}")
    kwargs = dict(PROFILES[name])
    kwargs.update(overrides)
    return NetworkSpec(**kwargs)


# ---------------------------------------------------------------------------
# Sparsity masks


def _covered_draw(rng, width: int, prev: int, fan: int) -> np.ndarray:
    """Random (width, fan) wiring that uses every predecessor output.

    A permutation of the predecessors is dealt round-robin over a shuffled
    neuron order (at most ceil(prev/width) <= fan distinct entries per
    neuron), then the remaining slots are filled uniformly without
    replacement from each neuron's unused predecessors.
    """
    rows: list[list[int]] = [[] for _ in range(width)]
    order = rng.permutation(width)
    for pos, p in enumerate(rng.permutation(prev)):
        rows[order[pos % width]].append(int(p))
    out = np.empty((width, fan), dtype=np.int64)
    for n, r in enumerate(rows):
        missing = fan - len(r)
        if missing:
            pool = np.setdiff1d(np.arange(prev), r)
            r = r + rng.choice(pool, size=missing, replace=False).tolist()
        out[n] = np.sort(r)
    return out


def build_masks(spec: NetworkSpec, seed: int, max_retries: int = 2000) -> list[np.ndarray]:
    """Draw per-neuron fixed fan-in wiring, one (width, F) index array per layer.

    Indices are distinct and sorted per neuron.  Whenever a layer draws at
    least as many wires as its predecessor has outputs, every predecessor
    output must be used at least once; such layers are drawn with
    _covered_draw (coverage by construction — whole-layer rejection is
    hopeless at benchmark scale), with a bounded redraw loop kept as a
    defensive backstop.  Narrower layers draw each neuron uniformly.
    """
    rng = np.random.default_rng(np.random.PCG64(seed))
    masks = []
    for layer in range(spec.n_layers):
        width = spec.layer_widths[layer]
        prev = spec.prev_width(layer)
        fan = spec.layer_fan_in(layer)
        need_coverage = fan * width >= prev
        for attempt in range(max(1, max_retries)):
            if need_coverage:
                m = _covered_draw(rng, width, prev, fan)
            else:
                m = np.stack([np.sort(rng.choice(prev, size=fan, replace=False))
                              for _ in range(width)])
            if not need_coverage or len(np.unique(m)) == prev:
                break
        else:
            raise RuntimeError(
                f"layer {layer}: could not cover all {prev} predecessor outputs "
                f"after {max_retries} redraws"
            )
        m.setflags(write=False)
        masks.append(m)
    return masks


# ---------------------------------------------------------------------------
# Trained parameters


@dataclass
class LayerParams:
    weights: np.ndarray  # (width, M)
    bn: BatchNormParams
    quant_scale: float

    def copy(self) -> "LayerParams":
        return LayerParams(self.weights.copy(), self.bn.copy(), self.quant_scale)


@dataclass
class TrainedModel:
    spec: NetworkSpec
    masks: list
    params: list
    input_quantizer: Quantizer
    bases: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.masks) != self.spec.n_layers or len(self.params) != self.spec.n_layers:
            raise ValueError("masks/params length must equal the layer count")
        if not self.bases:
            self.bases = [
                enumerate_basis(self.spec.layer_fan_in(l), self.spec.degree)
                for l in range(self.spec.n_layers)
            ]

    def layer_quantizer(self, layer: int) -> Quantizer:
        signed = layer == self.spec.n_layers - 1
        return Quantizer(bits=self.spec.beta, signed=signed,
                         scale=self.params[layer].quant_scale)

    def source_quantizer(self, layer: int) -> Quantizer:
        return self.input_quantizer if layer == 0 else self.layer_quantizer(layer - 1)


def input_quantizer_for(spec: NetworkSpec) -> Quantizer:
    """Signed quantizer covering normalized features in [-1, 1] with beta0 bits."""
    bits = spec.layer_input_bits(0)
    scale = 1.0 / max(1, (1 << (bits - 1)) - 1)
    return Quantizer(bits=bits, signed=True, scale=scale)


def init_model(spec: NetworkSpec, seed: int | None = None) -> TrainedModel:
    """Masks from the seeded generator, weights uniform in +-sqrt(1/M),
    identity batch norm, unit quantizer scales (retuned by the trainer)."""
    if seed is None:
        seed = spec.seed
    masks = build_masks(spec, seed)
    rng = np.random.default_rng(np.random.PCG64(seed + 1))
    params = []
    for layer in range(spec.n_layers):
        width = spec.layer_widths[layer]
        m = count_monomials(spec.layer_fan_in(layer), spec.degree)
        bound = np.sqrt(1.0 / m)
        w = rng.uniform(-bound, bound, size=(width, m))
        params.append(LayerParams(weights=w, bn=bn_identity(width), quant_scale=1.0))
    return TrainedModel(spec=spec, masks=masks, params=params,
                        input_quantizer=input_quantizer_for(spec))


# ---------------------------------------------------------------------------
# Bit-exact inference path (shared verbatim by tabulation and verification)


def neuron_preact(model: TrainedModel, layer: int, neuron: int,
                  codes_in: np.ndarray) -> np.ndarray:
    """Pre-quantization real output of one neuron for signed/unsigned codes.

    codes_in has shape (n, F) holding the codes of exactly the neuron's
    masked sources, in mask order.
    """
    qin = model.source_quantizer(layer)
    v = dequantize(codes_in, qin)
    m = expand(v, model.bases[layer])
    z = m @ model.params[layer].weights[neuron]
    h = np.asarray(
        model.params[layer].bn.gamma[neuron]
        * (z - model.params[layer].bn.running_mean[neuron])
        / np.sqrt(model.params[layer].bn.running_var[neuron] + model.params[layer].bn.eps)
        + model.params[layer].bn.beta_shift[neuron]
    )
    if layer < model.spec.n_layers - 1:
        h = np.maximum(h, 0.0)
    return h


def neuron_eval(model: TrainedModel, layer: int, neuron: int,
                codes_in: np.ndarray) -> np.ndarray:
    """Quantized output codes of one neuron.  This is THE inference path:
    tabulation enumerates it and equivalence checking replays it."""
    return quantize(neuron_preact(model, layer, neuron, codes_in),
                    model.layer_quantizer(layer))


def forward_codes(model: TrainedModel, codes0: np.ndarray) -> np.ndarray:
    """Layer-by-layer quantized inference from input codes to output codes."""
    acts = np.asarray(codes0, dtype=np.int64)
    if acts.ndim != 2 or acts.shape[1] != model.spec.input_count:
        raise ValueError(f"expected (n, {model.spec.input_count}) input codes")
    for layer in range(model.spec.n_layers):
        width = model.spec.layer_widths[layer]
        out = np.empty((acts.shape[0], width), dtype=np.int64)
        mask = model.masks[layer]
        for j in range(width):
            out[:, j] = neuron_eval(model, layer, j, acts[:, mask[j]])
        acts = out
    return acts


def eval_codes(model: TrainedModel, x: np.ndarray) -> np.ndarray:
    """Quantize real features and run the bit-exact inference path."""
    codes0 = quantize(np.asarray(x, dtype=np.float64), model.input_quantizer)
    return forward_codes(model, codes0)


def predict(model: TrainedModel, x: np.ndarray) -> np.ndarray:
    return labels_from_codes(eval_codes(model, x))


def labels_from_codes(out_codes: np.ndarray) -> np.ndarray:
    """Argmax over output codes; a single output column is thresholded at 0."""
    if out_codes.shape[1] == 1:
        return (out_codes[:, 0] > 0).astype(np.int64)
    return np.argmax(out_codes, axis=1)


def accuracy(model: TrainedModel, features: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(predict(model, features) == labels))


# ---------------------------------------------------------------------------
# Checkpoint serialization (versioned .npz; round-trips bit-exactly)


def save_checkpoint(model: TrainedModel, path) -> None:
    spec = model.spec
    arrays = {
        "version": np.int64(CHECKPOINT_VERSION),
        "layer_widths": np.array(spec.layer_widths, dtype=np.int64),
        "scalars": np.array(
            [spec.beta, spec.fan_in, spec.degree, spec.input_count,
             -1 if spec.input_beta is None else spec.input_beta,
             -1 if spec.input_fan_in is None else spec.input_fan_in,
             spec.seed, spec.enum_guard],
            dtype=np.int64,
        ),
        "clock_period_ns": np.float64(spec.clock_period_ns),
        "input_scale": np.float64(model.input_quantizer.scale),
    }
    for layer, (mask, p) in enumerate(zip(model.masks, model.params)):
        arrays[f"mask_{layer}"] = np.asarray(mask, dtype=np.int64)
        arrays[f"w_{layer}"] = p.weights
        arrays[f"bn_{layer}"] = np.stack(
            [p.bn.gamma, p.bn.beta_shift, p.bn.running_mean, p.bn.running_var]
        )
        arrays[f"bn_eps_{layer}"] = np.float64(p.bn.eps)
        arrays[f"scale_{layer}"] = np.float64(p.quant_scale)
    np.savez(path, **arrays)


def load_checkpoint(path) -> TrainedModel:
    with np.load(path) as z:
        version = int(z["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        s = z["scalars"]
        spec = NetworkSpec(
            layer_widths=tuple(int(w) for w in z["layer_widths"]),
            beta=int(s[0]), fan_in=int(s[1]), degree=int(s[2]),
            input_count=int(s[3]),
            input_beta=None if int(s[4]) < 0 else int(s[4]),
            input_fan_in=None if int(s[5]) < 0 else int(s[5]),
            seed=int(s[6]), enum_guard=int(s[7]),
            clock_period_ns=float(z["clock_period_ns"]),
        )
        masks, params = [], []
        for layer in range(spec.n_layers):
            masks.append(z[f"mask_{layer}"])
            bn = z[f"bn_{layer}"]
            params.append(
                LayerParams(
                    weights=z[f"w_{layer}"],
                    bn=BatchNormParams(
                        gamma=bn[0], beta_shift=bn[1],
                        running_mean=bn[2], running_var=bn[3],
                        eps=float(z[f"bn_eps_{layer}"]),
                    ),
                    quant_scale=float(z[f"scale_{layer}"]),
                )
            )
        iq = input_quantizer_for(spec).with_scale(float(z["input_scale"]))
    return TrainedModel(spec=spec, masks=masks, params=params, input_quantizer=iq)
