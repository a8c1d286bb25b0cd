"""Parameter and multiply-accumulate accounting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import Shape
from .model import ModelSpec, init_weights

# Published reference figures for the lightweight comparison; documentation only.
REFERENCE_BUDGETS = {
    "VGG16": {"params": 138e6, "madd": 154.7e9},
    "AlexNet": {"params": 25.704e6, "madd": 725e6},
    "Proposed": {"params": 3.7674e6, "madd": 371.93e6},
    "MobileNetV2": {"params": 4.2e6, "madd": 575e6},
    "ShuffleNetV2": {"params": 5.4e6, "madd": 564e6},
    "NASNet": {"params": 4.2e6, "madd": 567e6},
}


def count_params(spec: ModelSpec) -> int:
    """Trainable elements: conv (kh*kw*Cin+1)*Cout, dense (in+1)*out, BN 2*C."""
    total = 0
    for layer, in_shape in zip(spec.layers, spec.shapes()):
        total += sum(int(np.prod(s)) for s in layer.param_shapes(in_shape).values())
    return total


def count_madd(spec: ModelSpec, input_shape: Shape | None = None) -> int:
    """One unit per multiply-accumulate in conv and dense layers; everything else is free."""
    if input_shape is not None and tuple(input_shape) != spec.input_shape:
        spec = ModelSpec(spec.layers, tuple(input_shape), spec.n_classes)
    return sum(layer.madds(s) for layer, s in zip(spec.layers, spec.shapes()))


@dataclass(frozen=True)
class LayerRow:
    index: int
    kind: str
    out_shape: Shape
    params: int
    madds: int


def analyze(spec: ModelSpec) -> tuple[list[LayerRow], int, int]:
    """Per-layer table plus totals, with parameters counted from materialized tensors."""
    weights = init_weights(spec, seed=0)
    shapes = spec.shapes()
    rows = []
    for i, layer in enumerate(spec.layers):
        n = sum(v.size for k, v in weights.params.items() if k.split(".")[0] == str(i))
        rows.append(LayerRow(i, layer.kind, shapes[i + 1], n, layer.madds(shapes[i])))
    return rows, sum(r.params for r in rows), sum(r.madds for r in rows)


def format_table(rows: list[LayerRow], total_params: int, total_madd: int) -> str:
    lines = [f"{'#':>3}  {'layer':<12} {'output':<16} {'params':>12} {'MAdd':>15}"]
    for r in rows:
        shape = "x".join(str(d) for d in r.out_shape)
        lines.append(f"{r.index:>3}  {r.kind:<12} {shape:<16} {r.params:>12,} {r.madds:>15,}")
    lines.append(f"{'':>3}  {'total':<12} {'':<16} {total_params:>12,} {total_madd:>15,}")
    return "\n".join(lines)
