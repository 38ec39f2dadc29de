#!/usr/bin/env python3
"""Export a torch.nn.Sequential feature network into the unigan container format.

Supported modules: Conv2d (square kernel, symmetric padding), ReLU, Tanh,
AvgPool2d (square, stride == kernel), AdaptiveAvgPool2d(1), Flatten (dropped),
Linear. Layer ids are "layer<index>" in module order, skipping Flatten.

Without --model a small random network is exported, together with a probe
container holding one input and the float64 torch activations of every layer;
the C++ tests compare against it.

    python3 tools/export_torch_extractor.py --out tests/data/torch_extractor.ugck \
        --probe tests/data/torch_probe.ugck
"""

import argparse
import json
import struct
from pathlib import Path

import torch
from torch import nn

MAGIC = b"UGCK"
VERSION = 1


def write_container(path, records, tensors):
    out = bytearray(MAGIC)
    out += struct.pack("<I", VERSION)
    out += struct.pack("<I", len(records))
    for name, text in records.items():
        n, t = name.encode(), text.encode()
        out += struct.pack("<I", len(n)) + n + struct.pack("<Q", len(t)) + t
    out += struct.pack("<I", len(tensors))
    for name, tensor in tensors:
        n = name.encode()
        arr = tensor.detach().to(torch.float32).contiguous()
        out += struct.pack("<I", len(n)) + n + struct.pack("<I", arr.dim())
        out += b"".join(struct.pack("<Q", d) for d in arr.shape)
        out += arr.numpy().astype("<f4").tobytes()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(bytes(out))


def describe(model):
    layers, tensors = [], []
    for i, m in enumerate(model):
        lid = f"layer{i}"
        if isinstance(m, nn.Conv2d):
            k, s, p = m.kernel_size, m.stride, m.padding
            if k[0] != k[1] or s[0] != s[1] or p[0] != p[1]:
                raise ValueError(f"{lid}: only square kernels, strides and paddings are supported")
            layers.append({"id": lid, "type": "conv", "stride": s[0], "pad": p[0], "kernel": k[0]})
            tensors.append((lid + ".weight", m.weight))
            if m.bias is not None:
                tensors.append((lid + ".bias", m.bias))
        elif isinstance(m, nn.Linear):
            layers.append({"id": lid, "type": "linear"})
            tensors.append((lid + ".weight", m.weight))
            if m.bias is not None:
                tensors.append((lid + ".bias", m.bias))
        elif isinstance(m, nn.ReLU):
            layers.append({"id": lid, "type": "relu"})
        elif isinstance(m, nn.Tanh):
            layers.append({"id": lid, "type": "tanh"})
        elif isinstance(m, nn.AvgPool2d):
            k = m.kernel_size if isinstance(m.kernel_size, int) else m.kernel_size[0]
            layers.append({"id": lid, "type": "avg_pool", "kernel": k})
        elif isinstance(m, nn.AdaptiveAvgPool2d) and m.output_size in (1, (1, 1)):
            layers.append({"id": lid, "type": "global_avg_pool"})
        elif isinstance(m, nn.Flatten):
            continue
        else:
            raise ValueError(f"{lid}: unsupported module {type(m).__name__}")
    return layers, tensors


def demo_model():
    return nn.Sequential(
        nn.Conv2d(3, 8, 3, stride=2, padding=1), nn.ReLU(),
        nn.Conv2d(8, 16, 3, stride=1, padding=1), nn.Tanh(),
        nn.AvgPool2d(2),
        nn.Conv2d(16, 16, 3, stride=2, padding=1), nn.ReLU(),
        nn.AdaptiveAvgPool2d(1), nn.Flatten(), nn.Linear(16, 10))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", required=True, help="container to write")
    ap.add_argument("--model", help="torch.save'd nn.Sequential; default: a random demo network")
    ap.add_argument("--mean", type=float, nargs=3, default=[0.485, 0.456, 0.406])
    ap.add_argument("--std", type=float, nargs=3, default=[0.229, 0.224, 0.225])
    ap.add_argument("--probe", help="also write a probe input and reference activations here")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    model = torch.load(args.model, weights_only=False) if args.model else demo_model()
    model.eval()
    # Weights are stored as float32; round them first so the reference uses the same values.
    with torch.no_grad():
        for p in model.parameters():
            p.copy_(p.to(torch.float32))
    layers, tensors = describe(model)
    net = {"mean": args.mean, "std": args.std, "layers": layers}
    write_container(args.out, {"network": json.dumps(net)}, tensors)

    if args.probe:
        model = model.double()
        image = (torch.rand(2, 3, 32, 32, generator=torch.Generator().manual_seed(args.seed + 1)) * 2 - 1)
        image = image.to(torch.float32).double()
        mean = torch.tensor(args.mean, dtype=torch.float64).view(1, 3, 1, 1)
        std = torch.tensor(args.std, dtype=torch.float64).view(1, 3, 1, 1)
        x = ((image + 1) / 2 - mean) / std
        outputs = [("input", image)]
        ids = iter(layer["id"] for layer in layers)
        with torch.no_grad():
            for m in model:
                if isinstance(m, nn.Flatten):
                    continue
                if isinstance(m, nn.Linear):
                    x = m(x.flatten(1)).view(x.shape[0], -1, 1, 1)
                else:
                    x = m(x)
                outputs.append((next(ids), x))
        write_container(args.probe, {"probe": json.dumps({"layers": [l["id"] for l in layers]})}, outputs)


if __name__ == "__main__":
    main()
