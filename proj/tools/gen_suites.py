#!/usr/bin/env python3
"""Regenerates data/suites/*.json: the normalization layers of the CIFAR
(32x32 input) variants of four public architectures, in forward order."""

import json
import pathlib

BATCH = 256


def resnet50():
    layers = [("bn1", 64, 32)]
    in_planes, res = 64, 32
    for stage, (planes, blocks, stride) in enumerate(
            [(64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)], start=1):
        for b in range(blocks):
            s = stride if b == 0 else 1
            out_res = res // s
            tag = f"layer{stage}.{b}"
            layers += [(f"{tag}.bn1", planes, res), (f"{tag}.bn2", planes, out_res),
                       (f"{tag}.bn3", 4 * planes, out_res)]
            if s != 1 or in_planes != 4 * planes:
                layers.append((f"{tag}.shortcut", 4 * planes, out_res))
            in_planes, res = 4 * planes, out_res
    return layers


def mobilenetv1():
    cfg = [64, (128, 2), 128, (256, 2), 256, (512, 2), 512, 512, 512, 512, 512, (1024, 2), 1024]
    layers = [("bn1", 32, 32)]
    in_planes, res = 32, 32
    for i, c in enumerate(cfg):
        out, stride = (c, 1) if isinstance(c, int) else c
        res //= stride
        layers += [(f"layers.{i}.bn1", in_planes, res), (f"layers.{i}.bn2", out, res)]
        in_planes = out
    return layers


def mobilenetv2():
    cfg = [(1, 16, 1, 1), (6, 24, 2, 1), (6, 32, 3, 2), (6, 64, 4, 2),
           (6, 96, 3, 1), (6, 160, 3, 2), (6, 320, 1, 1)]
    layers = [("bn1", 32, 32)]
    in_planes, res, i = 32, 32, 0
    for expansion, out, blocks, stride in cfg:
        for b in range(blocks):
            s = stride if b == 0 else 1
            planes = expansion * in_planes
            out_res = res // s
            tag = f"layers.{i}"
            layers += [(f"{tag}.bn1", planes, res), (f"{tag}.bn2", planes, out_res),
                       (f"{tag}.bn3", out, out_res)]
            if s == 1 and in_planes != out:
                layers.append((f"{tag}.shortcut", out, out_res))
            in_planes, res, i = out, out_res, i + 1
    layers.append(("bn2", 1280, res))
    return layers


def densenet121():
    growth, layers = 32, []
    planes, res = 2 * growth, 32
    for d, blocks in enumerate([6, 12, 24, 16], start=1):
        for b in range(blocks):
            layers += [(f"dense{d}.{b}.bn1", planes, res), (f"dense{d}.{b}.bn2", 4 * growth, res)]
            planes += growth
        if d < 4:
            layers.append((f"trans{d}.bn", planes, res))
            planes //= 2
            res //= 2
    layers.append(("bn", planes, res))
    return layers


def main():
    out_dir = pathlib.Path(__file__).resolve().parent.parent / "data" / "suites"
    out_dir.mkdir(parents=True, exist_ok=True)
    for key, name, fn in [("resnet50", "ResNet-50", resnet50), ("mobilenetv1", "MobileNetV1", mobilenetv1),
                          ("mobilenetv2", "MobileNetV2", mobilenetv2), ("densenet121", "DenseNet-121", densenet121)]:
        doc = {
            "network": name,
            "input": [32, 32],
            "batch": BATCH,
            "layers": [{"name": n, "channels": c, "height": r, "width": r} for n, c, r in fn()],
        }
        (out_dir / f"{key}.json").write_text(json.dumps(doc, indent=1) + "\n")
        print(key, len(doc["layers"]), "layers")


if __name__ == "__main__":
    main()
