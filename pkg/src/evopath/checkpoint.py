"""Checkpoint container for a ModuleBank plus named genotypes.

Layout: a 4-byte little-endian uint32 header length, a UTF-8 JSON header,
then raw little-endian float32 sections in exactly the order the header's
``sections`` list declares (every module weight/bias, then every head).
Round-trips are bit-exact for float32 banks.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .config import HyperParams, hyperparams_from_dict
from .network import Genotype, Head, LayerModules, ModuleBank

FORMAT_VERSION = 1


def _sections_for(bank: ModuleBank) -> list[dict]:
    sections = []
    for layer, lm in enumerate(bank.layers):
        for m in range(bank.hp.modules_per_layer):
            sections.append(
                {"name": f"layer{layer}/module{m}/weights", "shape": list(lm.weights[m].shape)}
            )
            sections.append(
                {"name": f"layer{layer}/module{m}/bias", "shape": list(lm.biases[m].shape)}
            )
    for task in sorted(bank.heads):
        head = bank.heads[task]
        sections.append({"name": f"head/{task}/weights", "shape": list(head.weights.shape)})
        sections.append({"name": f"head/{task}/bias", "shape": list(head.bias.shape)})
    return sections


def save_checkpoint(
    path: str | Path, bank: ModuleBank, genotypes: dict[str, Genotype] | None = None
) -> None:
    if bank.dtype != np.float32:
        raise ValueError("checkpoints store float32 banks only")
    genotypes = genotypes or {}
    header = {
        "format_version": FORMAT_VERSION,
        "hyperparams": _hp_dict(bank.hp),
        "genotypes": {name: g.genes.tolist() for name, g in genotypes.items()},
        "frozen": bank.frozen.tolist(),
        "heads": [
            {"task": task, "num_classes": int(bank.heads[task].bias.shape[0])}
            for task in sorted(bank.heads)
        ],
        "sections": _sections_for(bank),
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for section in header["sections"]:
            arr = _lookup(bank, section["name"])
            f.write(arr.astype("<f4", copy=False).tobytes())


def load_checkpoint(path: str | Path) -> tuple[ModuleBank, dict[str, Genotype]]:
    with open(path, "rb") as f:
        (header_len,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(header_len).decode("utf-8"))
        if header["format_version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['format_version']}")
        hp = hyperparams_from_dict(header["hyperparams"])
        bank = _empty_bank(hp, header)
        for section in header["sections"]:
            shape = tuple(section["shape"])
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(f.read(n * 4), dtype="<f4").reshape(shape)
            _store(bank, section["name"], data.astype(np.float32))
    genotypes = {name: Genotype(np.array(g)) for name, g in header["genotypes"].items()}
    return bank, genotypes


def _hp_dict(hp: HyperParams) -> dict:
    from dataclasses import asdict

    return asdict(hp)


def _empty_bank(hp: HyperParams, header: dict) -> ModuleBank:
    layers = [
        LayerModules(
            weights=np.zeros(
                (hp.modules_per_layer, hp.in_dim(layer), hp.module_width), dtype=np.float32
            ),
            biases=np.zeros((hp.modules_per_layer, hp.module_width), dtype=np.float32),
        )
        for layer in range(hp.num_layers)
    ]
    bank = ModuleBank(hp=hp, layers=layers)
    bank.frozen = np.array(header["frozen"], dtype=bool)
    for entry in header["heads"]:
        bank.heads[entry["task"]] = Head(
            weights=np.zeros((hp.module_width, entry["num_classes"]), dtype=np.float32),
            bias=np.zeros(entry["num_classes"], dtype=np.float32),
        )
    return bank


def _parse_name(name: str) -> tuple:
    parts = name.split("/")
    if parts[0] == "head":
        return ("head", parts[1], parts[2])
    layer = int(parts[0].removeprefix("layer"))
    module = int(parts[1].removeprefix("module"))
    return ("module", layer, module, parts[2])


def _lookup(bank: ModuleBank, name: str) -> np.ndarray:
    parsed = _parse_name(name)
    if parsed[0] == "head":
        head = bank.heads[parsed[1]]
        return head.weights if parsed[2] == "weights" else head.bias
    _, layer, module, kind = parsed
    lm = bank.layers[layer]
    return lm.weights[module] if kind == "weights" else lm.biases[module]


def _store(bank: ModuleBank, name: str, data: np.ndarray) -> None:
    parsed = _parse_name(name)
    if parsed[0] == "head":
        head = bank.heads[parsed[1]]
        if parsed[2] == "weights":
            head.weights = data
        else:
            head.bias = data
        return
    _, layer, module, kind = parsed
    lm = bank.layers[layer]
    if kind == "weights":
        lm.weights[module] = data
    else:
        lm.biases[module] = data
