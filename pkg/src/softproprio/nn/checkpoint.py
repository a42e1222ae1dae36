"""Self-describing ``.npz`` container for networks.

Layout: a ``__header__`` entry holding UTF-8 JSON (format tag, per-network layer
descriptors, caller metadata) and one array per parameter named
``<net>/<layer>/<param>``. Extra arrays (optimizer state, statistics) can ride along.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np

from .network import Network
from .spec import NetParams, NetSpec, param_shapes

FORMAT_TAG = "softproprio-netpack/1"


def pack_networks(nets: dict[str, Network], meta: dict | None = None,
                  extra: dict[str, np.ndarray] | None = None) -> dict[str, np.ndarray]:
    header = {
        "format": FORMAT_TAG,
        "nets": {k: net.spec.to_list() for k, net in nets.items()},
        "meta": meta or {},
    }
    arrays = {"__header__": np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)}
    for key, net in nets.items():
        for i, name, w, _ in net.params.items():
            arrays[f"{key}/{i}/{name}"] = w
    for k, v in (extra or {}).items():
        arrays[f"extra/{k}"] = np.asarray(v)
    return arrays


def save_networks(path: str | Path, nets: dict[str, Network], meta: dict | None = None,
                  extra: dict[str, np.ndarray] | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.BytesIO()
    np.savez(buf, **pack_networks(nets, meta, extra))
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


def load_networks(path: str | Path) -> tuple[dict[str, Network], dict, dict[str, np.ndarray]]:
    """Returns ``(nets, meta, extra_arrays)``."""
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(bytes(z["__header__"]).decode())
        if header.get("format") != FORMAT_TAG:
            raise ValueError(f"{path}: unsupported checkpoint format {header.get('format')!r}")
        nets = {}
        for key, layers in header["nets"].items():
            spec = NetSpec.from_list(layers)
            weights = [
                {name: z[f"{key}/{i}/{name}"].astype(np.float64) for name in param_shapes(layer)}
                for i, layer in enumerate(spec.layers)
            ]
            nets[key] = Network(spec, NetParams(weights))
        extra = {k[len("extra/"):]: z[k] for k in z.files if k.startswith("extra/")}
    return nets, header["meta"], extra
