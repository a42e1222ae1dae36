"""Episode files.

CSV layout::

    # softproprio-episode/1
    # {"schedule_kind": ..., "domain": {...}, "seed": ..., "wall_x": ..., "n_frames": ...}
    t,sensor_0,...,sensor_4,pressure_0,...,node_0_x,node_0_y,node_0_z,...,marker_12_z,contact_force,collided
    <one row per frame>

Units: t in s, sensor dimensionless (relative resistance change), pressure in kPa,
node and marker coordinates in mm, contact force in surrogate force units,
collided 0/1. Floats are written with 17 significant digits so a read-back is
bit-exact. The binary twin is an ``.npz`` with the same header as UTF-8 JSON.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .episode import Episode
from .kinematics import N_MARKERS, N_NODES
from .physics import DomainConfig

FORMAT_TAG = "softproprio-episode/1"


def csv_columns() -> list[str]:
    cols = ["t"] + [f"sensor_{i}" for i in range(5)] + [f"pressure_{i}" for i in range(5)]
    cols += [f"node_{n}_{a}" for n in range(N_NODES) for a in "xyz"]
    cols += [f"marker_{n}_{a}" for n in range(N_MARKERS) for a in "xyz"]
    return cols + ["contact_force", "collided"]


def _table(ep: Episode) -> np.ndarray:
    n = len(ep)
    return np.concatenate(
        [ep.t[:, None], ep.sensor, ep.pressure, ep.nodes.reshape(n, -1),
         ep.markers.reshape(n, -1), ep.contact_force[:, None], ep.collided[:, None].astype(float)],
        axis=1,
    )


def _from_table(header: dict, table: np.ndarray) -> Episode:
    n = table.shape[0]
    if n != header["n_frames"]:
        raise ValueError(f"header announces {header['n_frames']} frames, file holds {n}")
    i = 11 + 3 * N_NODES
    j = i + 3 * N_MARKERS
    return Episode(
        t=table[:, 0].copy(),
        sensor=table[:, 1:6].copy(),
        pressure=table[:, 6:11].copy(),
        nodes=table[:, 11:i].reshape(n, N_NODES, 3),
        markers=table[:, i:j].reshape(n, N_MARKERS, 3),
        contact_force=table[:, j].copy(),
        collided=table[:, j + 1] > 0.5,
        schedule_kind=header["schedule_kind"],
        domain=DomainConfig.from_dict(header["domain"]),
        seed=int(header["seed"]),
        wall_x=header["wall_x"],
    )


def write_csv(ep: Episode, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        fh.write(f"# {FORMAT_TAG}\n# {json.dumps(ep.header(), sort_keys=True)}\n")
        fh.write(",".join(csv_columns()) + "\n")
        np.savetxt(fh, _table(ep), fmt="%.17g", delimiter=",")


def read_csv(path: str | Path) -> Episode:
    path = Path(path)
    with path.open() as fh:
        tag = fh.readline()[2:].strip()
        if tag != FORMAT_TAG:
            raise ValueError(f"{path}: not an episode file (format {tag!r})")
        header = json.loads(fh.readline()[2:])
        cols = fh.readline().strip().split(",")
        if cols != csv_columns():
            raise ValueError(f"{path}: unexpected column layout")
        table = np.loadtxt(fh, delimiter=",", ndmin=2)
    return _from_table(header, table)


def write_npz(ep: Episode, path: str | Path) -> None:
    header = dict(ep.header(), format=FORMAT_TAG)
    with open(path, "wb") as fh:
        np.savez(fh, header=np.frombuffer(json.dumps(header, sort_keys=True).encode(), np.uint8),
                 table=_table(ep))


def read_npz(path: str | Path) -> Episode:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(bytes(z["header"]).decode())
        if header.get("format") != FORMAT_TAG:
            raise ValueError(f"{path}: not an episode file")
        return _from_table(header, z["table"])


def read_episode(path: str | Path) -> Episode:
    path = Path(path)
    return read_csv(path) if path.suffix == ".csv" else read_npz(path)
