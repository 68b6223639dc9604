"""
CSV and binary writers for simulation outputs.

CSVs are written with a fixed float format so reruns with the same inputs
produce identical bytes.
"""
import logging
import struct
from pathlib import Path

import numpy as np
import pandas as pd

from chansim.errors import DataFileError
from chansim.gscm import ChannelCoefficientTensor, ClusterSet

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"
TENSOR_MAGIC = b"CHTN"
TENSOR_VERSION = 1


def write_frame(frame: pd.DataFrame, path: Path) -> Path:
    """Write a frame as CSV with the fixed float format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("wrote %s (%d rows)", path, len(frame))
    return path


def tensor_frame(tensor: ChannelCoefficientTensor) -> pd.DataFrame:
    """Long-format coefficients: one row per (u, s, n, t)."""
    h = tensor.coefficients
    u, s, n, t = np.indices(h.shape)
    return pd.DataFrame({
        "u": u.ravel(),
        "s": s.ravel(),
        "n": n.ravel(),
        "t_s": tensor.times[t.ravel()],
        "re": h.real.ravel(),
        "im": h.imag.ravel(),
        "delay_s": tensor.delays[n.ravel()],
    })


def write_tensor_csv(tensor: ChannelCoefficientTensor, path: Path) -> Path:
    return write_frame(tensor_frame(tensor), path)


def write_tensor_binary(tensor: ChannelCoefficientTensor, path: Path) -> Path:
    """
    Binary tensor: magic, version, four dimensions, then little-endian
    float64 re/im pairs in (u, s, n, t) order, cluster delays and times.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    h = np.ascontiguousarray(tensor.coefficients, dtype="<c16")
    with open(path, "wb") as f:
        f.write(TENSOR_MAGIC)
        f.write(struct.pack("<5I", TENSOR_VERSION, *h.shape))
        f.write(h.view("<f8").tobytes())
        f.write(np.asarray(tensor.delays, dtype="<f8").tobytes())
        f.write(np.asarray(tensor.times, dtype="<f8").tobytes())
    logger.info("wrote %s %s", path, h.shape)
    return path


def read_tensor_binary(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Read a binary tensor back.

    Returns:
        Tuple (coefficients (U, S, N, T), delays (N,), times (T,))
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise DataFileError(f"cannot read tensor file {path}: {e}") from e
    if raw[:4] != TENSOR_MAGIC:
        raise DataFileError(f"{path} is not a channel tensor file")
    version, *shape = struct.unpack_from("<5I", raw, 4)
    if version != TENSOR_VERSION:
        raise DataFileError(f"{path}: unsupported tensor version {version}")
    offset = 4 + 5 * 4
    count = int(np.prod(shape))
    coefficients = np.frombuffer(raw, dtype="<c16", count=count, offset=offset).reshape(shape)
    offset += count * 16
    delays = np.frombuffer(raw, dtype="<f8", count=shape[2], offset=offset)
    times = np.frombuffer(raw, dtype="<f8", count=shape[3], offset=offset + shape[2] * 8)
    return coefficients.copy(), delays.copy(), times.copy()


def cluster_frame(clusters: ClusterSet, drop: int = 0) -> pd.DataFrame:
    """Per-cluster delays, powers and mean angles of one drop."""
    with np.errstate(divide="ignore"):
        power_db = 10.0 * np.log10(clusters.powers)
    return pd.DataFrame({
        "drop": drop,
        "cluster": np.arange(clusters.num_clusters),
        "delay_ns": clusters.delays * 1e9,
        "power_db": power_db,
        "aod_deg": clusters.phi_aod,
        "aoa_deg": clusters.phi_aoa,
        "zod_deg": clusters.theta_zod,
        "zoa_deg": clusters.theta_zoa,
    })
