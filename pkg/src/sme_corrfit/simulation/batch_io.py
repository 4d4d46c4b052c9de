"""
Trajectory batch files.

Batches are stored as a torch dict with a provenance header and a float64
tensor of shape (n_exp, n_detectors, n_bins). CSV export writes one row per
trajectory with columns <detector>_<k>.
"""
import os
import pickle
from typing import Optional

import numpy as np
import pandas as pd
import torch

from sme_corrfit.exceptions import BatchFormatError
from sme_corrfit.quantum.model import ConcreteModel, model_fingerprint
from sme_corrfit.simulation.smesim import TrajectoryBatch

SCHEMA_VERSION = 1

HEADER_KEYS = (
    "schema_version",
    "model_fingerprint",
    "seed",
    "n_exp",
    "n_detectors",
    "n_bins",
    "bin_width",
    "detector_names",
    "detector_kinds",
    "substeps_per_bin",
    "chunk_size",
)


def batch_to_dict(batch: TrajectoryBatch) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "model_fingerprint": batch.model_fingerprint,
        "seed": int(batch.seed),
        "n_exp": batch.n_exp,
        "n_detectors": batch.n_detectors,
        "n_bins": batch.n_bins,
        "bin_width": float(batch.bin_width),
        "detector_names": list(batch.detector_names),
        "detector_kinds": list(batch.detector_kinds),
        "substeps_per_bin": int(batch.substeps_per_bin),
        "chunk_size": int(batch.chunk_size),
        "values": torch.from_numpy(np.ascontiguousarray(batch.values, dtype=np.float64)),
    }


def save_batch(batch: TrajectoryBatch, output_path: str, verbose: bool = False) -> str:
    """
    Save a batch to a .pt file.

    Args:
        batch: Trajectory batch
        output_path: Path of the .pt file (parent directories are created)
    """
    parent = os.path.dirname(output_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    torch.save(batch_to_dict(batch), output_path)
    if verbose:
        print(f"  Batch saved to: {output_path}")
        print(f"  File size: {os.path.getsize(output_path) / (1024**2):.2f} MB")
    return output_path


def load_batch(path: str, model: Optional[ConcreteModel] = None) -> TrajectoryBatch:
    """
    Load a batch and validate its header.

    Args:
        path: .pt file written by save_batch
        model: if given, the batch must have been generated with this model

    Raises:
        BatchFormatError: missing keys, inconsistent shapes, unknown schema or
            fingerprint mismatch
    """
    try:
        data = torch.load(path, weights_only=True)
    except (OSError, RuntimeError, EOFError, pickle.UnpicklingError) as exc:
        raise BatchFormatError(f"cannot read batch file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise BatchFormatError(f"{path} does not contain a batch dictionary")
    missing = [k for k in HEADER_KEYS + ("values",) if k not in data]
    if missing:
        raise BatchFormatError(f"{path} is missing header fields {missing}")
    if data["schema_version"] != SCHEMA_VERSION:
        raise BatchFormatError(f"unsupported batch schema {data['schema_version']}")

    values = data["values"].numpy()
    expected = (data["n_exp"], data["n_detectors"], data["n_bins"])
    if values.shape != tuple(expected):
        raise BatchFormatError(f"values shape {values.shape} does not match header {expected}")
    if len(data["detector_names"]) != data["n_detectors"]:
        raise BatchFormatError("detector_names does not match n_detectors")
    if model is not None and data["model_fingerprint"] != model_fingerprint(model):
        raise BatchFormatError(
            f"batch fingerprint {data['model_fingerprint']} does not match model {model_fingerprint(model)}"
        )

    return TrajectoryBatch(
        values=values.astype(np.float64),
        detector_names=tuple(data["detector_names"]),
        detector_kinds=tuple(data["detector_kinds"]),
        bin_width=float(data["bin_width"]),
        seed=int(data["seed"]),
        substeps_per_bin=int(data["substeps_per_bin"]),
        chunk_size=int(data["chunk_size"]),
        model_fingerprint=data["model_fingerprint"],
    )


def batch_frame(batch: TrajectoryBatch) -> pd.DataFrame:
    columns = [f"{name}_{k}" for name in batch.detector_names for k in range(batch.n_bins)]
    return pd.DataFrame(batch.values.reshape(batch.n_exp, -1), columns=columns)


def export_batch_csv(batch: TrajectoryBatch, output_path: str) -> str:
    parent = os.path.dirname(output_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    batch_frame(batch).to_csv(output_path, index_label="trajectory")
    return output_path
