"""Model assembly over the encoder/decoder grid, batching, checkpoints.

A checkpoint is a single .npz with every named parameter array plus a
JSON metadata blob (config snapshot, catalog, standardization stats), so
loading one reconstructs an inference-ready model with no other inputs.
Writes go through a temp file and an atomic rename.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import config as config_mod
from .autodiff import Tensor
from .data import StandardizationStats, VariableCatalog
from .decoders import DLinearBaseline, DMSDecoder, IMSDecoder, LinearBaseline
from .encoders import DenseEncoder, TripletEncoder, dense_input_rows
from .errors import ConfigError
from .nn import Module

CHECKPOINT_FORMAT = 1


@dataclass
class Batch:
    obs_values: np.ndarray
    obs_mask: np.ndarray
    statics: np.ndarray
    target_values: np.ndarray
    target_mask: np.ndarray
    triplets: list = field(default_factory=list)
    patient_ids: list = field(default_factory=list)
    starts: list = field(default_factory=list)

    @property
    def size(self):
        return self.obs_values.shape[0]


def triplet_arrays(window, catalog):
    """(times, var_ids, values) for one window, statics as t=0 pseudo-triplets."""
    n_f = catalog.n_dynamic
    times = [o.t for o in window.obs_triplets]
    ids = [catalog.index(o.f) for o in window.obs_triplets]
    values = [o.v for o in window.obs_triplets]
    for i, value in enumerate(window.statics):
        times.append(0.0)
        ids.append(n_f + i)
        values.append(float(value))
    return (
        np.asarray(times, dtype=np.float64),
        np.asarray(ids, dtype=np.intp),
        np.asarray(values, dtype=np.float64),
    )


def make_batch(windows, catalog):
    return Batch(
        obs_values=np.stack([w.obs_values for w in windows]),
        obs_mask=np.stack([w.obs_mask for w in windows]),
        statics=np.stack([w.statics for w in windows]),
        target_values=np.stack([w.target_values for w in windows]),
        target_mask=np.stack([w.target_mask for w in windows]),
        triplets=[triplet_arrays(w, catalog) for w in windows],
        patient_ids=[w.patient_id for w in windows],
        starts=[w.start for w in windows],
    )


class ForecastModel(Module):
    """Encoder + decoder bundle for one grid configuration."""

    def __init__(self, cfg, catalog, rng):
        cfg.validate()
        self.cfg = cfg
        self.n_variables = catalog.n_dynamic
        self.n_statics = catalog.n_static
        self.encoder = None
        self.decoder = None
        self.baseline = None
        if cfg.decoder in ("linear", "dlinear"):
            cls = LinearBaseline if cfg.decoder == "linear" else DLinearBaseline
            self.baseline = cls(rng)
            return
        if cfg.encoder == "dense":
            self.encoder = DenseEncoder(
                self.n_variables, self.n_statics, cfg.embedding_size,
                cfg.heads_encoder, cfg.encoder_layers, cfg.hidden_size_encoder,
                rng, dropout=cfg.dropout,
            )
        else:
            self.encoder = TripletEncoder(
                self.n_variables + self.n_statics, cfg.embedding_size,
                cfg.heads_encoder, cfg.encoder_layers, cfg.hidden_size_encoder,
                rng, dropout=cfg.dropout,
            )
        if cfg.decoder == "dms":
            self.decoder = DMSDecoder(
                self.n_variables, cfg.hidden_size_dms, cfg.heads_dms,
                cfg.dms_layers, cfg.hidden_size_dms, cfg.embedding_size,
                rng, dropout=cfg.dropout,
            )
        else:
            if self.n_variables % cfg.heads_ims != 0:
                raise ConfigError(
                    f"ims decoder width equals |F|={self.n_variables}, "
                    f"not divisible by heads_ims={cfg.heads_ims}"
                )
            self.decoder = IMSDecoder(
                self.n_variables, cfg.heads_ims, cfg.ims_layers,
                cfg.embedding_size, rng, dropout=cfg.dropout,
            )

    @property
    def is_iterative(self):
        return self.cfg.decoder == "ims"

    def encode_batch(self, batch, rng=None):
        """Encoder memories for a batch.

        Dense path: one (B, 24, width) tensor.  Triplet path: a list of
        (1, n_i, width) tensors, one per window (observation counts vary).
        """
        if self.baseline is not None:
            return None
        if self.cfg.encoder == "dense":
            rows = dense_input_rows(batch.obs_values, batch.obs_mask, batch.statics)
            return self.encoder.forward(Tensor(rows), rng=rng)
        return [
            self.encoder.forward(times, ids, values, rng=rng)
            for times, ids, values in batch.triplets
        ]

    def forecast_batch(self, batch):
        """Inference decode to a standardized (B, 24, |F|) array."""
        with ad.no_grad():
            if self.baseline is not None:
                return self.baseline.forward(batch.obs_values).data
            memory = self.encode_batch(batch)
            if self.cfg.decoder == "dms":
                if isinstance(memory, list):
                    rows = [self.decoder.forward(m).data for m in memory]
                    return np.concatenate(rows, axis=0)
                return self.decoder.forward(memory).data
            if isinstance(memory, list):
                rows = [self.decoder.rollout(m).data for m in memory]
                return np.concatenate(rows, axis=0)
            return self.decoder.rollout(memory).data


def build_model(cfg, catalog, seed=None):
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    return ForecastModel(cfg, catalog, rng)


def config_hash(cfg):
    pairs = config_mod.snapshot_pairs(cfg)
    blob = json.dumps(pairs, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:8]


def checkpoint_name(cfg):
    return f"model_{config_hash(cfg)}_seed{cfg.seed}.npz"


def save_checkpoint(path, model, catalog, stats, extra=None):
    meta = {
        "format": CHECKPOINT_FORMAT,
        "config": config_mod.snapshot_pairs(model.cfg),
        "catalog": catalog.to_dict(),
        "stats": stats.to_dict(),
        "extra": extra or {},
    }
    arrays = {f"param/{name}": p.data for name, p in model.named_parameters()}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)


def load_checkpoint(path):
    with np.load(path) as payload:
        meta = json.loads(payload["__meta__"].tobytes().decode("utf-8"))
        params = {
            key[len("param/"):]: payload[key]
            for key in payload.files
            if key.startswith("param/")
        }
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"unsupported checkpoint format {meta.get('format')!r}")
    cfg = config_mod.experiment_config_from_pairs(meta["config"])
    catalog = VariableCatalog.from_dict(meta["catalog"])
    stats = StandardizationStats.from_dict(meta["stats"])
    model = ForecastModel(cfg, catalog, np.random.default_rng(0))
    model.load_state_dict(params)
    return model, catalog, stats, meta
