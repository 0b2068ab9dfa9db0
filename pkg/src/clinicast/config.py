"""Experiment configuration: key=value files, defaults, grid validation.

The reachable architecture grid is {triplet, dense} encoders crossed with
{dms, ims, linear, dlinear} decoders; iterative decoders additionally pick
a forcing curriculum.  ``model=<1..24>`` expands one of the 24 canonical
grid rows (see MODEL_GRID and the README table).  Unknown keys are
rejected so a config snapshot is always replayable.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError

ENCODERS = ("triplet", "dense")
DECODERS = ("dms", "ims", "linear", "dlinear")
CURRICULUM_KINDS = ("none", "teacher", "student", "scheduled")
SELECTIONS = ("random", "deterministic")


@dataclass
class Curriculum:
    kind: str = "none"
    eps_start: float = 1.0
    eps_end: float = 1.0
    length: int = 200
    selection: str = "random"
    bp: bool = False

    def validate(self):
        if self.kind not in CURRICULUM_KINDS:
            raise ConfigError(f"unknown curriculum kind {self.kind!r}")
        if self.selection not in SELECTIONS:
            raise ConfigError(f"unknown selection mode {self.selection!r}")
        if not (0.0 <= self.eps_start <= 1.0 and 0.0 <= self.eps_end <= 1.0):
            raise ConfigError("curriculum ratios must lie in [0, 1]")
        if self.length < 1:
            raise ConfigError("curriculum length must be >= 1")


@dataclass
class ExperimentConfig:
    data: str = ""
    out: str = "runs"
    seed: int = 1
    encoder: str = "dense"
    decoder: str = "ims"
    curriculum: Curriculum = dataclasses.field(default_factory=Curriculum)
    # metaparameters (defaults: best MIMIC-style settings; shrink for desk scale)
    embedding_size: int = 0  # 0 = per-encoder default below
    hidden_size_encoder: int = 0
    hidden_size_dms: int = 0
    encoder_layers: int = 2
    dms_layers: int = 1
    ims_layers: int = 1
    learning_rate: float = 5e-4
    batch_size: int = 32
    heads_encoder: int = 0
    heads_dms: int = 4
    heads_ims: int = 1
    dropout: float = -1.0
    epochs: int = 100
    patience: int = 6
    grad_clip: float = 1.0
    split_fractions: tuple = (0.64, 0.16, 0.20)
    split_seed: int = -1  # -1: reuse seed

    _ENCODER_DEFAULTS = {
        # encoder -> (embedding, hidden, heads, dropout)
        "dense": (512, 512, 8, 0.05),
        "triplet": (50, 50, 4, 0.2),
    }

    def resolved(self):
        """Fill per-encoder defaults, validate the grid combination."""
        cfg = dataclasses.replace(self)
        emb, hid, heads, drop = self._ENCODER_DEFAULTS[cfg.encoder]
        if cfg.embedding_size == 0:
            cfg.embedding_size = emb
        if cfg.hidden_size_encoder == 0:
            cfg.hidden_size_encoder = hid
        if cfg.hidden_size_dms == 0:
            cfg.hidden_size_dms = cfg.embedding_size
        if cfg.heads_encoder == 0:
            cfg.heads_encoder = heads
        if cfg.dropout < 0:
            cfg.dropout = drop
        if cfg.split_seed == -1:
            cfg.split_seed = cfg.seed
        cfg.validate()
        return cfg

    def validate(self):
        if self.encoder not in ENCODERS:
            raise ConfigError(f"unknown encoder {self.encoder!r}")
        if self.decoder not in DECODERS:
            raise ConfigError(f"unknown decoder {self.decoder!r}")
        self.curriculum.validate()
        if self.decoder == "dms" and self.curriculum.kind != "none":
            raise ConfigError(
                "dms decoder emits all steps at once and admits no forcing "
                f"curriculum (got {self.curriculum.kind!r})"
            )
        if self.decoder in ("linear", "dlinear"):
            if self.encoder != "dense":
                raise ConfigError(f"{self.decoder} baseline requires the dense input path")
            if self.curriculum.kind != "none":
                raise ConfigError(f"{self.decoder} baseline admits no forcing curriculum")
        if self.decoder == "ims" and self.curriculum.kind == "none":
            raise ConfigError("ims decoder needs a curriculum kind (teacher/student/scheduled)")
        if self.curriculum.kind == "teacher" and self.curriculum.bp:
            raise ConfigError("teacher forcing has no prediction history to backpropagate through")
        if len(self.split_fractions) != 3 or abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1: {self.split_fractions}")
        for name in ("embedding_size", "hidden_size_encoder", "hidden_size_dms",
                     "encoder_layers", "dms_layers", "ims_layers", "batch_size",
                     "epochs", "patience", "heads_dms", "heads_ims"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")


def _curr(kind, eps_start=1.0, eps_end=1.0, selection="random", bp=False):
    return Curriculum(kind=kind, eps_start=eps_start, eps_end=eps_end,
                      selection=selection, bp=bp)


def _grid_row(encoder, decoder, curriculum):
    return {"encoder": encoder, "decoder": decoder, "curriculum": curriculum}


_INC = (0.25, 1.0)
_DEC = (1.0, 0.25)

MODEL_GRID = {}
for _i, _enc in ((0, "triplet"), (12, "dense")):
    MODEL_GRID[_i + 1] = _grid_row(_enc, "dms", _curr("none"))
    MODEL_GRID[_i + 2] = _grid_row(_enc, "ims", _curr("teacher"))
    MODEL_GRID[_i + 3] = _grid_row(_enc, "ims", _curr("student", bp=False))
    MODEL_GRID[_i + 4] = _grid_row(_enc, "ims", _curr("student", bp=True))
    MODEL_GRID[_i + 5] = _grid_row(_enc, "ims", _curr("scheduled", *_INC, "deterministic", False))
    MODEL_GRID[_i + 6] = _grid_row(_enc, "ims", _curr("scheduled", *_INC, "deterministic", True))
    MODEL_GRID[_i + 7] = _grid_row(_enc, "ims", _curr("scheduled", *_DEC, "deterministic", False))
    MODEL_GRID[_i + 8] = _grid_row(_enc, "ims", _curr("scheduled", *_DEC, "deterministic", True))
    MODEL_GRID[_i + 9] = _grid_row(_enc, "ims", _curr("scheduled", *_INC, "random", False))
    MODEL_GRID[_i + 10] = _grid_row(_enc, "ims", _curr("scheduled", *_INC, "random", True))
    MODEL_GRID[_i + 11] = _grid_row(_enc, "ims", _curr("scheduled", *_DEC, "random", False))
    MODEL_GRID[_i + 12] = _grid_row(_enc, "ims", _curr("scheduled", *_DEC, "random", True))

UNSUPPORTED_MODELS = {"informer", "autoformer"}


def apply_model_row(cfg, model_id):
    if isinstance(model_id, str) and model_id.lower() in UNSUPPORTED_MODELS:
        raise ConfigError(
            f"model {model_id!r} is an external baseline this package does not reimplement"
        )
    try:
        row = MODEL_GRID[int(model_id)]
    except (KeyError, ValueError):
        raise ConfigError(f"unknown model id {model_id!r} (valid: 1..24)") from None
    cfg.encoder = row["encoder"]
    cfg.decoder = row["decoder"]
    cfg.curriculum = dataclasses.replace(row["curriculum"])
    return cfg


# -- key=value files ----------------------------------------------------------

_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _parse_bool(text):
    try:
        return _BOOL[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"expected a boolean, got {text!r}") from None


def read_kv_file(path):
    pairs = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.rstrip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key in pairs:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            pairs[key] = value
    return pairs


_EXPERIMENT_KEYS = {
    "data": str,
    "out": str,
    "seed": int,
    "encoder": str,
    "decoder": str,
    "embedding_size": int,
    "hidden_size_encoder": int,
    "hidden_size_dms": int,
    "encoder_layers": int,
    "dms_layers": int,
    "ims_layers": int,
    "learning_rate": float,
    "batch_size": int,
    "heads_encoder": int,
    "heads_dms": int,
    "heads_ims": int,
    "dropout": float,
    "epochs": int,
    "patience": int,
    "grad_clip": float,
    "split_seed": int,
}

_CURRICULUM_KEYS = {
    "curriculum": str,
    "eps_start": float,
    "eps_end": float,
    "curriculum_length": int,
    "selection": str,
    "bp": _parse_bool,
}


def experiment_config_from_pairs(pairs):
    cfg = ExperimentConfig()
    pairs = dict(pairs)
    model_id = pairs.pop("model", None)
    if model_id is not None:
        apply_model_row(cfg, model_id)
    for key, value in pairs.items():
        if key in _EXPERIMENT_KEYS:
            setattr(cfg, key, _coerce(key, value, _EXPERIMENT_KEYS[key]))
        elif key in _CURRICULUM_KEYS:
            attr = {"curriculum": "kind", "curriculum_length": "length"}.get(key, key)
            setattr(cfg.curriculum, attr, _coerce(key, value, _CURRICULUM_KEYS[key]))
        elif key == "split_fractions":
            parts = [float(p) for p in value.split(",")]
            cfg.split_fractions = tuple(parts)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return cfg.resolved()


def _coerce(key, value, caster):
    try:
        return caster(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from None


def load_experiment_config(path, overrides=None):
    pairs = read_kv_file(path)
    pairs.update(overrides or {})
    return experiment_config_from_pairs(pairs)


def snapshot_pairs(cfg):
    """Flatten a resolved config back into replayable key=value pairs."""
    pairs = {
        "data": cfg.data,
        "out": cfg.out,
        "seed": cfg.seed,
        "encoder": cfg.encoder,
        "decoder": cfg.decoder,
        "curriculum": cfg.curriculum.kind,
        "eps_start": cfg.curriculum.eps_start,
        "eps_end": cfg.curriculum.eps_end,
        "curriculum_length": cfg.curriculum.length,
        "selection": cfg.curriculum.selection,
        "bp": str(cfg.curriculum.bp).lower(),
        "embedding_size": cfg.embedding_size,
        "hidden_size_encoder": cfg.hidden_size_encoder,
        "hidden_size_dms": cfg.hidden_size_dms,
        "encoder_layers": cfg.encoder_layers,
        "dms_layers": cfg.dms_layers,
        "ims_layers": cfg.ims_layers,
        "learning_rate": cfg.learning_rate,
        "batch_size": cfg.batch_size,
        "heads_encoder": cfg.heads_encoder,
        "heads_dms": cfg.heads_dms,
        "heads_ims": cfg.heads_ims,
        "dropout": cfg.dropout,
        "epochs": cfg.epochs,
        "patience": cfg.patience,
        "grad_clip": cfg.grad_clip,
        "split_fractions": ",".join(repr(f) for f in cfg.split_fractions),
        "split_seed": cfg.split_seed,
    }
    return pairs


def write_kv_file(path, pairs):
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in pairs.items():
            fh.write(f"{key}={value}\n")


_GENERATOR_KEYS = {
    "n_patients": int,
    "span_hours": float,
    "noise_scale": float,
    "infection_rate": float,
    "infection_proxy": _parse_bool,
}


def generator_config_from_pairs(pairs):
    from .synth import GeneratorConfig, default_variable_specs, parse_couplings

    kwargs = {}
    rate_overrides = {}
    couplings_text = None
    for key, value in pairs.items():
        if key in _GENERATOR_KEYS:
            kwargs[key] = _coerce(key, value, _GENERATOR_KEYS[key])
        elif key == "couplings":
            couplings_text = value
        elif key.startswith("rate."):
            rate_overrides[key[5:]] = _coerce(key, value, float)
        else:
            raise ConfigError(f"unknown generator key {key!r}")
    variables = []
    for spec in default_variable_specs():
        if spec.name in rate_overrides:
            spec = dataclasses.replace(spec, sampling_rate=rate_overrides.pop(spec.name))
        variables.append(spec)
    if rate_overrides:
        raise ConfigError(f"rate override for unknown variables: {sorted(rate_overrides)}")
    kwargs["variables"] = variables
    if couplings_text:
        kwargs["couplings"] = parse_couplings(couplings_text)
    return GeneratorConfig(**kwargs)


def load_generator_config(path, overrides=None):
    pairs = read_kv_file(path)
    pairs.update(overrides or {})
    return generator_config_from_pairs(pairs)
