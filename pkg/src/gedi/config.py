"""Run configuration: flat INI files with a strict schema, plus bundled presets.

Sections mirror the module split (data/model/loss/sgld/optim/train). Unknown
sections or keys are errors that name the offender; overrides accept either
`key=value` (when the key is unique) or `section.key=value`.
"""

import configparser
from dataclasses import dataclass
from importlib import resources

from .objectives import PRIOR_MODES
from .sampler import INIT_CHOICES


class ConfigError(ValueError):
    pass


def _to_bool(s):
    v = str(s).strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _to_intlist(s):
    if isinstance(s, (tuple, list)):
        return tuple(int(v) for v in s)
    parts = [p.strip() for p in str(s).split(",")]
    return tuple(int(p) for p in parts if p != "")


def _choice(options):
    def convert(s):
        v = str(s).strip()
        if v not in options:
            raise ConfigError(f"expected one of {options}, got {v!r}")
        return v
    return convert


@dataclass
class Field:
    convert: callable
    default: object


# SGLD init names exposed in config: data_box maps to uniform_box with bounds
# taken from the training set.
_SGLD_INITS = ("data_box",) + INIT_CHOICES[1:]

SCHEMA = {
    "data": {
        "dataset": Field(_choice(("moons", "circles", "digits", "mnist")), "moons"),
        "task": Field(_choice(("cluster", "addition")), "cluster"),
        "n_train": Field(int, 400),
        "n_test": Field(int, 400),
        "noise_std": Field(float, 0.05),
        "inner_ratio": Field(float, 0.5),
        "aug_sigma": Field(float, 0.03),
        "image_pad": Field(int, 2),
        "image_noise": Field(float, 0.2),
        "n_examples": Field(int, 1000),
        "n_test_examples": Field(int, 500),
        "data_dir": Field(str, ""),
    },
    "model": {
        "encoder_hidden": Field(_to_intlist, (100, 100)),
        "embed_dim": Field(int, 2),
        "head_hidden": Field(_to_intlist, (4,)),
        "n_clusters": Field(int, 2),
        "temperature": Field(float, 1.0),
        "activation": Field(_choice(("relu", "leaky_relu")), "relu"),
    },
    "loss": {
        "w_gen": Field(float, 1.0),
        "w_inv": Field(float, 50.0),
        "w_prior": Field(float, 10.0),
        "w_nesy": Field(float, 0.0),
        "prior_mode": Field(_choice(PRIOR_MODES), "cross_entropy"),
    },
    "sgld": {
        "steps": Field(int, 1),
        "step_size": Field(float, 5e-5),
        "noise": Field(float, 0.01),
        "reinit_prob": Field(float, 0.05),
        "buffer_size": Field(int, 10000),
        "init": Field(_choice(_SGLD_INITS), "data_box"),
        "clamp": Field(_to_bool, False),
    },
    "optim": {
        "learning_rate": Field(float, 1e-3),
        "beta1": Field(float, 0.9),
        "beta2": Field(float, 0.999),
        "eps": Field(float, 1e-8),
        "weight_decay": Field(float, 0.0),
    },
    "train": {
        "iterations": Field(int, 7000),
        "batch_size": Field(int, 400),
        "seed": Field(int, 0),
        "eval_every": Field(int, 500),
        "out_dir": Field(str, ""),
    },
}


def default_config():
    return {sec: {k: f.default for k, f in fields.items()} for sec, fields in SCHEMA.items()}


def _convert(section, key, raw):
    try:
        return SCHEMA[section][key].convert(raw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} ({e})") from None


def parse_config(path):
    """Read an INI file into a fully defaulted config dict; strict keys."""
    parser = configparser.ConfigParser(interpolation=None)
    with open(path) as f:
        parser.read_file(f, source=str(path))
    cfg = default_config()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(
                f"{path}: unknown section [{section}]; known sections: {sorted(SCHEMA)}")
        for key, raw in parser[section].items():
            if key not in SCHEMA[section]:
                raise ConfigError(
                    f"{path}: unknown key {key!r} in [{section}]; "
                    f"known keys: {sorted(SCHEMA[section])}")
            cfg[section][key] = _convert(section, key, raw)
    return cfg


def _locate_key(key):
    hits = [sec for sec in SCHEMA if key in SCHEMA[sec]]
    if not hits:
        raise ConfigError(f"unknown config key {key!r}")
    if len(hits) > 1:
        raise ConfigError(f"key {key!r} is ambiguous across sections {hits}; use section.key")
    return hits[0]


def apply_overrides(cfg, overrides):
    """Apply `key=value` / `section.key=value` strings in order."""
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, raw = item.partition("=")
        key = key.strip()
        if "." in key:
            section, _, key = key.partition(".")
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section {section!r}")
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
        else:
            section = _locate_key(key)
        cfg[section][key] = _convert(section, key, raw.strip())
    return cfg


def _render(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def resolved_text(cfg):
    """Deterministic INI dump with every key materialized."""
    lines = []
    for section in SCHEMA:
        lines.append(f"[{section}]")
        for key in SCHEMA[section]:
            lines.append(f"{key} = {_render(cfg[section][key])}")
        lines.append("")
    return "\n".join(lines)


def write_resolved(cfg, path):
    with open(path, "w") as f:
        f.write(resolved_text(cfg))


def preset_names():
    root = resources.files("gedi.presets")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_preset(name):
    root = resources.files("gedi.presets")
    path = root / f"{name}.cfg"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {preset_names()}")
    with resources.as_file(path) as real:
        return parse_config(real)
