"""Deterministic run artifacts: canonical JSON/CSV, configs, run manifests.

Writers are bitwise deterministic for a given logical content: object keys
are sorted, floats use the shortest round-trip representation, rows keep
construction order, and nothing records wall-clock state.  A run directory
is therefore self-describing -- replaying from its manifest alone reproduces
every artifact byte for byte, which is how reproducibility is audited.
"""

import hashlib
import json
import os

import numpy as np

from .assumptions import Exhaustion
from .errors import SchemaError
from .generator import SubMarkovGenerator

SCHEMA_VERSION = 1


def jsonify(obj):
    """Recursively coerce numpy containers/scalars to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def dumps_json(obj):
    return json.dumps(jsonify(obj), sort_keys=True, indent=2) + "\n"


def dump_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_json(obj))


def load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _cell(v):
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, (np.integer, int, np.bool_, bool)):
        return str(int(v)) if not isinstance(v, (bool, np.bool_)) else str(bool(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            h.update(block)
    return h.hexdigest()


# --- configuration schemas ---------------------------------------------------

def _check_keys(cfg, required, optional, ctx):
    if not isinstance(cfg, dict):
        raise SchemaError(f"{ctx}: expected a JSON object")
    for key in required:
        if key not in cfg:
            raise SchemaError(f"{ctx}.{key}: required field missing")
    extra = set(cfg) - set(required) - set(optional)
    if extra:
        name = sorted(extra)[0]
        raise SchemaError(f"{ctx}.{name}: unknown field")


def _check_schema(cfg, ctx):
    if not isinstance(cfg, dict) or "schema" not in cfg:
        raise SchemaError(f"{ctx}.schema: required field missing")
    if cfg["schema"] != SCHEMA_VERSION:
        raise SchemaError(
            f"{ctx}.schema: version {cfg['schema']!r} unsupported "
            f"(this build reads version {SCHEMA_VERSION})")


_MODEL_KEYS = {
    "bdc": (("schema", "kind", "n_max", "b", "d", "c"), ("boundary",)),
    "bdnu": (("schema", "kind", "b1", "c1", "b_bar", "d_bar", "c2"),
             ("n_max",)),
    "generator": (("schema", "kind", "states", "rates", "kill"), ()),
    "diffusion": (("schema", "kind", "model"), ("discretize",)),
}


def validate_model_config(cfg, ctx="model"):
    _check_schema(cfg, ctx)
    kind = cfg.get("kind")
    if kind not in _MODEL_KEYS:
        raise SchemaError(
            f"{ctx}.kind: expected one of {sorted(_MODEL_KEYS)}, got {kind!r}")
    required, optional = _MODEL_KEYS[kind]
    _check_keys(cfg, required, optional, ctx)
    if kind == "diffusion" and "discretize" in cfg:
        _check_keys(cfg["discretize"],
                    ("x_min", "x_max", "n_min", "n_max", "nx", "nn"), (),
                    f"{ctx}.discretize")
    return cfg


def load_model_config(path):
    return validate_model_config(load_json(path))


def build_model(cfg):
    """Instantiate a validated model config.

    Returns ("chain", generator) for the ladder/custom kinds and for a
    diffusion carrying a discretize block; ("diffusion", spec) otherwise.
    """
    from . import models

    kind = cfg["kind"]
    if kind == "bdc":
        params = models.BDCParams.from_json_dict(
            {k: cfg[k] for k in ("n_max", "b", "d", "c", "boundary")
             if k in cfg})
        return "chain", models.build_bdc(params)
    if kind == "bdnu":
        return "chain", models.build_bdnu(
            b1=float(cfg["b1"]), c1=float(cfg["c1"]),
            b_bar=float(cfg["b_bar"]), d_bar=float(cfg["d_bar"]),
            c2=float(cfg["c2"]), n_max=int(cfg.get("n_max", 2 ** 14)))
    if kind == "generator":
        return "chain", SubMarkovGenerator.from_json_dict(cfg)
    spec = models.spec_from_json(cfg["model"])
    if "discretize" in cfg:
        d = cfg["discretize"]
        gen, _ = models.discretize_diffusion(
            spec, (float(d["x_min"]), float(d["x_max"])),
            (float(d["n_min"]), float(d["n_max"])), int(d["nx"]), int(d["nn"]))
        return "chain", gen
    return "diffusion", spec


def validate_exhaustion_config(cfg, ctx="exhaustion"):
    _check_schema(cfg, ctx)
    if ("sets" in cfg) == ("prefix_sizes" in cfg):
        raise SchemaError(f"{ctx}: give exactly one of sets / prefix_sizes")
    body = "sets" if "sets" in cfg else "prefix_sizes"
    _check_keys(cfg, ("schema", body, "survival", "coupling"), ("mixing",),
                ctx)
    return cfg


def load_exhaustion_config(path):
    return validate_exhaustion_config(load_json(path))


def build_exhaustion(cfg):
    mixing = cfg.get("mixing")
    mixing = None if mixing is None else int(mixing)
    if "prefix_sizes" in cfg:
        from .models import prefix_exhaustion
        return prefix_exhaustion([int(s) for s in cfg["prefix_sizes"]],
                                 survival=int(cfg["survival"]),
                                 coupling=int(cfg["coupling"]), mixing=mixing)
    sets = tuple(np.asarray(s, dtype=np.int64) for s in cfg["sets"])
    return Exhaustion(sets=sets, survival=int(cfg["survival"]),
                      coupling=int(cfg["coupling"]), mixing=mixing)


# --- run manifests -----------------------------------------------------------

MANIFEST_NAME = "manifest.json"


def write_manifest(out_dir, config, artifact_names):
    """Hash the named artifacts in out_dir and record them with the resolved
    configuration; the manifest is everything replay needs."""
    from . import __version__

    artifacts = {name: sha256_file(os.path.join(out_dir, name))
                 for name in sorted(artifact_names)}
    manifest = {"schema": SCHEMA_VERSION, "tool": "qsd",
                "version": __version__, "config": jsonify(config),
                "artifacts": artifacts}
    dump_json(os.path.join(out_dir, MANIFEST_NAME), manifest)
    return manifest


def read_manifest(run_dir):
    path = os.path.join(run_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        raise SchemaError(f"{run_dir}: missing {MANIFEST_NAME}")
    manifest = load_json(path)
    _check_schema(manifest, "manifest")
    for key in ("config", "artifacts"):
        if key not in manifest:
            raise SchemaError(f"manifest.{key}: required field missing")
    return manifest
