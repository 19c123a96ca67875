"""Experiment configuration: parsing, validation, canonical form.

A config document is YAML (JSON is a subset, and the canonical echo written
into result files is JSON, so echoes re-parse with this same function).
Sections: environment, command, numerics, sweep, seed, output, plus an
optional method for the estimate command.  Validation failures always name
the offending key by its dotted path.  Parsed configs are normalized --
defaults materialized, numbers coerced -- so two documents describing the
same experiment compare equal and serialize identically.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

import numpy as np
import yaml

from .environment import (
    CircleDiffusionEnvironment,
    EnvironmentSpec,
    FourierMatrixMap,
    MarkovSwitchEnvironment,
    PeriodicEnvironment,
    QuasiPeriodicEnvironment,
)
from .errors import ConfigError

COMMANDS = (
    "estimate",
    "periodic-exact",
    "floquet",
    "bounds",
    "sweep",
    "contraction",
    "concentration",
)

_KINDS = ("periodic", "quasi_periodic", "markov_switch", "circle_diffusion")
_FORMATS = ("csv", "json")
_METHODS = ("ErgodicAverage", "LogNormGrowth")
_TOP_KEYS = ("command", "environment", "numerics", "sweep", "method", "seed", "output")

# commands that integrate a trajectory and hence consume the seed
_SEEDED_COMMANDS = ("estimate", "sweep", "contraction", "concentration")
_STOCHASTIC_KINDS = ("markov_switch", "circle_diffusion")

_HARMONIC_KEY = re.compile(r"([CD])([1-9][0-9]*)")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, normalized experiment description.

    ``environment``, ``numerics``, ``sweep`` and ``output`` hold plain
    primitive dictionaries (the canonical document form), so equality is
    document equality and :meth:`to_document` round-trips through
    :func:`parse_config`.
    """

    command: str
    environment: dict
    numerics: dict | None
    sweep: dict | None
    method: str | None
    seed: int | None
    output: dict

    def to_document(self) -> dict:
        doc = {"command": self.command, "environment": self.environment}
        if self.numerics is not None:
            doc["numerics"] = self.numerics
        if self.sweep is not None:
            doc["sweep"] = self.sweep
        if self.method is not None:
            doc["method"] = self.method
        if self.seed is not None:
            doc["seed"] = self.seed
        doc["output"] = self.output
        return doc

    def canonical_json(self) -> str:
        return json.dumps(self.to_document(), sort_keys=True, separators=(", ", ": "))


def _fail(key: str, message: str) -> ConfigError:
    return ConfigError(message, key=key)


def _require_mapping(value, key: str) -> dict:
    if not isinstance(value, dict):
        raise _fail(key, f"must be a mapping, got {type(value).__name__}")
    return value


def _as_float(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail(key, f"must be a number, got {value!r}")
    out = float(value)
    if not math.isfinite(out):
        raise _fail(key, f"must be finite, got {value!r}")
    return out


def _as_int(value, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _fail(key, f"must be an integer, got {value!r}")
    return value


def _as_matrix(value, key: str) -> list[list[float]]:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise _fail(key, f"must be a rectangular nested number array ({exc})") from exc
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise _fail(key, f"must be a nonempty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise _fail(key, "has non-finite entries")
    return [[float(v) for v in row] for row in arr]


def _reject_unknown(block: dict, allowed, prefix: str) -> None:
    for k in block:
        if k not in allowed:
            raise _fail(f"{prefix}.{k}" if prefix else str(k), "unknown key")


# ---------------------------------------------------------------------------
# Fourier blocks: labeled matrices A0 (constant term) and Ck / Dk (cosine and
# sine coefficients of harmonic k)


def _parse_harmonics(block: dict, prefix: str, dim: int) -> dict:
    """Normalize the Ck/Dk keys of one coordinate; returns {key: matrix}."""
    out = {}
    for k, v in block.items():
        if k in ("A0", "coords"):
            continue
        match = _HARMONIC_KEY.fullmatch(k)
        if match is None:
            raise _fail(f"{prefix}.{k}", "unknown key (expected A0, C<k> or D<k>)")
        mat = _as_matrix(v, f"{prefix}.{k}")
        if len(mat) != dim:
            raise _fail(f"{prefix}.{k}", f"must be {dim}x{dim} like A0, got {len(mat)}x{len(mat)}")
        out[k] = mat
    return out


def _coeff_arrays(harmonics: dict, dim: int) -> tuple[np.ndarray, np.ndarray]:
    n_harm = max(
        (int(_HARMONIC_KEY.fullmatch(k).group(2)) for k in harmonics), default=0
    )
    cos_c = np.zeros((n_harm, dim, dim))
    sin_c = np.zeros((n_harm, dim, dim))
    for k, mat in harmonics.items():
        match = _HARMONIC_KEY.fullmatch(k)
        target = cos_c if match.group(1) == "C" else sin_c
        target[int(match.group(2)) - 1] = mat
    return cos_c, sin_c


def _fourier_single(block, prefix: str) -> tuple[dict, FourierMatrixMap]:
    block = _require_mapping(block, prefix)
    if "A0" not in block:
        raise _fail(f"{prefix}.A0", "required (constant term of the matrix map)")
    if "coords" in block:
        raise _fail(f"{prefix}.coords", "only meaningful for quasi_periodic environments")
    base = _as_matrix(block["A0"], f"{prefix}.A0")
    dim = len(base)
    harmonics = _parse_harmonics(block, prefix, dim)
    cos_c, sin_c = _coeff_arrays(harmonics, dim)
    fmap = FourierMatrixMap(np.array(base), cos_c[None, ...], sin_c[None, ...])
    return {"A0": base, **harmonics}, fmap


def _fourier_multi(block, prefix: str, n_coords: int) -> tuple[dict, FourierMatrixMap]:
    block = _require_mapping(block, prefix)
    if "A0" not in block:
        raise _fail(f"{prefix}.A0", "required (constant term of the matrix map)")
    base = _as_matrix(block["A0"], f"{prefix}.A0")
    dim = len(base)
    _reject_unknown(block, ("A0", "coords"), prefix)
    coords = block.get("coords", [])
    if not isinstance(coords, list):
        raise _fail(f"{prefix}.coords", "must be a list of per-frequency harmonic blocks")
    if len(coords) != n_coords:
        raise _fail(
            f"{prefix}.coords",
            f"must have one block per frequency ({n_coords}), got {len(coords)}",
        )
    norm_coords = []
    per_coord = []
    for i, sub in enumerate(coords):
        sub = _require_mapping(sub, f"{prefix}.coords[{i}]")
        if "A0" in sub:
            raise _fail(f"{prefix}.coords[{i}].A0", "the constant term belongs at the top level")
        harm = _parse_harmonics(sub, f"{prefix}.coords[{i}]", dim)
        norm_coords.append(harm)
        per_coord.append(_coeff_arrays(harm, dim))
    n_harm = max((c.shape[0] for c, _ in per_coord), default=0)
    cos_c = np.zeros((n_coords, n_harm, dim, dim))
    sin_c = np.zeros((n_coords, n_harm, dim, dim))
    for i, (c, s) in enumerate(per_coord):
        cos_c[i, : c.shape[0]] = c
        sin_c[i, : s.shape[0]] = s
    fmap = FourierMatrixMap(np.array(base), cos_c, sin_c)
    return {"A0": base, "coords": norm_coords}, fmap


# ---------------------------------------------------------------------------
# environment block


def _validate_environment(block) -> tuple[dict, EnvironmentSpec]:
    block = _require_mapping(block, "environment")
    kind = block.get("kind")
    if kind not in _KINDS:
        raise _fail("environment.kind", f"must be one of {', '.join(_KINDS)}, got {kind!r}")
    timescale = _as_float(block.get("timescale", 1.0), "environment.timescale")
    if timescale <= 0.0:
        raise _fail("environment.timescale", f"must be positive, got {timescale!r}")

    if kind == "periodic":
        _reject_unknown(block, ("kind", "timescale", "fourier", "initial_phase"), "environment")
        if "fourier" not in block:
            raise _fail("environment.fourier", "required for periodic environments")
        fdoc, fmap = _fourier_single(block["fourier"], "environment.fourier")
        phase = _as_float(block.get("initial_phase", 0.0), "environment.initial_phase")
        spec = PeriodicEnvironment(fmap, initial_phase=phase, timescale=timescale)
        doc = {"kind": kind, "timescale": timescale, "initial_phase": phase, "fourier": fdoc}
        return doc, spec

    if kind == "quasi_periodic":
        _reject_unknown(
            block,
            ("kind", "timescale", "fourier", "frequencies", "initial_phases"),
            "environment",
        )
        freqs = block.get("frequencies")
        if not isinstance(freqs, list) or not freqs:
            raise _fail("environment.frequencies", "must be a nonempty list of numbers")
        freqs = [
            _as_float(v, f"environment.frequencies[{i}]") for i, v in enumerate(freqs)
        ]
        phases = block.get("initial_phases", [0.0] * len(freqs))
        if not isinstance(phases, list) or len(phases) != len(freqs):
            raise _fail(
                "environment.initial_phases",
                f"must be a list of {len(freqs)} numbers (one per frequency)",
            )
        phases = [
            _as_float(v, f"environment.initial_phases[{i}]") for i, v in enumerate(phases)
        ]
        if "fourier" not in block:
            raise _fail("environment.fourier", "required for quasi_periodic environments")
        fdoc, fmap = _fourier_multi(block["fourier"], "environment.fourier", len(freqs))
        spec = QuasiPeriodicEnvironment(
            fmap, frequencies=tuple(freqs), initial_phases=tuple(phases), timescale=timescale
        )
        doc = {
            "kind": kind,
            "timescale": timescale,
            "frequencies": freqs,
            "initial_phases": phases,
            "fourier": fdoc,
        }
        return doc, spec

    if kind == "markov_switch":
        _reject_unknown(
            block, ("kind", "timescale", "rates", "matrices", "initial_state"), "environment"
        )
        if "rates" not in block:
            raise _fail("environment.rates", "required for markov_switch environments")
        rates = _as_matrix(block["rates"], "environment.rates")
        mats_doc = block.get("matrices")
        if not isinstance(mats_doc, list) or not mats_doc:
            raise _fail("environment.matrices", "must be a nonempty list of square matrices")
        if len(mats_doc) != len(rates):
            raise _fail(
                "environment.matrices",
                f"must have one matrix per switch state ({len(rates)}), got {len(mats_doc)}",
            )
        matrices = [
            _as_matrix(m, f"environment.matrices[{i}]") for i, m in enumerate(mats_doc)
        ]
        initial_state = _as_int(block.get("initial_state", 1), "environment.initial_state")
        spec = MarkovSwitchEnvironment(
            rate_matrix=np.array(rates),
            matrices=tuple(np.array(m) for m in matrices),
            initial_state=initial_state,
            timescale=timescale,
        )
        doc = {
            "kind": kind,
            "timescale": timescale,
            "rates": rates,
            "matrices": matrices,
            "initial_state": initial_state,
        }
        return doc, spec

    _reject_unknown(
        block, ("kind", "timescale", "fourier", "sigma", "initial_point"), "environment"
    )
    if "sigma" not in block:
        raise _fail("environment.sigma", "required for circle_diffusion environments")
    sigma = _as_float(block["sigma"], "environment.sigma")
    if sigma <= 0.0:
        raise _fail("environment.sigma", f"must be positive, got {sigma!r}")
    if "fourier" not in block:
        raise _fail("environment.fourier", "required for circle_diffusion environments")
    fdoc, fmap = _fourier_single(block["fourier"], "environment.fourier")
    point = _as_float(block.get("initial_point", 0.0), "environment.initial_point")
    spec = CircleDiffusionEnvironment(
        fmap, sigma=sigma, initial_point=point, timescale=timescale
    )
    doc = {
        "kind": kind,
        "timescale": timescale,
        "sigma": sigma,
        "initial_point": point,
        "fourier": fdoc,
    }
    return doc, spec


def build_environment(cfg: ExperimentConfig) -> EnvironmentSpec:
    """Instantiate the environment described by a validated config."""
    return _validate_environment(cfg.environment)[1]


# ---------------------------------------------------------------------------
# remaining sections

_NUMERICS_REQUIRED = {
    "estimate": ("horizon", "step"),
    "sweep": ("horizon", "step"),
    "contraction": ("horizon", "step"),
    "concentration": ("horizon", "step"),
    "periodic-exact": ("step",),
    "floquet": ("step",),
    "bounds": (),
}


def _validate_numerics(block, command: str) -> dict | None:
    required = _NUMERICS_REQUIRED[command]
    if block is None:
        if required:
            raise _fail(
                f"numerics.{required[0]}", f"required for the {command} command"
            )
        return None
    block = _require_mapping(block, "numerics")
    _reject_unknown(block, ("horizon", "step", "burn_in"), "numerics")
    doc = {}
    if "horizon" in block:
        doc["horizon"] = _as_float(block["horizon"], "numerics.horizon")
        if doc["horizon"] <= 0.0:
            raise _fail("numerics.horizon", f"must be positive, got {doc['horizon']!r}")
    if "step" in block:
        doc["step"] = _as_float(block["step"], "numerics.step")
        if doc["step"] <= 0.0:
            raise _fail("numerics.step", f"must be positive, got {doc['step']!r}")
    for key in required:
        if key not in doc:
            raise _fail(f"numerics.{key}", f"required for the {command} command")
    if "horizon" in doc and "step" in doc and doc["step"] > doc["horizon"] / 10.0:
        raise _fail(
            "numerics.step",
            f"must satisfy 0 < step <= horizon/10 = {doc['horizon'] / 10.0:g}, "
            f"got {doc['step']!r}",
        )
    if "burn_in" in block:
        doc["burn_in"] = _as_float(block["burn_in"], "numerics.burn_in")
        if "horizon" not in doc:
            raise _fail("numerics.burn_in", "needs numerics.horizon to validate against")
        if not (0.0 <= doc["burn_in"] < doc["horizon"]):
            raise _fail(
                "numerics.burn_in",
                f"must satisfy 0 <= burn_in < horizon, got {doc['burn_in']!r}",
            )
    return doc


def _validate_sweep(block, command: str) -> dict | None:
    if command != "sweep":
        if block is not None:
            raise _fail("sweep", "only meaningful for the sweep command")
        return None
    if block is None:
        raise _fail("sweep", "required for the sweep command")
    block = _require_mapping(block, "sweep")
    _reject_unknown(block, ("T_min", "T_max", "points_per_decade"), "sweep")
    for key in ("T_min", "T_max"):
        if key not in block:
            raise _fail(f"sweep.{key}", "required")
    t_min = _as_float(block["T_min"], "sweep.T_min")
    t_max = _as_float(block["T_max"], "sweep.T_max")
    if not (0.0 < t_min < t_max):
        raise _fail("sweep.T_max", f"need 0 < T_min < T_max, got {t_min!r}, {t_max!r}")
    ppd = _as_int(block.get("points_per_decade", 5), "sweep.points_per_decade")
    if ppd < 1:
        raise _fail("sweep.points_per_decade", f"must be >= 1, got {ppd!r}")
    return {"T_min": t_min, "T_max": t_max, "points_per_decade": ppd}


def _validate_output(block) -> dict:
    if block is None:
        raise _fail("output", "required (where should results go?)")
    block = _require_mapping(block, "output")
    _reject_unknown(block, ("path", "format", "trajectory_path"), "output")
    path = block.get("path")
    if not isinstance(path, str) or not path:
        raise _fail("output.path", f"must be a nonempty string, got {path!r}")
    fmt = block.get("format", "csv")
    if fmt not in _FORMATS:
        raise _fail("output.format", f"must be one of {', '.join(_FORMATS)}, got {fmt!r}")
    doc = {"path": path, "format": fmt}
    if "trajectory_path" in block:
        tpath = block["trajectory_path"]
        if not isinstance(tpath, str) or not tpath:
            raise _fail("output.trajectory_path", f"must be a nonempty string, got {tpath!r}")
        doc["trajectory_path"] = tpath
    return doc


def _validated(doc: dict) -> ExperimentConfig:
    _require_mapping(doc, "config")
    _reject_unknown(doc, _TOP_KEYS, "")
    command = doc.get("command")
    if command not in COMMANDS:
        raise _fail("command", f"must be one of {', '.join(COMMANDS)}, got {command!r}")
    if "environment" not in doc:
        raise _fail("environment", "required")
    env_doc, env_spec = _validate_environment(doc["environment"])
    numerics = _validate_numerics(doc.get("numerics"), command)
    sweep = _validate_sweep(doc.get("sweep"), command)

    method = doc.get("method")
    if method is not None:
        if command != "estimate":
            raise _fail("method", "only meaningful for the estimate command")
        if method not in _METHODS:
            raise _fail("method", f"must be one of {', '.join(_METHODS)}, got {method!r}")

    seed = doc.get("seed")
    if seed is not None:
        seed = _as_int(seed, "seed")
        if not (0 <= seed < 2**64):
            raise _fail("seed", f"must be an unsigned 64-bit integer, got {seed!r}")
    needs_seed = command == "sweep" or (
        command in _SEEDED_COMMANDS and env_doc["kind"] in _STOCHASTIC_KINDS
    )
    if seed is None and needs_seed:
        raise _fail(
            "seed",
            f"required: the {command} command with a {env_doc['kind']} environment "
            f"draws random paths",
        )

    output = _validate_output(doc.get("output"))
    if "trajectory_path" in output and command != "estimate":
        raise _fail("output.trajectory_path", "only meaningful for the estimate command")
    return ExperimentConfig(
        command=command,
        environment=env_doc,
        numerics=numerics,
        sweep=sweep,
        method=method,
        seed=seed,
        output=output,
    )


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a YAML/JSON config document.

    Raises :class:`ConfigError` naming the offending key (with the document
    line for syntax errors); Metzler or irreducibility violations from
    environment construction propagate as their library exception types.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"config parse error{where}: {problem}") from exc
    if doc is None:
        raise ConfigError("config document is empty")
    return _validated(doc)


def with_overrides(
    cfg: ExperimentConfig,
    command: str | None = None,
    seed: int | None = None,
    output_path: str | None = None,
) -> ExperimentConfig:
    """Apply command-line overrides and re-validate the result."""
    doc = cfg.to_document()
    if command is not None:
        doc["command"] = command
    if seed is not None:
        doc["seed"] = seed
    if output_path is not None:
        doc["output"] = dict(doc["output"])
        doc["output"]["path"] = output_path
    return _validated(doc)
