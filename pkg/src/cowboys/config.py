"""Flat dotted-key run configuration files.

The format is one `key = value` pair per line, `#` comments, values being
ints, floats, booleans, comma-separated lists, or bare strings:

    seed = 42
    latent_dim = 16
    fingerprint_len = 64
    budget = 100
    init_size = 10
    batch_size = 1
    pcn.steps = 100
    decoder.kind = linear_threshold
    decoder.seed = 7
    objective.kind = tanimoto_to_target
    objective.target_mode = decoder

Unknown keys are rejected so typos fail fast. The master seed resolves as
flag > config > COWBOYS_SEED environment variable > 0.
"""

from __future__ import annotations

import os
from typing import Mapping, Optional

from .core import (
    STREAM_DECODER_INSTANCE,
    STREAM_OBJECTIVE_INSTANCE,
    CowboysError,
    Fingerprint,
    GpSettings,
    RunConfig,
    derive_stream,
)
from .decoder import (
    DecoderSpec,
    linear_threshold_spec,
    load_weights,
    make_decoder,
    parse_command,
    sequence_argmax_spec,
)
from .objectives import (
    ObjectiveSpec,
    linear_score_spec,
    random_target_spec,
    rugged_nk_spec,
    tanimoto_to_target_spec,
)

ENV_SEED = "COWBOYS_SEED"

_KNOWN_KEYS = {
    "seed",
    "latent_dim",
    "fingerprint_len",
    "budget",
    "init_size",
    "batch_size",
    "workers",
    "pcn.chains",
    "pcn.steps",
    "pcn.acceptance_mode",
    "pcn.beta_init",
    "pcn.target_accept",
    "pcn.adapt_gain",
    "pcn.beta_min",
    "pcn.beta_max",
    "pcn.max_restarts",
    "qei.mc_samples",
    "gp.jitter",
    "gp.noise_bounds",
    "gp.scale_bounds",
    "gp.fit_restarts",
    "gp.perturb_prob",
    "lsbo.delta",
    "decoder.kind",
    "decoder.seed",
    "decoder.counts",
    "decoder.bias_scale",
    "decoder.weights_path",
    "decoder.positions",
    "decoder.vocab",
    "decoder.command",
    "decoder.timeout",
    "decoder.per_chain_process",
    "objective.kind",
    "objective.seed",
    "objective.target",
    "objective.target_mode",
    "objective.k",
}


class ConfigError(CowboysError):
    """Malformed or inconsistent run configuration."""


def _parse_value(raw: str):
    raw = raw.strip()
    if "," in raw:
        return [_parse_value(part) for part in raw.split(",")]
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_text(text: str) -> dict:
    """Parse dotted-key config text into a flat mapping."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(raw)
    return values


def load_config_file(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _require(values: Mapping, key: str):
    if key not in values:
        raise ConfigError(f"missing required key {key!r}")
    return values[key]


def _as_pair(value, key: str) -> tuple[float, float]:
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigError(f"{key} must be a pair 'lo, hi'")
    return float(value[0]), float(value[1])


def _build_decoder_spec(values: Mapping, seed: int, d: int, length: int) -> DecoderSpec:
    kind = _require(values, "decoder.kind")
    counts_mode = values.get("decoder.counts", "binary")
    if kind == "linear_threshold":
        if "decoder.weights_path" in values:
            weight, bias = load_weights(values["decoder.weights_path"])
            if weight.shape != (length, d):
                raise ConfigError(
                    f"weights file shape {weight.shape} does not match "
                    f"(fingerprint_len, latent_dim) = ({length}, {d})"
                )
            return DecoderSpec(
                kind=kind,
                latent_dim=d,
                fingerprint_len=length,
                weight=weight,
                bias=bias,
                counts_mode=counts_mode,
            )
        instance = derive_stream(
            int(values.get("decoder.seed", seed)), STREAM_DECODER_INSTANCE
        )
        return linear_threshold_spec(
            d,
            length,
            instance,
            counts_mode=counts_mode,
            bias_scale=float(values.get("decoder.bias_scale", 0.0)),
        )
    if kind == "sequence_argmax":
        positions = int(_require(values, "decoder.positions"))
        vocab = int(_require(values, "decoder.vocab"))
        if vocab**2 != length:
            raise ConfigError(
                f"fingerprint_len must equal vocab**2 = {vocab**2}, got {length}"
            )
        instance = derive_stream(
            int(values.get("decoder.seed", seed)), STREAM_DECODER_INSTANCE
        )
        return sequence_argmax_spec(d, positions, vocab, instance)
    if kind == "external":
        command = _require(values, "decoder.command")
        if not isinstance(command, str):
            raise ConfigError("decoder.command must be a string")
        return DecoderSpec(
            kind="external",
            latent_dim=d,
            fingerprint_len=length,
            command=parse_command(command),
            timeout=float(values.get("decoder.timeout", 10.0)),
        )
    raise ConfigError(f"unknown decoder.kind {kind!r}")


def _build_objective_spec(
    values: Mapping, seed: int, length: int, decoder_spec: DecoderSpec, d: int
) -> ObjectiveSpec:
    kind = _require(values, "objective.kind")
    obj_seed = int(values.get("objective.seed", seed))
    if kind == "tanimoto_to_target":
        if "objective.target" in values:
            raw = values["objective.target"]
            if not isinstance(raw, list):
                raw = [raw]
            target = Fingerprint(tuple(int(v) for v in raw))
            if len(target) != length:
                raise ConfigError("objective.target length != fingerprint_len")
            return tanimoto_to_target_spec(target, seed=obj_seed)
        mode = values.get("objective.target_mode", "random")
        if mode == "random":
            return random_target_spec(length, obj_seed)
        if mode == "decoder":
            z = (
                derive_stream(obj_seed, STREAM_OBJECTIVE_INSTANCE)
                .generator()
                .standard_normal(d)
            )
            dec = make_decoder(decoder_spec)
            try:
                target = dec.decode(z).fingerprint
            finally:
                dec.close()
            return tanimoto_to_target_spec(target, seed=obj_seed)
        raise ConfigError(f"unknown objective.target_mode {mode!r}")
    if kind == "linear_score":
        return linear_score_spec(length, obj_seed)
    if kind == "rugged_nk":
        return rugged_nk_spec(length, int(values.get("objective.k", 2)), obj_seed)
    raise ConfigError(f"unknown objective.kind {kind!r}")


def build_run_config(
    values: Mapping,
    seed_override: Optional[int] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Assemble a validated RunConfig from a parsed mapping."""
    environ = os.environ if environ is None else environ
    if seed_override is not None:
        seed = int(seed_override)
    elif "seed" in values:
        seed = int(values["seed"])
    elif ENV_SEED in environ:
        try:
            seed = int(environ[ENV_SEED])
        except ValueError as exc:
            raise ConfigError(f"bad {ENV_SEED} value {environ[ENV_SEED]!r}") from exc
    else:
        seed = 0

    try:
        d = int(_require(values, "latent_dim"))
        length = int(_require(values, "fingerprint_len"))
        gp_settings = GpSettings(
            jitter=float(values.get("gp.jitter", 1e-6)),
            noise_bounds=(
                _as_pair(values["gp.noise_bounds"], "gp.noise_bounds")
                if "gp.noise_bounds" in values
                else (1e-6, 1.0)
            ),
            scale_bounds=(
                _as_pair(values["gp.scale_bounds"], "gp.scale_bounds")
                if "gp.scale_bounds" in values
                else (1e-3, 1e3)
            ),
            fit_restarts=int(values.get("gp.fit_restarts", 8)),
        )
        decoder_spec = _build_decoder_spec(values, seed, d, length)
        objective_spec = _build_objective_spec(values, seed, length, decoder_spec, d)
        chains = values.get("pcn.chains")
        return RunConfig(
            seed=seed,
            latent_dim=d,
            fingerprint_len=length,
            budget=int(_require(values, "budget")),
            init_size=int(_require(values, "init_size")),
            batch_size=int(values.get("batch_size", 1)),
            chains=None if chains is None else int(chains),
            steps=int(values.get("pcn.steps", 100)),
            acceptance_mode=str(values.get("pcn.acceptance_mode", "paper")),
            beta_init=float(values.get("pcn.beta_init", 0.1)),
            target_accept=float(values.get("pcn.target_accept", 0.243)),
            adapt_gain=float(values.get("pcn.adapt_gain", 0.1)),
            beta_min=float(values.get("pcn.beta_min", 1e-4)),
            beta_max=float(values.get("pcn.beta_max", 0.999)),
            max_restarts=int(values.get("pcn.max_restarts", 10)),
            qei_mc_samples=int(values.get("qei.mc_samples", 256)),
            workers=int(values.get("workers", 1)),
            perturb_prob=float(values.get("gp.perturb_prob", 0.0)),
            decoder_pool_per_chain=bool(values.get("decoder.per_chain_process", False)),
            lsbo_delta=(
                float(values["lsbo.delta"]) if "lsbo.delta" in values else None
            ),
            decoder_spec=decoder_spec,
            objective_spec=objective_spec,
            gp_settings=gp_settings,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def config_echo(values: Mapping, config: RunConfig) -> list[str]:
    """Human-readable echo of the effective configuration."""
    lines = [f"seed = {config.seed}"]
    for key in sorted(values):
        if key == "seed":
            continue
        value = values[key]
        if isinstance(value, list):
            value = ", ".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    if "pcn.chains" not in values:
        lines.append(f"pcn.chains = {config.resolved_chains}  # resolved default")
    return lines
