"""Deterministic latent-to-structure decoding.

Three decoder kinds share one contract: identical latents decode to
identical structures, and an all-zero fingerprint is replaced by the
spec's fallback structure so the GP never sees a zero row.

* ``linear_threshold`` - counts[j] = 1[(W z + b)[j] > 0]; optionally
  rounded non-negative counts instead of bits.
* ``sequence_argmax`` - an affine map of z gives per-position token
  logits; the arg-max token sequence is folded into a count fingerprint
  by counting token bigrams, so the fingerprint length is vocab^2.
* ``external`` - a child process speaking newline-delimited JSON over
  stdin/stdout (protocol below). The client applies the zero-fingerprint
  fallback, so external decoders may return raw zeros.

Wire protocol (UTF-8, one JSON object per line, ids strictly increasing,
replies in request order):

    -> {"id": 1, "op": "info"}
    <- {"id": 1, "latent_dim": 16, "fingerprint_len": 64}
    -> {"id": 2, "op": "decode_map", "z": [0.1, ...]}
    <- {"id": 2, "fingerprint": [0, 1, ...], "label": null}
    <- {"id": 2, "error": "..."}        (any request may fail)
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import CowboysError, Fingerprint, RngStream, Structure, as_latent


class DecoderProtocolError(CowboysError):
    """External decoder timeout, malformed reply, or shape mismatch."""

    def __init__(self, message: str, payload: object = None):
        super().__init__(f"decoder protocol failure: {message}")
        self.payload = payload


def default_fallback(fingerprint_len: int) -> Structure:
    """Designated stand-in for latents that would decode to all zeros."""
    counts = (1,) + (0,) * (fingerprint_len - 1)
    return Structure(fingerprint=Fingerprint(counts), label="fallback")


@dataclass(frozen=True, eq=False)
class DecoderSpec:
    """Tagged description of a decoder; see module docstring for kinds."""

    kind: str
    latent_dim: int
    fingerprint_len: int
    weight: Optional[np.ndarray] = None  # (fingerprint_len, latent_dim)
    bias: Optional[np.ndarray] = None  # (fingerprint_len,)
    counts_mode: str = "binary"  # binary | rounded
    seq_positions: int = 0
    vocab: int = 0
    seq_weight: Optional[np.ndarray] = None  # (positions*vocab, latent_dim)
    seq_bias: Optional[np.ndarray] = None  # (positions*vocab,)
    command: Optional[tuple[str, ...]] = None
    timeout: float = 10.0
    fallback_structure: Optional[Structure] = None

    def __post_init__(self):
        if self.kind not in ("linear_threshold", "sequence_argmax", "external"):
            raise ValueError(f"unknown decoder kind {self.kind!r}")
        if self.counts_mode not in ("binary", "rounded"):
            raise ValueError(f"unknown counts mode {self.counts_mode!r}")
        if self.kind == "linear_threshold":
            w = np.asarray(self.weight, dtype=np.float64)
            b = np.asarray(self.bias, dtype=np.float64)
            if w.shape != (self.fingerprint_len, self.latent_dim):
                raise ValueError(
                    f"weight shape {w.shape} != "
                    f"({self.fingerprint_len}, {self.latent_dim})"
                )
            if b.shape != (self.fingerprint_len,):
                raise ValueError(f"bias shape {b.shape} != ({self.fingerprint_len},)")
            object.__setattr__(self, "weight", w)
            object.__setattr__(self, "bias", b)
        elif self.kind == "sequence_argmax":
            if self.seq_positions < 2 or self.vocab < 1:
                raise ValueError("sequence_argmax needs >= 2 positions, >= 1 tokens")
            if self.fingerprint_len != self.vocab**2:
                raise ValueError("fingerprint_len must equal vocab**2 for bigrams")
            w = np.asarray(self.seq_weight, dtype=np.float64)
            b = np.asarray(self.seq_bias, dtype=np.float64)
            if w.shape != (self.seq_positions * self.vocab, self.latent_dim):
                raise ValueError("seq_weight shape mismatch")
            if b.shape != (self.seq_positions * self.vocab,):
                raise ValueError("seq_bias shape mismatch")
            object.__setattr__(self, "seq_weight", w)
            object.__setattr__(self, "seq_bias", b)
        elif self.kind == "external":
            if not self.command:
                raise ValueError("external decoder needs a launch command")
        if self.fallback_structure is None:
            object.__setattr__(
                self, "fallback_structure", default_fallback(self.fingerprint_len)
            )
        if self.fallback_structure.fingerprint.is_zero:
            raise ValueError("fallback structure must have a nonzero fingerprint")


def linear_threshold_spec(
    latent_dim: int,
    fingerprint_len: int,
    rng: RngStream,
    counts_mode: str = "binary",
    bias_scale: float = 0.0,
) -> DecoderSpec:
    """Random linear-threshold decoder instance from a stream."""
    gen = rng.generator()
    w = gen.standard_normal((fingerprint_len, latent_dim))
    b = bias_scale * gen.standard_normal(fingerprint_len)
    return DecoderSpec(
        kind="linear_threshold",
        latent_dim=latent_dim,
        fingerprint_len=fingerprint_len,
        weight=w,
        bias=b,
        counts_mode=counts_mode,
    )


def sequence_argmax_spec(
    latent_dim: int, positions: int, vocab: int, rng: RngStream
) -> DecoderSpec:
    gen = rng.generator()
    w = gen.standard_normal((positions * vocab, latent_dim))
    b = gen.standard_normal(positions * vocab)
    return DecoderSpec(
        kind="sequence_argmax",
        latent_dim=latent_dim,
        fingerprint_len=vocab**2,
        seq_positions=positions,
        vocab=vocab,
        seq_weight=w,
        seq_bias=b,
    )


class Decoder:
    """Runtime wrapper around a DecoderSpec with a decode-call counter."""

    def __init__(self, spec: DecoderSpec):
        self.spec = spec
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return self._calls

    @property
    def latent_dim(self) -> int:
        return self.spec.latent_dim

    @property
    def fingerprint_len(self) -> int:
        return self.spec.fingerprint_len

    def _count(self, n: int = 1) -> None:
        with self._lock:
            self._calls += n

    def decode(self, z: np.ndarray) -> Structure:
        raise NotImplementedError

    def decode_batch(self, zs: np.ndarray) -> list[Structure]:
        return [self.decode(z) for z in zs]

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _guard_zero(self, counts: np.ndarray, label: Optional[str]) -> Structure:
        if not counts.any():
            return self.spec.fallback_structure
        return Structure(fingerprint=Fingerprint.from_array(counts), label=label)


class LinearThresholdDecoder(Decoder):
    def _counts(self, acts: np.ndarray) -> np.ndarray:
        if self.spec.counts_mode == "binary":
            return (acts > 0).astype(np.int64)
        return np.maximum(0, np.rint(acts)).astype(np.int64)

    def decode(self, z: np.ndarray) -> Structure:
        z = as_latent(z, self.spec.latent_dim)
        self._count()
        acts = self.spec.weight @ z + self.spec.bias
        return self._guard_zero(self._counts(acts), None)

    def decode_batch(self, zs: np.ndarray) -> list[Structure]:
        zs = np.asarray(zs, dtype=np.float64)
        self._count(len(zs))
        acts = zs @ self.spec.weight.T + self.spec.bias
        counts = self._counts(acts)
        return [self._guard_zero(row, None) for row in counts]


class SequenceArgmaxDecoder(Decoder):
    def _tokens(self, z: np.ndarray) -> np.ndarray:
        logits = (self.spec.seq_weight @ z + self.spec.seq_bias).reshape(
            self.spec.seq_positions, self.spec.vocab
        )
        return np.argmax(logits, axis=1)

    def decode(self, z: np.ndarray) -> Structure:
        z = as_latent(z, self.spec.latent_dim)
        self._count()
        tokens = self._tokens(z)
        counts = np.zeros(self.spec.fingerprint_len, dtype=np.int64)
        bigrams = tokens[:-1] * self.spec.vocab + tokens[1:]
        np.add.at(counts, bigrams, 1)
        label = "".join(chr(ord("a") + int(t) % 26) for t in tokens)
        return self._guard_zero(counts, label)


class ExternalDecoder(Decoder):
    """Client for a decoder child process speaking the wire protocol.

    One outstanding request per connection; request ids strictly increase
    and every reply id must match the id just sent.
    """

    def __init__(self, spec: DecoderSpec):
        super().__init__(spec)
        self._proc = subprocess.Popen(
            list(spec.command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self._next_id = 1
        self._io_lock = threading.Lock()
        self._replies: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self.handshake()

    def _read_loop(self) -> None:
        for line in self._proc.stdout:
            self._replies.put(line)
        self._replies.put(None)  # EOF marker

    def _request(self, payload: dict) -> dict:
        with self._io_lock:
            req_id = self._next_id
            self._next_id += 1
            payload = {"id": req_id, **payload}
            try:
                self._proc.stdin.write(json.dumps(payload) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, ValueError) as exc:
                raise DecoderProtocolError(f"write failed: {exc}") from exc
            try:
                line = self._replies.get(timeout=self.spec.timeout)
            except queue.Empty:
                raise DecoderProtocolError(
                    f"timeout after {self.spec.timeout}s", payload
                ) from None
            if line is None:
                raise DecoderProtocolError("decoder closed its output", payload)
            try:
                reply = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DecoderProtocolError("unparseable reply", line) from exc
            if not isinstance(reply, dict) or reply.get("id") != req_id:
                raise DecoderProtocolError(
                    f"reply id {reply.get('id')!r} != request id {req_id}", reply
                )
            if "error" in reply:
                raise DecoderProtocolError(f"decoder error: {reply['error']}", reply)
            return reply

    def handshake(self) -> tuple[int, int]:
        reply = self._request({"op": "info"})
        try:
            d, length = int(reply["latent_dim"]), int(reply["fingerprint_len"])
        except (KeyError, TypeError, ValueError):
            raise DecoderProtocolError("malformed info reply", reply) from None
        if d != self.spec.latent_dim or length != self.spec.fingerprint_len:
            raise DecoderProtocolError(
                f"dimension mismatch: decoder declares ({d}, {length}), "
                f"configured ({self.spec.latent_dim}, {self.spec.fingerprint_len})",
                reply,
            )
        return d, length

    def decode(self, z: np.ndarray) -> Structure:
        z = as_latent(z, self.spec.latent_dim)
        self._count()
        reply = self._request({"op": "decode_map", "z": [float(v) for v in z]})
        fp = reply.get("fingerprint")
        if not isinstance(fp, list) or len(fp) != self.spec.fingerprint_len:
            raise DecoderProtocolError("bad fingerprint shape", reply)
        try:
            counts = np.asarray([int(v) for v in fp], dtype=np.int64)
        except (TypeError, ValueError):
            raise DecoderProtocolError("non-integer fingerprint", reply) from None
        if np.any(counts < 0):
            raise DecoderProtocolError("negative fingerprint entry", reply)
        return self._guard_zero(counts, reply.get("label"))

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()


class PooledExternalDecoder(Decoder):
    """One external process per worker thread, same results either way.

    Decoding is deterministic, so funnelling all chains through one
    connection or giving each chain its own process must produce identical
    output; this pool exists purely to remove the serialization point when
    chains run concurrently. Threads are bound to processes round-robin on
    first use.
    """

    def __init__(self, spec: DecoderSpec, pool_size: int):
        super().__init__(spec)
        if pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        self._members = [ExternalDecoder(spec) for _ in range(pool_size)]
        self._bindings: dict[int, ExternalDecoder] = {}
        self._next_member = 0
        self._bind_lock = threading.Lock()

    @property
    def pool_size(self) -> int:
        return len(self._members)

    def _member(self) -> ExternalDecoder:
        ident = threading.get_ident()
        member = self._bindings.get(ident)
        if member is None:
            with self._bind_lock:
                member = self._bindings.get(ident)
                if member is None:
                    member = self._members[self._next_member % len(self._members)]
                    self._next_member += 1
                    self._bindings[ident] = member
        return member

    def decode(self, z: np.ndarray) -> Structure:
        self._count()
        structure = self._member().decode(z)
        return structure

    def close(self) -> None:
        for member in self._members:
            member.close()


def make_decoder(spec: DecoderSpec, pool_size: int = 1) -> Decoder:
    if spec.kind == "linear_threshold":
        return LinearThresholdDecoder(spec)
    if spec.kind == "sequence_argmax":
        return SequenceArgmaxDecoder(spec)
    if pool_size > 1:
        return PooledExternalDecoder(spec, pool_size)
    return ExternalDecoder(spec)


def decode_map(spec: DecoderSpec, z: np.ndarray) -> Structure:
    """Most-likely decoding of one latent under the spec's decoder.

    For the external kind prefer holding a single ExternalDecoder open via
    ``make_decoder``; this convenience spawns and tears down a process per
    call.
    """
    dec = make_decoder(spec)
    try:
        return dec.decode(z)
    finally:
        dec.close()


def external_handshake(spec: DecoderSpec) -> tuple[int, int]:
    """Declared (latent_dim, fingerprint_len) of an external decoder."""
    dec = ExternalDecoder(spec)
    try:
        return dec.latent_dim, dec.fingerprint_len
    finally:
        dec.close()


def parse_command(command: str) -> tuple[str, ...]:
    return tuple(shlex.split(command))


def load_weights(path) -> tuple[np.ndarray, np.ndarray]:
    """Read the portable weights file: 'd L' header, d rows of L floats
    for the latent-major matrix, then one row of L biases. Returns
    (weight, bias) with weight transposed to (L, d)."""
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise ValueError("weights file too short")
    d, length = int(tokens[0]), int(tokens[1])
    values = [float(t) for t in tokens[2:]]
    if len(values) != d * length + length:
        raise ValueError(
            f"weights file holds {len(values)} values, expected {d * length + length}"
        )
    w_latent_major = np.asarray(values[: d * length]).reshape(d, length)
    bias = np.asarray(values[d * length :])
    return w_latent_major.T.copy(), bias


def save_weights(path, weight: np.ndarray, bias: np.ndarray) -> None:
    """Write (L, d) weight and (L,) bias in the portable format."""
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    length, d = weight.shape
    lines = [f"{d} {length}"]
    for row in weight.T:  # latent-major on disk
        lines.append(" ".join(repr(float(v)) for v in row))
    lines.append(" ".join(repr(float(v)) for v in bias))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
