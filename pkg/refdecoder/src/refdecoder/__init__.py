"""Reference external decoder process.

Speaks the decoder wire protocol over stdin/stdout: newline-delimited
UTF-8 JSON, one message per line, replies strictly in request order.

    -> {"id": 1, "op": "info"}
    <- {"id": 1, "latent_dim": 4, "fingerprint_len": 8}
    -> {"id": 2, "op": "decode_map", "z": [0.1, -0.3, ...]}
    <- {"id": 2, "fingerprint": [1, 0, ...], "label": null}
    <- {"id": 2, "error": "..."}          (malformed requests)

Decoding is the deterministic linear threshold counts[j] = 1 if
(W z + b)[j] > 0 else 0, with weights read from a portable plain-text
file (header "d L", then d latent-major rows of L floats, then one row
of L biases). The all-zero fingerprint is returned as-is: the fallback
substitution is the client's job, so every decoder implementation shares
one guard.

Standard library only, so the conformance suite runs anywhere. To serve
a different generative model, replace ``DecoderWeights.decode`` with the
model's most-likely decoding and keep the request loop untouched.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Iterable, Optional, TextIO


class WeightsError(ValueError):
    """Malformed weights file."""


class DecoderWeights:
    """Linear-threshold decoder parameters: W (d x L, latent-major), b (L)."""

    def __init__(self, matrix: list[list[float]], bias: list[float]):
        self.latent_dim = len(matrix)
        self.fingerprint_len = len(bias)
        for row in matrix:
            if len(row) != self.fingerprint_len:
                raise WeightsError("matrix row length does not match the bias length")
        self.matrix = matrix
        self.bias = bias

    @classmethod
    def load(cls, path) -> "DecoderWeights":
        with open(path, "r", encoding="utf-8") as fh:
            tokens = fh.read().split()
        if len(tokens) < 2:
            raise WeightsError("weights file needs a 'd L' header")
        try:
            d, length = int(tokens[0]), int(tokens[1])
            values = [float(t) for t in tokens[2:]]
        except ValueError as exc:
            raise WeightsError(f"unparseable weights file: {exc}") from exc
        if d < 1 or length < 1:
            raise WeightsError("dimensions must be >= 1")
        if len(values) != d * length + length:
            raise WeightsError(
                f"expected {d * length + length} values, found {len(values)}"
            )
        matrix = [values[i * length : (i + 1) * length] for i in range(d)]
        return cls(matrix, values[d * length :])

    def save(self, path) -> None:
        lines = [f"{self.latent_dim} {self.fingerprint_len}"]
        for row in self.matrix:
            lines.append(" ".join(repr(v) for v in row))
        lines.append(" ".join(repr(v) for v in self.bias))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    def decode(self, z: list[float]) -> list[int]:
        """Most-likely decoding; swap this out to serve a real model."""
        counts = []
        for j in range(self.fingerprint_len):
            activation = self.bias[j]
            for i in range(self.latent_dim):
                activation += z[i] * self.matrix[i][j]
            counts.append(1 if activation > 0 else 0)
        return counts


def _error(req_id, message: str) -> dict:
    return {"id": req_id, "error": message}


def handle_request(weights: DecoderWeights, line: str, last_id: Optional[int]) -> tuple[dict, Optional[int]]:
    """One request -> one reply; never raises on bad input."""
    try:
        request = json.loads(line)
    except json.JSONDecodeError:
        return _error(None, "unparseable request"), last_id
    if not isinstance(request, dict):
        return _error(None, "request must be an object"), last_id

    req_id = request.get("id")
    if not isinstance(req_id, int):
        return _error(None, "missing integer id"), last_id
    if last_id is not None and req_id <= last_id:
        return _error(req_id, "ids must strictly increase"), last_id

    op = request.get("op")
    if op == "info":
        return (
            {
                "id": req_id,
                "latent_dim": weights.latent_dim,
                "fingerprint_len": weights.fingerprint_len,
            },
            req_id,
        )
    if op == "decode_map":
        z = request.get("z")
        if not isinstance(z, list) or len(z) != weights.latent_dim:
            return _error(req_id, "z must be a list of latent_dim floats"), req_id
        try:
            z = [float(v) for v in z]
        except (TypeError, ValueError):
            return _error(req_id, "z entries must be numbers"), req_id
        return {"id": req_id, "fingerprint": weights.decode(z), "label": None}, req_id
    return _error(req_id, f"unknown op {op!r}"), req_id


def serve(weights: DecoderWeights, stdin: TextIO, stdout: TextIO) -> None:
    """Answer requests until the input closes."""
    last_id: Optional[int] = None
    for line in stdin:
        if not line.strip():
            continue
        reply, last_id = handle_request(weights, line, last_id)
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()


def main(argv: Optional[Iterable[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="refdecoder", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    serve_cmd = sub.add_parser("serve", help="answer protocol requests on stdio")
    serve_cmd.add_argument("--weights", required=True, help="weights file path")
    args = parser.parse_args(None if argv is None else list(argv))

    try:
        weights = DecoderWeights.load(args.weights)
    except (OSError, WeightsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    serve(weights, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
