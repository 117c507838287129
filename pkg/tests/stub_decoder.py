"""Minimal external-decoder stub for protocol tests.

Usage: python stub_decoder.py MODE [d] [L]

Modes:
    ok         - identity linear threshold over the first min(d, L) coords
    silent     - read requests, never reply
    malformed  - reply with unparseable junk
    wrong_id   - reply with id + 1000
    error      - reply {"id": ..., "error": "boom"} to every request
    zeros      - decode_map always returns the all-zero fingerprint
"""

import json
import sys


def main() -> None:
    mode = sys.argv[1]
    d = int(sys.argv[2]) if len(sys.argv) > 2 else 2
    length = int(sys.argv[3]) if len(sys.argv) > 3 else 2

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        req = json.loads(line)
        req_id = req.get("id")
        if mode == "silent":
            continue
        if mode == "malformed":
            print("this is not json")
            sys.stdout.flush()
            continue
        if mode == "wrong_id":
            print(json.dumps({"id": req_id + 1000, "fingerprint": [1] * length}))
            sys.stdout.flush()
            continue
        if mode == "error":
            print(json.dumps({"id": req_id, "error": "boom"}))
            sys.stdout.flush()
            continue

        if req.get("op") == "info":
            reply = {"id": req_id, "latent_dim": d, "fingerprint_len": length}
        elif req.get("op") == "decode_map":
            z = req["z"]
            if mode == "zeros":
                counts = [0] * length
            else:
                counts = [
                    1 if i < len(z) and z[i] > 0 else 0 for i in range(length)
                ]
            reply = {"id": req_id, "fingerprint": counts, "label": None}
        else:
            reply = {"id": req_id, "error": f"unknown op {req.get('op')!r}"}
        print(json.dumps(reply))
        sys.stdout.flush()


if __name__ == "__main__":
    main()
