#!/usr/bin/env python3
"""Line-oriented protocol v1 backend using the mock gazetteer rule.

One JSON request per stdin line, one JSON reply per stdout line.
  --short K      drop the last tag of sentence K
  --exit-after N exit without replying to request N+1
"""
import argparse
import hashlib
import json
import sys

from protocol_goldens import EN_MODEL_LABELS, dumps, mock_tags


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--short", type=int, default=None)
    parser.add_argument("--exit-after", type=int, default=None)
    args = parser.parse_args()
    served = 0
    for line in sys.stdin:
        if args.exit_after is not None and served >= args.exit_after:
            return
        served += 1
        msg = json.loads(line)
        if msg.get("proto_version") != 1:
            reply = {"proto_version": 1, "error": {"code": "unsupported_version", "message": "unsupported version"}}
        elif msg.get("method") == "healthcheck":
            labels = sorted(EN_MODEL_LABELS)
            reply = {"proto_version": 1, "model_id": "ndjson-mock",
                     "label_set_hash": hashlib.sha256("\n".join(labels).encode("utf-8")).hexdigest(),
                     "labels": labels, "max_batch": 8}
        else:
            tags = [mock_tags(s["tokens"]) for s in msg["sentences"]]
            if args.short is not None and args.short < len(tags):
                tags[args.short] = tags[args.short][:-1]
            reply = {"proto_version": 1, "request_id": msg["request_id"], "model_id": "ndjson-mock",
                     "latency_ms": 0, "sentences": [{"tags": t} for t in tags]}
        sys.stdout.write(dumps(reply) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
