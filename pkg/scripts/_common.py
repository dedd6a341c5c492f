"""Shared argument handling for the experiment scripts."""
import argparse
import json
import logging
from dataclasses import asdict, replace


def parser(description, variants):
    ap = argparse.ArgumentParser(description=description)
    ap.add_argument("--variants", default=",".join(variants), help="comma-separated attention variants")
    ap.add_argument("--seeds", default="1,2,3", help="comma-separated training seeds")
    ap.add_argument("--epochs", type=int, help="override the experiment's epoch budget")
    ap.add_argument("--json", help="also write all run reports to this file")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(args, base, fn, label):
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    exp = base if args.epochs is None else replace(base, train=replace(base.train, max_epochs=args.epochs))
    reports = []
    for v in args.variants.split(","):
        vals = []
        for s in (int(x) for x in args.seeds.split(",")):
            r = fn(v, s, exp)
            vals.append(r.value)
            reports.append(asdict(r))
            extra = " ".join(f"{k}={x:.4g}" if isinstance(x, float) else f"{k}={x}" for k, x in r.extra.items())
            print(f"{v:9s} seed={s} {label}={r.value:.4f} best_dev={min(r.dev_history):.4f} "
                  f"time={r.seconds:.0f}s {extra}", flush=True)
        print(f"{v:9s} mean {label}={sum(vals) / len(vals):.4f}", flush=True)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as f:
            json.dump(reports, f, indent=1)
