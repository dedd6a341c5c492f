"""Memorize 50 random sentence pairs with every attention variant.

Reports the first epoch whose per-token NLL falls below 0.1 and the share
of training tokens that greedy decoding reproduces.
"""
from _common import parser, run

from tempattn import experiments

if __name__ == "__main__":
    ap = parser(__doc__, ["global", "temporal", "coverage", "local"])
    ap.set_defaults(seeds="1")
    run(ap.parse_args(), experiments.MEMORIZATION, experiments.run_memorization, "token_acc")
