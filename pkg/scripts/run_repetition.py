"""Train on the emit-each-word-once task and count repeated phrases in greedy output."""
from _common import parser, run

from tempattn import experiments

if __name__ == "__main__":
    args = parser(__doc__, ["temporal", "global"]).parse_args()
    run(args, experiments.REPETITION, experiments.run_repetition, "repetitions")
