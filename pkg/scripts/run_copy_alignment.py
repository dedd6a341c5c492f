"""Train copy models and score forced-decode alignments against the identity."""
from _common import parser, run

from tempattn import experiments

if __name__ == "__main__":
    args = parser(__doc__, ["temporal", "global"]).parse_args()
    run(args, experiments.COPY, experiments.run_copy_alignment, "F1")
