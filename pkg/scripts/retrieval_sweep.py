#!/usr/bin/env python3
"""Table of retrieval scores across observation ages and decay constants.

Useful for eyeballing how fast old observations fall out of the top-k as
the decay constant moves away from the 0.03 default.
"""

import argparse

from synergos.gateway import hash_embedding
from synergos.memory import Observation, RetrievalParams, retrieval_score

AGES = (0, 1, 5, 10, 25, 50, 100, 250)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--decays", type=float, nargs="+",
                        default=[0.01, 0.03, 0.1])
    parser.add_argument("--importance", type=int, default=7,
                        help="raw importance rating 1..10 for every row")
    args = parser.parse_args()

    query = hash_embedding("what is the thermostat set to")
    texts = {
        "match": "the thermostat is set to a new temperature",
        "unrelated": "rent was added to the spreadsheet",
    }
    t_now = max(AGES)

    header = "decay   kind       " + "".join(f"age {a:<5}" for a in AGES)
    print(header)
    print("-" * len(header))
    for decay in args.decays:
        params = RetrievalParams(decay=decay)
        for kind, text in texts.items():
            cells = []
            for age in AGES:
                obs = Observation(text=text, turn=t_now - age,
                                  importance_raw=args.importance,
                                  embedding=hash_embedding(text))
                cells.append(f"{retrieval_score(obs, query, t_now, params):<9.3f}")
            print(f"{decay:<7.3g} {kind:<10} " + "".join(cells))


if __name__ == "__main__":
    main()
