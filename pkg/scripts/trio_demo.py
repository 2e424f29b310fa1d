#!/usr/bin/env python3
"""Run the three-character chat demo on a canned script and print the lines.

Pass --live to talk to a real server instead (reads SYNERGOS_LLM_URL).
"""

import argparse
import json
import os
import sys

from synergos.cli import default_trio_roster, run_trio_chat
from synergos.gateway import GenParams, HttpGateway, ScriptedGateway

CANNED = [
    {"message": "Bonjour Jerome! How may I assist you today?", "to": "Jerome"},
    {"message": "Greetings, noble Bo! It is an honor to serve you.", "to": "Bo"},
    {"message": "Bonjour Tom! I see you're looking sharp today.", "to": "Tom"},
    {"message": "I can't be bothered with trivial inquiries, what with my "
                "cutting-edge tech startup to attend to.", "to": "Bo"},
    {"message": "Perhaps you could spare a moment to discuss the finer points "
                "of high society etiquette?", "to": "Jerome"},
    {"message": "I'm a barbarian, not some stuffy noble. But I'll listen if "
                "you've got good stories.", "to": "Tom"},
]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--live", action="store_true",
                        help="use the server at SYNERGOS_LLM_URL")
    parser.add_argument("--rounds", type=int, default=2)
    args = parser.parse_args()

    if args.live:
        url = os.environ.get("SYNERGOS_LLM_URL")
        if not url:
            print("set SYNERGOS_LLM_URL to use --live", file=sys.stderr)
            return 1
        gateway = HttpGateway(url)
    else:
        gateway = ScriptedGateway([json.dumps(m) for m in CANNED])

    roster = default_trio_roster(GenParams(temperature=0.9),
                                 order=("Bo", "Jerome", "Tom"))
    for record in run_trio_chat(gateway, roster, max_rounds=args.rounds):
        print(record.line())
    return 0


if __name__ == "__main__":
    sys.exit(main())
