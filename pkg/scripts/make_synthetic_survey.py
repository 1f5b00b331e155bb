"""Write a simulated survey export plus a run config that points at it.

    python3 scripts/make_synthetic_survey.py --out-dir runs/synthetic --rows 302 --seed 0
"""

import argparse
import json
from pathlib import Path

from aplrkit.synthetic import survey_schema_dict, write_survey


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out-dir", default="runs/synthetic")
    p.add_argument("--rows", type=int, default=302)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=3000, help="boosting steps written into the config")
    args = p.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_survey(out / "survey.csv", n=args.rows, seed=args.seed)
    paper = json.loads((Path(__file__).resolve().parents[1] / "configs" / "paper.json").read_text())
    paper.update(data="survey.csv", encoding=survey_schema_dict())
    paper["hyperparams"]["boosting_steps"] = args.steps
    (out / "config.json").write_text(json.dumps(paper, indent=2) + "\n")
    print(out / "config.json")


if __name__ == "__main__":
    main()
