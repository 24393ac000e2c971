"""Generate paired forget/remain prompts from a slot template.

Each pair fills the same template twice: once with the concept token to be
forgotten, once without it (with the leading article repaired). Dimension
subconcepts are split disjointly between train and test so evaluation never
sees a training combination. Run:

    python3 demos/prompt_pairs.py [--count N]
"""

import argparse
from collections import Counter

from diffunlearn.prompts import PromptTemplateSpec, gen_prompt_pairs


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--count", type=int, default=6, help="pairs per split")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    spec = PromptTemplateSpec()
    print(f"template: {spec.template}")
    for name, values in spec.dimensions.items():
        print(f"  {name}: {', '.join(values)}")
    print(f"  concept tokens: {', '.join(spec.concept_tokens)}\n")

    records = gen_prompt_pairs(spec, args.count, args.seed)
    for record in records:
        token = next(
            t for t in spec.concept_tokens if f" {t} " in f" {record['forget_prompt']} "
        )
        print(f"[{record['split']}] {record['id']}  (token: {token})")
        print(f"  forget: {record['forget_prompt']}")
        print(f"  remain: {record['remain_prompt']}")

    splits = Counter(r["split"] for r in records)
    print(f"\n{splits['train']} train pairs, {splits['test']} test pairs; "
          "subconcept pools are disjoint between the splits.")


if __name__ == "__main__":
    main()
