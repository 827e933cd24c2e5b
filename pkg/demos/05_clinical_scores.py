"""Compute CHA2DS2-VASc, HATCH and APPLE on merged patient rows.

The component tables live in JSON under afrec/resources/scores/, missing
score inputs are mode-imputed on the train split, and every score is
binarized at >= 2.
"""

from collections import Counter
from datetime import date

from afrec.clinical_scores import apple, chads2_vasc, hatch, score_dataset
from afrec.data_model import FeatureVector
from afrec.pipeline import Resources, build_cohort, build_dataset
from afrec.synthetic_corpus import GeneratorConfig, generate

# Hand-built vectors first: the component sums are easy to follow.
examples = [
    ("female, 76, hypertensive", {"gender": 1.0, "age": 76.0, "hypertension": 1.0}),
    ("male, 80, COPD", {"gender": 0.0, "age": 80.0, "copd": 1.0}),
    ("70y, LVEF 45, LA 45mm", {"gender": 0.0, "age": 70.0, "lvef": 45.0,
                               "la_diameter": 45.0}),
]
for label, cells in examples:
    v = FeatureVector("demo", date(2020, 1, 1), cells)
    print(f"{label:28s} chads2_vasc={chads2_vasc(v)} hatch={hatch(v)} apple={apple(v)}")

# Now over a synthetic cohort.
res = Resources.bundled()
corpus = generate(GeneratorConfig(n_patients=150, seed=5))
cohort = build_cohort(corpus.reports, corpus.coded, res, corpus.death_dates)
dataset = build_dataset(cohort, res.schema, seed=5, test_fraction=0.25)

scored = score_dataset(dataset)
print(f"\nscored {len(scored)} patients")
for name in ("chads2_vasc", "hatch", "apple"):
    values = Counter(s.scores[name] for s in scored)
    positive = sum(s.predictions[name] for s in scored)
    print(f"  {name:12s} distribution={dict(sorted(values.items()))} "
          f"positive@>=2: {positive}/{len(scored)}")
