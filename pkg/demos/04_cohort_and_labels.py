"""Run the inclusion, exclusion and silver-labeling flow against truth.

Inclusion is double-checked: a coded AF onset must be confirmed by a report
that independently classifies as an onset. Recurrence labels come from the
(onset+30d, onset+730d] follow-up window: AF evidence means Recurred, a
sinus-rhythm ECG means NoRecurrence, anything else is Discarded.
"""

from collections import Counter

from afrec.pipeline import Resources, build_cohort
from afrec.synthetic_corpus import GeneratorConfig, generate

res = Resources.bundled()
corpus = generate(GeneratorConfig(n_patients=120, seed=11))
cohort = build_cohort(corpus.reports, corpus.coded, res, corpus.death_dates)

rows = cohort.manifest_rows()
print(f"confirmed patients: {len(rows)}")
print("labels:", dict(Counter(r.label.value for r in rows)))
print("excluded:", dict(Counter(r.exclusion_reason for r in rows if r.excluded)))

truth = {t.patient_id: t for t in corpus.truth}
agreement = sum(
    1 for r in rows
    if truth[r.patient_id].label.value == r.label.value
    and truth[r.patient_id].onset_date == r.onset_date
    and truth[r.patient_id].excluded == r.excluded
)
print(f"\nexact agreement with ground truth: {agreement}/{len(rows)}")

print(f"\ndataset-eligible patients (labeled, not excluded): "
      f"{len(cohort.dataset_patients())}")
