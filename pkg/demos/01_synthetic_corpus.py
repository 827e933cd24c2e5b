"""Generate a synthetic clinical corpus and look at what comes out.

The generator is the oracle for the whole pipeline: it plants every fact
(conditions, labs, drugs, echo findings) in both the report text and the
coded rows, and records the ground truth in a manifest.
"""

from collections import Counter

from afrec.synthetic_corpus import GeneratorConfig, generate

config = GeneratorConfig(n_patients=50, seed=7)
corpus = generate(config)

print(f"patients: {config.n_patients}")
print(f"reports:  {len(corpus.reports)}")
print(f"coded rows: {len(corpus.coded)}")
print(f"deaths on file: {len(corpus.death_dates)}")

labels = Counter(t.label.value for t in corpus.truth)
print("\nground-truth labels:", dict(labels))
excluded = Counter(t.exclusion_reason for t in corpus.truth if t.excluded)
print("exclusions:", dict(excluded))

# One onset report, as the NLP stages will see it.
first = corpus.truth[0]
report = next(r for r in corpus.reports if r.report_id == first.onset_report_id)
print(f"\n--- onset report {report.report_id} ({report.date}) ---")
print(report.body)

print("\n--- planted cells for that patient (first 12) ---")
for name, value in list(first.cells.items())[:12]:
    print(f"  {name} = {value}")
