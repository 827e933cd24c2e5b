"""AF recurrence pipeline toolkit.

Converts free-text discharge reports plus coded EHR rows into a
patient-level tabular dataset, applies rule-based silver labeling, computes
clinical risk scores and first-party linear classifiers, and evaluates all
of them with a metrics and demographic-bias suite. A built-in synthetic
corpus generator provides exact oracles for every stage.
"""

__version__ = "0.1.0"
