"""Toolkit for bootstrapping machine translation for a new low-resource language.

Pipeline stages: raw-source ingestion and normalization, embedding-based
sentence alignment, BPE vocabulary learning and base-vocabulary extension,
train/eval dataset assembly with corpus statistics, BLEU / ChrF++ scoring,
evaluation reports, and a blinded human-annotation service.
"""

__version__ = "0.1.0"
