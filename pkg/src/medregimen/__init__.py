"""Medication regimen extraction from clinical conversation transcripts.

Tools for turning doctor-patient dialogue into structured medication regimen
entries (dosage and frequency per medication): synthetic corpus generation,
preprocessing, pointer-generator QA models, encoder pretraining on
summarization, baselines, evaluation, and an end-to-end extraction pipeline.
"""

__version__ = "0.1.0"

__all__ = ["MedicationRegimenExtractor", "__version__"]


def __getattr__(name: str):
    # Deferred so corpus-only workflows never import torch.
    if name == "MedicationRegimenExtractor":
        from medregimen.estimators import MedicationRegimenExtractor

        return MedicationRegimenExtractor
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
