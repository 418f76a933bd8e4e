"""Command-recommendation pipeline for BIM authoring-tool usage logs.

Stages: log ingestion, actual-flow tracking (undo/redo resolution),
multi-language name alignment, redundancy mining, metadata augmentation,
workflow discovery, dataset assembly, sequence-model training, and a
recommendation service.
"""

__version__ = "0.1.0"
