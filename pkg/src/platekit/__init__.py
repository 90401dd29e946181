"""platekit: training-pipeline and evaluation tooling for Bangla license
plate detection and OCR.

Subpackages/modules
-------------------
annot       annotation model, Pascal VOC / YOLO / mask converters
detmetrics  IoU, binary accuracy, precision/recall/F1, timing summaries
augment     seedable phase-aware augmentation with label propagation
scheduler   two-stage adaptive training state machine + wire formats
textmetrics Levenshtein / CER / WER over Unicode text
seqdecode   beam-search decoder over pluggable log-prob providers
simharness  mock trainer, scenario runner, paper-style result tables
cli         the ``platekit`` executable
kernels     compiled hot loops with NumPy fallback
"""

__version__ = "0.1.0"
