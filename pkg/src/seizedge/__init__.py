"""Quantized edge-inference engine and evaluation pipeline for EEG seizure
detection: fixed-point model execution, training, weighted-majority-vote event
detection, and segment/event evaluation."""

from .labels import Phase

__all__ = ["Phase"]
__version__ = "0.1.0"
