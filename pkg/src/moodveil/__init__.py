"""Mood prediction from keystroke logs with identity-obfuscating representations."""
from .data_model import (DailySample, DataError, KeystrokeEvent, LabelRecord, MoodClass, Roster,
                         discretize_score, filter_participants, load_events, load_labels,
                         window_events)
from .synthgen import SynthConfig, generate, generate_samples

__version__ = "0.1.0"

__all__ = [
    "DailySample", "DataError", "KeystrokeEvent", "LabelRecord", "MoodClass", "Roster",
    "discretize_score", "filter_participants", "load_events", "load_labels", "window_events",
    "SynthConfig", "generate", "generate_samples", "__version__",
]
