"""Computed habit strength for next-day behavior prediction.

Subpackages map onto the stages of the pipeline:

- :mod:`habitflow.dynamics` -- habit strength / accessibility recurrences
- :mod:`habitflow.sensor` -- accelerometer traces to day-level outcomes
- :mod:`habitflow.features` -- survey, past-behavior, theory and combined feature sets
- :mod:`habitflow.learning` -- logistic regression and threshold selection
- :mod:`habitflow.metrics` / :mod:`habitflow.evaluation` -- grouped nested CV, random search
- :mod:`habitflow.simulator` -- synthetic cohorts with known ground truth
"""

from habitflow.dynamics import CognitiveParams, CognitiveState, DayEvent, trajectory
from habitflow.series import ParticipantSeries, Survey

__all__ = [
    "CognitiveParams",
    "CognitiveState",
    "DayEvent",
    "ParticipantSeries",
    "Survey",
    "trajectory",
]

__version__ = "0.1.0"
