"""Predicting abnormal laboratory values from single-lead ECG segments.

Submodules follow the pipeline: :mod:`waveform` (files and segments),
:mod:`labels` (blood-test events and label coding), :mod:`cohort` (split and
pairing), :mod:`loss` and :mod:`model` (masked BCE and the network),
:mod:`metrics` (AUC, CI, report), :mod:`synth` (synthetic cohort) and
:mod:`cli`.
"""

__version__ = "0.1.0"
