"""Recurrence entanglement purification of two-qubit states.

Modules: :mod:`~epp.bellmat` (states and gates in the Bell basis),
:mod:`~epp.protocols` (steps and drivers), :mod:`~epp.analytic` (closed
forms), :mod:`~epp.ensemble` (random-state statistics), :mod:`~epp.yieldsim`
(survivor distributions) and :mod:`~epp.cli`.
"""

__version__ = "0.1.0"
