"""
Reskam builds Birkhoff and Kolmogorov normal forms of a planetary mean-motion resonance with a Poisson-series
manipulator, and checks the resulting KAM torus against direct integrations.

The easiest way to get started is to run a pipeline stage.

>>> import reskam
>>>
>>> config = reskam.load_config("configs/hd60532.ini")
>>> artifact = reskam.run("calibrate", config, out="build")
>>> artifact.scalars["omega1"]

The series algebra works on its own.

>>> J1 = reskam.SqrtSeries.action(1, degree_cap=6)
>>> reskam.pseries.dumps(J1 * J1)

See the README.md for the stages and the configuration file.
"""

from . import pseries
from ._pipeline import Pipeline, PipelineManifest, export, run
from .config import PipelineConfig, load_config, parse_config
from .hambuild import OrbitalConfig
from .pseries import ActionSeries, SqrtSeries

__all__ = (
    "run",
    "export",
    "Pipeline",
    "PipelineManifest",
    "PipelineConfig",
    "load_config",
    "parse_config",
    "OrbitalConfig",
    "SqrtSeries",
    "ActionSeries",
    "pseries",
)
