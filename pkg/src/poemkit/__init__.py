"""poemkit: two-stage multi-view hand mesh reconstruction at desk scale."""

__version__ = "0.1.0"

from . import basis, decoder, fitting, geometry, hand, metrics, root_stage, synth, tensor  # noqa: F401
