"""Synthetic operating-room digital twins and two-stream event detection.

The package is organised around a small data pipeline:

* :mod:`ortwin.sim` renders semantic-mask / depth recordings of scripted
  OR activity on a coarse top-down grid.
* :mod:`ortwin.model` and :mod:`ortwin.train` implement a two-stream
  cross-attention detector on top of the reverse-mode engine in
  :mod:`ortwin.autodiff`.
* :mod:`ortwin.segments` turns per-frame probabilities into scored time
  segments, and :mod:`ortwin.metrics` scores those against ground truth.
* :mod:`ortwin.storage` defines the on-disk formats and :mod:`ortwin.cli`
  exposes the whole pipeline as console subcommands.
"""

__version__ = "0.1.0"

from ortwin.vocab import EVENT_CLASSES, OBJECT_CLASSES

__all__ = ["EVENT_CLASSES", "OBJECT_CLASSES", "__version__"]
