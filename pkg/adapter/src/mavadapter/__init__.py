"""Stdio bridge between the mavdet pipeline and a detection model.

The pipeline talks to its appearance backends over newline-delimited
JSON on stdio. This package is the other end of that wire: it loads a
model (or a built-in stub), letterboxes incoming frames to the model's
input size, and maps the resulting boxes back to request coordinates.
It shares no code with the pipeline; the protocol is the only contact
surface.
"""

__version__ = "0.1.0"
