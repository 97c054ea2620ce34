"""Modular interlocking-loop soundtrack engine.

Generates a seeded library of bed, collage and announcement loops, verifies
that every pair interlocks at every legal trigger offset, runs the quantized
live layering state machine, and renders sessions to WAV offline or serves
them live over HTTP with a server-sent event feed.
"""

__version__ = "0.1.0"
