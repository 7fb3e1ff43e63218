"""compx: instruction-driven image compression toolkit.

An object-structured block codec with spatial bit allocation, a typed
compression-plan schema parsed from natural language, and an iterative
refinement loop that tunes quality factors until size/quality targets hold.
"""

__version__ = "0.1.0"
