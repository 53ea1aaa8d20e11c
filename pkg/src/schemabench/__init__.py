"""Contract-driven evaluation harness for tool-using agents.

One canonical contract per tool feeds three interface conditions (prose,
JSON Schema, JSON Schema with structured diagnostics) over a deterministic
sandbox, so interface representation is the only thing that varies.
"""

__version__ = "0.1.0"
