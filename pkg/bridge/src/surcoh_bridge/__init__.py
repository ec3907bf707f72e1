"""Sidecar server speaking the surcoh bridge protocol over stdio.

One JSON request per stdin line, one JSON response per stdout line, in
order.  Backends: a deterministic stub (lookup table plus hashed fallback,
no model download) and GPT-2 via transformers for the neural path.
"""

__version__ = "0.1.0"
