"""Char-level styled-text transformer lab.

Train a causal char transformer with metadata style conditioning,
fine-tune a section classifier, generate styled text, and project
title latents to 2-D scatter plots.
"""

__version__ = "0.1.0"
