"""Ordered Weisfeiler-Lehman structural prompts for LLM graph reasoning."""

__version__ = "0.1.0"
