"""
FFCE Segmenter - Utilities
Environment settings, logging setup, and the verification oracle suite.
"""
