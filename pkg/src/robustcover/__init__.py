"""Adversarial covering-number bounds, Maurey covers and empirical lemma checks for MLPs."""
__version__ = "0.1.0"
