"""Infer hidden bus power injections by ridge regression and check the
resulting operating point with an AC Newton-Raphson power flow."""

__version__ = "0.1.0"
