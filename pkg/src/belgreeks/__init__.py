"""Monte Carlo delta and gamma for jump-diffusions via integration-by-parts weights."""

__version__ = "0.1.0"
