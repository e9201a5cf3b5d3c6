"""copyrank: rank A/B-test copy variants by predicted relative CTR, explain
wins over interpretable marketing attributes, and surface creative
opportunities."""

__version__ = "0.1.0"
