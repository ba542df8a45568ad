"""Policy training and evaluation."""
