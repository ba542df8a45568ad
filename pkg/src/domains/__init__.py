"""Benchmark domains: Canadian Traveler Problem, RockSample and Guess Who."""
