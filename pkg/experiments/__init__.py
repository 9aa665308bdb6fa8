"""Experiment orchestration: epsilon scans, the lemma suite and artifact writers."""
