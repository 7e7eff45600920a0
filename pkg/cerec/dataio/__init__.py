"""Readers and writers of the rating, feature, model, plan and estimates files."""
