"""
Tests for contribution scoring, keep sets, policies and cache eviction
"""
