"""
Tests for the model config and the run manifest
"""
