"""
Tests for sinks, divergence, the FLOPs model and the report writers
"""
