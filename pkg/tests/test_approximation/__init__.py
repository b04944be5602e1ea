"""
Tests for the FFN linearity profile and Hadamard calibration
"""
