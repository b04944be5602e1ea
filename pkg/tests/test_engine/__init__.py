"""
Tests for the decoder engine: numeric kernels, tokens, weights, tensor I/O and the model
"""
