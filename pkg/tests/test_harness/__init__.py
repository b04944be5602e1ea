"""
Tests for the artifact I/O, stage commands and the command-line front end
"""
