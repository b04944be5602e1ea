"""
CAPA test suites, one package per source package
"""
