__version__ = '0.0.1.dev0'
__internal_version__ = 1
